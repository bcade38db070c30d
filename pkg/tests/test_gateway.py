"""Gateway pipeline tests: events to topics, commands to frames, registry."""

import json

import pytest

from zbgw.converters import builtin_catalog
from zbgw.gateway import (
    CorruptRegistry,
    Gateway,
    InvalidName,
    NameTaken,
    TopicScheme,
    UnknownDevice,
)
from zbgw.mqtt.broker import MqttBroker
from zbgw.mqtt.codec import Publish, Subscribe
from zbgw.telemetry import TelemetryStore
from zbgw.zigbee_sim import (
    CoordinatorConfig,
    Frame,
    LqiModel,
    Role,
    form_network,
)

from .helpers import Harness, add_device


@pytest.fixture
def rig():
    network = form_network(
        CoordinatorConfig("00124b00000000f0", (0.0, 0.0)),
        lqi_model=LqiModel(noise_enabled=False),
    )
    broker = MqttBroker()
    gateway = Gateway(network, builtin_catalog(), broker, TelemetryStore())
    harness = Harness(broker=broker)
    gateway.action_sink = harness.apply
    return network, gateway, harness


def join_co2(network, position=(5.0, 0.0), ieee="00124b00000000c2"):
    return add_device(network, ieee, position, model_id="co2-1")


def join_thermostat(network, *, sleepy=False, ieee="00124b00000000aa"):
    return add_device(
        network,
        ieee,
        (4.0, 0.0),
        model_id="thermostat-1",
        sleepy=sleepy,
        poll_interval=5.0 if sleepy else None,
    )


def co2_report(network, node, ppm, cluster=0x040D, attribute=0x0000):
    from zbgw.converters import AttributeReport

    return network.deliver(
        Frame(
            src=node.short_addr,
            dst=0x0000,
            cluster_id=cluster,
            payload=AttributeReport(cluster, attribute, ppm),
        )
    )


class TestJoinPipeline:
    def test_join_creates_record_and_bridge_event(self, rig):
        network, gateway, harness = rig
        watcher = harness.client("w").connect("watch")
        watcher.send(Subscribe(1, (("gw/bridge/event", 0),)))
        network.permit_join(254)
        node = join_co2(network)
        events = [json.loads(p.payload) for p in watcher.publishes()]
        joined = [e for e in events if e["type"] == "device_joined"]
        assert len(joined) == 1
        assert joined[0]["ieee_addr"] == node.ieee_addr
        assert gateway.record_for(node.ieee_addr).model_id == "co2-1"

    def test_default_friendly_name_is_ieee_hex(self, rig):
        network, gateway, _ = rig
        network.permit_join(254)
        node = join_co2(network)
        assert gateway.record_for(node.ieee_addr).friendly_name == node.ieee_addr


class TestReportPipeline:
    def test_state_published_retained_with_linkquality(self, rig):
        network, gateway, harness = rig
        network.permit_join(254)
        node = join_co2(network)
        co2_report(network, node, 800)
        topic = f"gw/{node.ieee_addr}"
        raw = harness.broker.retained_message(topic)
        assert raw is not None
        state = json.loads(raw)
        assert state["co2"] == 800
        assert 0 < state["linkquality"] <= 255

    def test_second_report_merges_and_replaces_retained(self, rig):
        network, gateway, harness = rig
        network.permit_join(254)
        node = join_co2(network)
        co2_report(network, node, 800)
        co2_report(network, node, 2150, cluster=0x0402)  # temperature attr
        state = json.loads(harness.broker.retained_message(f"gw/{node.ieee_addr}"))
        assert state["co2"] == 800
        assert state["temperature"] == 21.5

    def test_late_subscriber_sees_latest_state_only(self, rig):
        network, gateway, harness = rig
        network.permit_join(254)
        node = join_co2(network)
        co2_report(network, node, 700)
        co2_report(network, node, 900)
        late = harness.client("l").connect("late")
        late.send(Subscribe(1, ((f"gw/{node.ieee_addr}", 0),)))
        payloads = [json.loads(p.payload) for p in late.publishes()]
        assert len(payloads) == 1
        assert payloads[0]["co2"] == 900

    def test_unknown_definition_goes_to_bridge_log(self, rig):
        network, gateway, harness = rig
        watcher = harness.client("w").connect("watch")
        watcher.send(Subscribe(1, (("gw/bridge/log", 0),)))
        network.permit_join(254)
        node = add_device(network, "00124b00000000ee", (5.0, 0.0), model_id="exotic-99")
        co2_report(network, node, 800)
        logs = [json.loads(p.payload) for p in watcher.publishes()]
        assert any(e["type"] == "unsupported_device" for e in logs)
        assert harness.broker.retained_message(f"gw/{node.ieee_addr}") is None

    def test_converter_error_logged_not_dropped(self, rig):
        network, gateway, harness = rig
        watcher = harness.client("w").connect("watch")
        watcher.send(Subscribe(1, (("gw/bridge/log", 0),)))
        network.permit_join(254)
        node = join_co2(network)
        co2_report(network, node, 1, cluster=0x9999)  # unmapped cluster
        logs = [json.loads(p.payload) for p in watcher.publishes()]
        assert any(e["type"] == "converter_error" for e in logs)

    def test_telemetry_series_recorded(self, rig):
        network, gateway, _ = rig
        network.permit_join(254)
        node = join_co2(network)
        co2_report(network, node, 800)
        co2_report(network, node, 850)
        assert len(gateway.telemetry.query("mqtt.messages", 0, 1e9)) == 2
        trace = gateway.telemetry.lqi_trace(node.ieee_addr, 0, 1e9)
        assert len(trace) == 2


class TestCommands:
    def test_setpoint_command_delivers_raw_frame(self, rig):
        network, gateway, harness = rig
        network.permit_join(254)
        node = join_thermostat(network)
        pub = harness.client("p").connect("pub")
        pub.send(Publish(f"gw/{node.ieee_addr}/set", b'{"occupied_heating_setpoint": 21.5}'))
        delivered = [
            e for e in network.event_log if e["event"] == "frame_delivered" and e["dst"] != 0
        ]
        assert len(delivered) == 1
        assert delivered[0]["payload"]["raw_value"] == 2150
        assert delivered[0]["payload"]["attribute_id"] == 0x0012

    def test_command_result_published(self, rig):
        network, gateway, harness = rig
        network.permit_join(254)
        node = join_thermostat(network)
        watcher = harness.client("w").connect("watch")
        watcher.send(Subscribe(1, ((f"gw/{node.ieee_addr}/set/result", 0),)))
        result = gateway.execute_command(node.ieee_addr, {"occupied_heating_setpoint": 20})
        assert result["status"] == "ok"
        seen = json.loads(watcher.publishes()[-1].payload)
        assert seen["status"] == "ok"
        assert seen["transaction"] == result["transaction"]

    def test_command_to_sleepy_device_is_queued(self, rig):
        network, gateway, _ = rig
        network.permit_join(254)
        node = join_thermostat(network, sleepy=True)
        result = gateway.execute_command(node.ieee_addr, {"occupied_heating_setpoint": 20})
        assert result["status"] == "queued"
        assert network.pending_for(0x0000)

    def test_unknown_device(self, rig):
        _, gateway, _ = rig
        result = gateway.execute_command("ghost", {"x": 1})
        assert result["status"] == "error"
        assert "UnknownDevice" in result["errors"]["_device"]

    def test_not_writable_and_range_violations(self, rig):
        network, gateway, _ = rig
        network.permit_join(254)
        node = join_thermostat(network)
        result = gateway.execute_command(
            node.ieee_addr,
            {"local_temperature": 20, "occupied_heating_setpoint": 99},
        )
        assert result["status"] == "error"
        assert "NotWritable" in result["errors"]["local_temperature"]
        assert "RangeViolation" in result["errors"]["occupied_heating_setpoint"]

    def test_malformed_json_payload(self, rig):
        network, gateway, harness = rig
        network.permit_join(254)
        node = join_thermostat(network)
        watcher = harness.client("w").connect("watch")
        watcher.send(Subscribe(1, ((f"gw/{node.ieee_addr}/set/result", 0),)))
        pub = harness.client("p").connect("pub")
        pub.send(Publish(f"gw/{node.ieee_addr}/set", b"not json"))
        result = json.loads(watcher.publishes()[-1].payload)
        assert result["status"] == "error"


class TestOperatorActions:
    def test_permit_join_publishes_bridge_state(self, rig):
        network, gateway, harness = rig
        gateway.permit_join_request(60)
        state = json.loads(harness.broker.retained_message("gw/bridge/state"))
        assert state["permit_join"] is True
        assert state["until"] == 60.0
        network.tick(61)
        state = json.loads(harness.broker.retained_message("gw/bridge/state"))
        assert state["permit_join"] is False

    def test_rename_moves_retained_state(self, rig):
        network, gateway, harness = rig
        network.permit_join(254)
        node = join_co2(network)
        co2_report(network, node, 800)
        gateway.rename_device(node.ieee_addr, "office1_co2")
        assert harness.broker.retained_message(f"gw/{node.ieee_addr}") is None
        state = json.loads(harness.broker.retained_message("gw/office1_co2"))
        assert state["co2"] == 800
        # no stale retained topics under gw/# for the old name
        assert f"gw/{node.ieee_addr}" not in harness.broker.retained_topics()

    def test_rename_to_taken_name(self, rig):
        network, gateway, _ = rig
        network.permit_join(254)
        a = join_co2(network)
        b = join_thermostat(network)
        gateway.rename_device(a.ieee_addr, "sensor")
        with pytest.raises(NameTaken):
            gateway.rename_device(b.ieee_addr, "sensor")

    def test_rename_unknown_device(self, rig):
        _, gateway, _ = rig
        with pytest.raises(UnknownDevice):
            gateway.rename_device("ghost", "new")

    def test_rename_rejects_topic_unsafe_names(self, rig):
        network, gateway, _ = rig
        network.permit_join(254)
        node = join_co2(network)
        with pytest.raises(InvalidName):
            gateway.rename_device(node.ieee_addr, "a/b")

    def test_remove_clears_retained(self, rig):
        network, gateway, harness = rig
        network.permit_join(254)
        node = join_co2(network)
        co2_report(network, node, 800)
        gateway.remove_device(node.ieee_addr)
        assert harness.broker.retained_message(f"gw/{node.ieee_addr}") is None
        with pytest.raises(UnknownDevice):
            gateway.record_for(node.ieee_addr)


class TestRegistryPersistence:
    def test_save_load_round_trip(self, rig, tmp_path):
        network, gateway, _ = rig
        network.permit_join(254)
        join_co2(network)
        node = join_thermostat(network)
        gateway.rename_device(node.ieee_addr, "thermo1")
        path = tmp_path / "registry.json"
        gateway.save_registry(path)

        other = Gateway(
            form_network(CoordinatorConfig("00124b00000000f1")),
            builtin_catalog(),
            MqttBroker(),
            TelemetryStore(),
        )
        other.load_registry(path)
        assert other.devices == gateway.devices
        assert other.record_for("thermo1").model_id == "thermostat-1"

    def test_missing_file_yields_empty(self, rig, tmp_path):
        _, gateway, _ = rig
        gateway.load_registry(tmp_path / "nope.json")
        assert gateway.devices == {}

    def test_truncated_file_reports_position(self, rig, tmp_path):
        _, gateway, _ = rig
        path = tmp_path / "registry.json"
        path.write_text('{"devices": [{"ieee_addr": "00124b00')
        with pytest.raises(CorruptRegistry) as err:
            gateway.load_registry(path)
        assert err.value.line >= 1

    def test_wrong_schema_is_corrupt(self, rig, tmp_path):
        _, gateway, _ = rig
        path = tmp_path / "registry.json"
        path.write_text('{"devices": [{"surprise": true}]}')
        with pytest.raises(CorruptRegistry):
            gateway.load_registry(path)


class TestTopicScheme:
    def test_layout(self):
        topics = TopicScheme("gw")
        assert topics.state("office1_co2") == "gw/office1_co2"
        assert topics.command("office1_co2") == "gw/office1_co2/set"
        assert topics.command_result("x") == "gw/x/set/result"
        assert topics.bridge("state") == "gw/bridge/state"
