"""Orchestration core: simulator events in, MQTT topics out, and back.

The gateway is the Zigbee2MQTT-equivalent layer. It listens to network
events, runs reports through the converter registry, and publishes
merged device state (retained) under ``<base>/<friendly_name>``;
commands arrive on ``<base>/<friendly_name>/set`` and are converted to
write frames for the simulator. Bridge topics (``<base>/bridge/...``)
carry join events, state, logs, and metric mirrors.

Everything runs on one logical event loop: handlers are synchronous and
non-reentrant, fed in order by the simulator and broker.
"""

from __future__ import annotations

import itertools
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable

from .converters import (
    AttributeReport,
    ConverterRegistry,
    NotSupported,
    NotWritable,
    RangeViolation,
    UnknownExpose,
    convert_command,
    convert_report,
)
from .errors import GatewayError
from .mqtt.broker import MqttBroker
from .telemetry import TelemetryStore
from .zigbee_sim import Frame, ZigbeeNetwork

__all__ = [
    "CorruptRegistry",
    "DeviceRecord",
    "Gateway",
    "InvalidName",
    "NameTaken",
    "TopicScheme",
    "UnknownDevice",
]


class UnknownDevice(GatewayError):
    """No device with that friendly name."""


class NameTaken(GatewayError):
    """Rename target collides with an existing friendly name."""


class InvalidName(GatewayError):
    """Friendly names must be non-empty and topic-safe."""


class CorruptRegistry(GatewayError):
    """Registry file failed to parse; carries line/offset context."""

    def __init__(self, message: str, line: int = 0, offset: int = 0) -> None:
        super().__init__(f"{message} (line {line}, offset {offset})")
        self.line = line
        self.offset = offset


@dataclass
class TopicScheme:
    """Topic layout, Zigbee2MQTT style."""

    base: str = "gw"

    def state(self, friendly: str) -> str:
        return f"{self.base}/{friendly}"

    def command(self, friendly: str) -> str:
        return f"{self.base}/{friendly}/set"

    def command_result(self, friendly: str) -> str:
        return f"{self.base}/{friendly}/set/result"

    def bridge(self, kind: str) -> str:
        return f"{self.base}/bridge/{kind}"


@dataclass
class DeviceRecord:
    ieee_addr: str
    friendly_name: str
    model_id: str | None
    joined_at: float
    last_seen: float
    last_lqi: int = 0

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)


_RECORD_FIELDS = ("ieee_addr", "friendly_name", "model_id", "joined_at", "last_seen", "last_lqi")


def _validate_friendly(name: str) -> str:
    if not name or any(c in name for c in "/+#\x00"):
        raise InvalidName(f"friendly name must be non-empty and topic-safe: {name!r}")
    return name


class Gateway:
    """Binds one network, one converter registry, one broker, one store."""

    def __init__(
        self,
        network: ZigbeeNetwork,
        converters: ConverterRegistry,
        broker: MqttBroker,
        telemetry: TelemetryStore,
        *,
        base: str = "gw",
        registry_path: str | Path | None = None,
    ) -> None:
        self.network = network
        self.converters = converters
        self.broker = broker
        self.telemetry = telemetry
        self.topics = TopicScheme(base)
        self.registry_path = Path(registry_path) if registry_path else None
        self.devices: dict[str, DeviceRecord] = {}  # by ieee
        self._by_friendly: dict[str, str] = {}  # friendly -> ieee
        self._state_cache: dict[str, dict[str, Any]] = {}  # ieee -> merged values
        self._transactions = itertools.count(1)
        self.action_sink: Callable[[list], None] | None = None
        self.state_publishes = 0

        if self.registry_path:
            self.load_registry(self.registry_path)
        network.add_listener(self._on_sim_event)
        broker.subscribe_internal(self.topics.command("+"), self._on_set_message)

    # -- publishing ----------------------------------------------------------

    def _publish(self, topic: str, payload: Any, retain: bool = False, qos: int = 0) -> None:
        if isinstance(payload, (bytes, bytearray)):
            raw = bytes(payload)
        else:
            raw = json.dumps(payload, sort_keys=True).encode()
        actions = self.broker.publish(topic, raw, qos=qos, retain=retain, now=self.network.clock)
        if self.action_sink:
            self.action_sink(actions)

    def _bridge_log(self, entry: dict[str, Any]) -> None:
        self._publish(self.topics.bridge("log"), entry)

    def _bridge_event(self, entry: dict[str, Any]) -> None:
        self._publish(self.topics.bridge("event"), entry)

    def _record_metric(self, series: str, value: float) -> None:
        t = self.network.clock
        self.telemetry.record(series, t, value)
        self._publish(self.topics.bridge("metric"), {"series": series, "t": t, "value": value})

    # -- device lookups --------------------------------------------------------

    def record_for(self, friendly: str) -> DeviceRecord:
        ieee = self._by_friendly.get(friendly)
        if ieee is None:
            raise UnknownDevice(friendly)
        return self.devices[ieee]

    def device_views(self) -> list[dict[str, Any]]:
        """Records plus live state and writable exposes, for the API."""
        views = []
        for ieee, record in self.devices.items():
            view = record.as_dict()
            view["state"] = dict(self._state_cache.get(ieee, {}))
            view["exposes"] = []
            if record.model_id and record.model_id in self.converters:
                definition = self.converters.lookup(record.model_id)
                view["exposes"] = [asdict(e) for e in definition.exposes]
            views.append(view)
        return views

    # -- simulator event handling ------------------------------------------------

    def _on_sim_event(self, event: dict[str, Any]) -> None:
        kind = event["event"]
        if kind == "device_joined":
            self._handle_joined(event)
        elif kind == "frame_delivered" and event["dst"] == 0x0000:
            self._handle_report(event)
        elif kind in ("permit_join_opened", "permit_join_closed"):
            self._publish(
                self.topics.bridge("state"),
                {"permit_join": kind == "permit_join_opened", "until": event.get("until")},
                retain=True,
            )
        elif kind in ("pending_dropped", "pending_expired"):
            self._bridge_log({"type": kind, **{k: event[k] for k in ("frame_id", "dst")}})

    def _handle_joined(self, event: dict[str, Any]) -> None:
        ieee = event["ieee"]
        friendly = self.devices[ieee].friendly_name if ieee in self.devices else ieee
        record = DeviceRecord(
            ieee_addr=ieee,
            friendly_name=friendly,
            model_id=event.get("model_id"),
            joined_at=event["t"],
            last_seen=event["t"],
            last_lqi=event.get("lqi", 0),
        )
        self.devices[ieee] = record
        self._by_friendly[friendly] = ieee
        self._bridge_event(
            {
                "type": "device_joined",
                "ieee_addr": ieee,
                "friendly_name": friendly,
                "short_addr": event["short_addr"],
                "model_id": record.model_id,
            }
        )
        self._save_if_configured()

    def _handle_report(self, event: dict[str, Any]) -> None:
        node = self.network.nodes.get(event["src"])
        if node is None:
            return
        record = self.devices.get(node.ieee_addr)
        if record is None:
            return
        record.last_seen = event["t"]
        record.last_lqi = event.get("lqi") or 0

        payload = event.get("payload")
        if not isinstance(payload, dict) or "cluster_id" not in payload:
            return  # not an attribute report
        report = AttributeReport(
            cluster_id=payload["cluster_id"],
            attribute_id=payload["attribute_id"],
            raw_value=payload["raw_value"],
        )
        if not record.model_id or record.model_id not in self.converters:
            self._bridge_log(
                {
                    "type": "unsupported_device",
                    "friendly_name": record.friendly_name,
                    "model_id": record.model_id,
                }
            )
            return
        definition = self.converters.lookup(record.model_id)
        try:
            normalized = convert_report(definition, report, record.last_lqi)
        except GatewayError as exc:
            self._bridge_log(
                {
                    "type": "converter_error",
                    "friendly_name": record.friendly_name,
                    "error": exc.code,
                    "detail": str(exc),
                }
            )
            return
        cache = self._state_cache.setdefault(node.ieee_addr, {})
        cache.update(normalized.values)
        self._publish_state(record)
        self._record_metric("mqtt.messages", 1)
        self._record_metric(f"lqi.{record.friendly_name}", record.last_lqi)

    def _publish_state(self, record: DeviceRecord) -> None:
        state = {
            **self._state_cache.get(record.ieee_addr, {}),
            "linkquality": record.last_lqi,
        }
        self._publish(self.topics.state(record.friendly_name), state, retain=True)
        self.state_publishes += 1

    # -- commands -------------------------------------------------------------

    def _on_set_message(self, topic: str, payload: bytes, qos: int, retain: bool) -> None:
        friendly = topic.split("/")[1]
        try:
            values = json.loads(payload.decode("utf-8"))
            if not isinstance(values, dict):
                raise ValueError("command payload must be a JSON object")
        except (ValueError, UnicodeDecodeError) as exc:
            result = {
                "status": "error",
                "transaction": next(self._transactions),
                "errors": {"_payload": f"BadPayload: {exc}"},
            }
            self._publish(self.topics.command_result(friendly), result)
            return
        self.execute_command(friendly, values)

    def execute_command(self, friendly: str, values: dict[str, Any]) -> dict[str, Any]:
        """Convert and deliver writes; publishes and returns the result record."""
        transaction = next(self._transactions)
        result: dict[str, Any] = {"status": "ok", "transaction": transaction}
        errors: dict[str, str] = {}
        queued = False
        try:
            record = self.record_for(friendly)
            node = self.network.node_by_ieee(record.ieee_addr)
            if node is None or not node.joined:
                raise UnknownDevice(friendly)
            if not record.model_id or record.model_id not in self.converters:
                raise NotSupported(record.model_id or "unknown model")
            definition = self.converters.lookup(record.model_id)
            for name, value in values.items():
                try:
                    write = convert_command(definition, name, value)
                    status, _ = self.network.deliver(
                        Frame(
                            src=0x0000,
                            dst=node.short_addr,
                            cluster_id=write.cluster_id,
                            payload=write,
                        )
                    )
                    queued = queued or status == "queued"
                except (NotWritable, RangeViolation, UnknownExpose) as exc:
                    errors[name] = f"{exc.code}: {exc}"
        except (UnknownDevice, NotSupported) as exc:
            errors["_device"] = f"{exc.code}: {exc}"

        if errors:
            result["status"] = "error"
            result["errors"] = errors
        elif queued:
            result["status"] = "queued"
        self._publish(self.topics.command_result(friendly), result)
        return result

    # -- operator actions ----------------------------------------------------------

    def permit_join_request(self, duration_s: float) -> None:
        """Open/close pairing; bridge state is published off the sim event."""
        self.network.permit_join(duration_s)

    def rename_device(self, old: str, new: str) -> None:
        _validate_friendly(new)
        if new == old:
            return
        if new in self._by_friendly:
            raise NameTaken(new)
        record = self.record_for(old)
        del self._by_friendly[old]
        record.friendly_name = new
        self._by_friendly[new] = record.ieee_addr
        # move retained state atomically: publish under the new topic,
        # clear the old with a zero-byte retained publish
        if self._state_cache.get(record.ieee_addr):
            self._publish_state(record)
        self._publish(self.topics.state(old), b"", retain=True)
        self._bridge_event({"type": "device_renamed", "from": old, "to": new})
        self._save_if_configured()

    def remove_device(self, friendly: str) -> None:
        record = self.record_for(friendly)
        del self._by_friendly[friendly]
        del self.devices[record.ieee_addr]
        self._state_cache.pop(record.ieee_addr, None)
        self._publish(self.topics.state(friendly), b"", retain=True)
        self._bridge_event({"type": "device_left", "friendly_name": friendly})
        self._save_if_configured()

    # -- persistence -----------------------------------------------------------------

    def save_registry(self, path: str | Path) -> None:
        """Atomic write: temp file in the same directory, then rename."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {"devices": [r.as_dict() for r in self.devices.values()]}
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fp:
                json.dump(payload, fp, indent=2)
            os.replace(tmp_name, path)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise

    def load_registry(self, path: str | Path) -> None:
        """Missing file yields an empty registry; parse failures are loud."""
        path = Path(path)
        if not path.exists():
            return
        try:
            with open(path, encoding="utf-8") as fp:
                payload = json.load(fp)
            records = [
                DeviceRecord(**{k: entry[k] for k in _RECORD_FIELDS})
                for entry in payload["devices"]
            ]
        except json.JSONDecodeError as exc:
            raise CorruptRegistry(exc.msg, exc.lineno, exc.pos) from exc
        except (KeyError, TypeError) as exc:
            raise CorruptRegistry(f"bad registry structure: {exc}") from exc
        self.devices = {r.ieee_addr: r for r in records}
        self._by_friendly = {r.friendly_name: r.ieee_addr for r in records}

    def _save_if_configured(self) -> None:
        if self.registry_path:
            self.save_registry(self.registry_path)
