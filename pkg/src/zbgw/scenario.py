"""Case-study replay: two offices, ten sensors, occupancy-driven traffic.

A scenario TOML declares the geometry (positions, wall obstacles), the
device fleet with vendor QR credentials, the occupancy schedule, and the
behavioral rates. Running it drives the simulator through simulated
days: devices pair during an initial permit-join window, report on their
class-specific cadences, and everything lands in the telemetry store for
the run report.

All behavioral rates are calibration constants living in the TOML, so
report shapes (occupied vs idle traffic, relocation dips) are the
contract rather than absolute counts.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .converters import AttributeReport, builtin_catalog
from .errors import GatewayError
from .gateway import Gateway, UnknownDevice
from .install_code import parse_qr_payload
from .mqtt.broker import MqttBroker
from .telemetry import TelemetryStore
from .zigbee_sim import (
    CoordinatorConfig,
    Frame,
    LqiModel,
    Node,
    NoParentInRange,
    PermitJoinClosed,
    Role,
    ZigbeeNetwork,
)

__all__ = [
    "BehaviorRates",
    "OccupancySchedule",
    "RunReport",
    "Scenario",
    "ScenarioConfig",
    "build_case_study",
    "load_scenario_config",
]

# clusters/attributes the builtin catalog maps (see definitions/*.toml)
CL_THERMOSTAT = 0x0201
ATTR_LOCAL_TEMPERATURE = 0x0000
ATTR_HEATING_SETPOINT = 0x0012
CL_ONOFF = 0x0006
CL_OCCUPANCY = 0x0406
CL_CO2 = 0x040D
CL_TEMPERATURE = 0x0402
CL_HUMIDITY = 0x0405
CL_AIR_QUALITY = 0xFC00
ATTR_MEASURED = 0x0000

HOUR_S = 3600.0
DAY_S = 86400.0


@dataclass
class OccupancySchedule:
    """Occupancy as a pure function of simulated time (t=0 is Monday 00:00)."""

    start_hour: float = 8.0
    end_hour: float = 17.0
    occupants: int = 1
    day_overrides: dict[int, bool] = field(default_factory=dict)

    def occupants_at(self, t: float) -> int:
        day = int(t // DAY_S)
        hour = (t % DAY_S) / HOUR_S
        occupied_day = self.day_overrides.get(day, day % 7 < 5)
        if occupied_day and self.start_hour <= hour < self.end_hour:
            return self.occupants
        return 0


@dataclass
class BehaviorRates:
    """Invented calibration constants for the device traffic models."""

    motion_occupied_per_hour: float = 20.0
    motion_idle_per_hour: float = 0.5
    motion_hold_s: float = 120.0
    contact_occupied_per_hour: float = 2.0
    co2_gain_ppm_per_hour: float = 300.0  # per occupant
    co2_vent_per_hour: float = 0.7
    co2_baseline_ppm: float = 420.0
    co2_report_delta_ppm: float = 25.0
    co2_max_interval_s: float = 900.0
    periodic_interval_s: float = 600.0

    def co2_equilibrium(self, occupants: int) -> float:
        return self.co2_baseline_ppm + occupants * self.co2_gain_ppm_per_hour / self.co2_vent_per_hour


@dataclass
class DeviceSpec:
    ieee: str
    friendly: str
    model: str
    position: tuple[float, float]
    qr: str
    sleepy: bool = True
    poll_interval_s: float = 6.0


@dataclass
class RelocationSpec:
    device: str
    at_s: float
    position: tuple[float, float]


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    seed: int = 1
    tick_s: float = 60.0
    auto_pair: bool = True
    pair_retry_s: float = 10.0
    coordinator_ieee: str = "00124b0000000001"
    coordinator_position: tuple[float, float] = (0.0, 0.0)
    walls: list[tuple[tuple[float, float], tuple[float, float]]] = field(default_factory=list)
    schedule: OccupancySchedule = field(default_factory=OccupancySchedule)
    rates: BehaviorRates = field(default_factory=BehaviorRates)
    devices: list[DeviceSpec] = field(default_factory=list)
    relocations: list[RelocationSpec] = field(default_factory=list)
    noise_enabled: bool = True


def load_scenario_config(source: str | Path) -> ScenarioConfig:
    """Load a scenario file; bare names resolve to packaged scenarios."""
    path = Path(source)
    if path.exists():
        text = path.read_text(encoding="utf-8")
    else:
        packaged = resources.files(__package__) / "scenarios" / f"{path.name.removesuffix('.toml')}.toml"
        try:
            text = packaged.read_text()
        except FileNotFoundError:
            raise GatewayError(f"scenario not found: {source}") from None
    data = tomllib.loads(text)

    meta = data.get("scenario", {})
    schedule_data = dict(data.get("schedule", {}))
    overrides = {
        int(day): bool(flag)
        for day, flag in schedule_data.pop("day_overrides", {}).items()
    }
    schedule = OccupancySchedule(day_overrides=overrides, **schedule_data)
    rates = BehaviorRates(**data.get("rates", {}))
    coordinator = data.get("coordinator", {})
    devices = [
        DeviceSpec(
            ieee=entry["ieee"],
            friendly=entry["friendly"],
            model=entry["model"],
            position=tuple(entry["position"]),
            qr=entry["qr"],
            sleepy=entry.get("sleepy", True),
            poll_interval_s=entry.get("poll_interval_s", 6.0),
        )
        for entry in data.get("devices", [])
    ]
    relocations = [
        RelocationSpec(
            device=entry["device"],
            at_s=float(entry.get("at_s", entry.get("at_hours", 0) * HOUR_S)),
            position=tuple(entry["position"]),
        )
        for entry in data.get("relocations", [])
    ]
    return ScenarioConfig(
        name=meta.get("name", path.stem),
        seed=int(meta.get("seed", 1)),
        tick_s=float(meta.get("tick_s", 60.0)),
        auto_pair=bool(meta.get("auto_pair", True)),
        pair_retry_s=float(meta.get("pair_retry_s", 10.0)),
        noise_enabled=bool(meta.get("noise_enabled", True)),
        coordinator_ieee=coordinator.get("ieee", "00124b0000000001"),
        coordinator_position=tuple(coordinator.get("position", (0.0, 0.0))),
        walls=[(tuple(w["from"]), tuple(w["to"])) for w in data.get("walls", [])],
        schedule=schedule,
        rates=rates,
        devices=devices,
        relocations=relocations,
    )


def _poisson(rng, lam: float) -> int:
    """Knuth sampling; fine for the sub-unity lambdas per tick used here."""
    if lam <= 0:
        return 0
    threshold = math.exp(-lam)
    k = 0
    p = 1.0
    while True:
        p *= rng.random()
        if p <= threshold:
            return k
        k += 1


class _DeviceModel:
    """Behavior attached to one joined node; sends frames to the coordinator."""

    def __init__(self, scenario: "Scenario", node: Node, spec: DeviceSpec):
        self.scenario = scenario
        self.node = node
        self.spec = spec
        self.rates = scenario.config.rates
        self.rng = scenario.network.rng

    def report(self, cluster: int, attribute: int, raw_value) -> None:
        self.scenario.network.deliver(
            Frame(
                src=self.node.short_addr,
                dst=0x0000,
                cluster_id=cluster,
                payload=AttributeReport(cluster, attribute, raw_value),
            )
        )

    def on_tick(self, t: float, dt: float, occupants: int) -> None:
        pass

    def on_write(self, report: AttributeReport) -> None:
        pass


class _ThermostatModel(_DeviceModel):
    def __init__(self, scenario, node, spec):
        super().__init__(scenario, node, spec)
        self.setpoint_raw = 2100  # 21.00 degC
        self.next_report_at = self.rates.periodic_interval_s

    def on_tick(self, t, dt, occupants):
        if t >= self.next_report_at:
            swing = 100.0 * math.sin(2 * math.pi * t / DAY_S)
            raw = int(round(2080 + swing + self.rng.uniform(-20, 20)))
            self.report(CL_THERMOSTAT, ATTR_LOCAL_TEMPERATURE, raw)
            self.next_report_at = t + self.rates.periodic_interval_s

    def on_write(self, report):
        if report.cluster_id == CL_THERMOSTAT and report.attribute_id == ATTR_HEATING_SETPOINT:
            self.setpoint_raw = int(report.raw_value)
            # confirm the accepted value right away
            self.report(CL_THERMOSTAT, ATTR_HEATING_SETPOINT, self.setpoint_raw)


class _AirQualityModel(_DeviceModel):
    def __init__(self, scenario, node, spec):
        super().__init__(scenario, node, spec)
        self.next_report_at = self.rates.periodic_interval_s

    def on_tick(self, t, dt, occupants):
        if t >= self.next_report_at:
            raw = int(round(60 + 25 * occupants + self.rng.uniform(-10, 10)))
            self.report(CL_AIR_QUALITY, ATTR_MEASURED, max(0, min(500, raw)))
            self.next_report_at = t + self.rates.periodic_interval_s


class _ContactModel(_DeviceModel):
    def __init__(self, scenario, node, spec):
        super().__init__(scenario, node, spec)
        self.closed = True

    def on_tick(self, t, dt, occupants):
        if occupants <= 0:
            return
        lam = self.rates.contact_occupied_per_hour * dt / HOUR_S
        for _ in range(_poisson(self.rng, lam)):
            self.closed = not self.closed
            self.report(CL_ONOFF, ATTR_MEASURED, 1 if self.closed else 0)


class _MotionModel(_DeviceModel):
    def __init__(self, scenario, node, spec):
        super().__init__(scenario, node, spec)
        self.occupied = False
        self.hold_until = 0.0

    def on_tick(self, t, dt, occupants):
        if self.occupied and t >= self.hold_until:
            self.occupied = False
            self.report(CL_OCCUPANCY, ATTR_MEASURED, False)
        rate = (
            self.rates.motion_occupied_per_hour
            if occupants > 0
            else self.rates.motion_idle_per_hour
        )
        events = _poisson(self.rng, rate * dt / HOUR_S)
        for _ in range(events):
            self.report(CL_OCCUPANCY, ATTR_MEASURED, True)
        if events:
            self.occupied = True
            self.hold_until = t + self.rates.motion_hold_s


class _Co2Model(_DeviceModel):
    def __init__(self, scenario, node, spec):
        super().__init__(scenario, node, spec)
        self.concentration = self.rates.co2_baseline_ppm
        self.last_reported = None
        self.last_report_at = -math.inf

    def on_tick(self, t, dt, occupants):
        # explicit Euler on dC/dt = gain*occupants - vent*(C - baseline)
        dt_h = dt / HOUR_S
        rate = (
            self.rates.co2_gain_ppm_per_hour * occupants
            - self.rates.co2_vent_per_hour * (self.concentration - self.rates.co2_baseline_ppm)
        )
        self.concentration = max(self.rates.co2_baseline_ppm, self.concentration + rate * dt_h)

        delta_trigger = (
            self.last_reported is None
            or abs(self.concentration - self.last_reported) >= self.rates.co2_report_delta_ppm
        )
        interval_trigger = t - self.last_report_at >= self.rates.co2_max_interval_s
        if not (delta_trigger or interval_trigger):
            return
        self.report(CL_CO2, ATTR_MEASURED, int(round(self.concentration)))
        if interval_trigger:
            # slow-cadence reports carry the environmental extras
            temp_raw = int(round(2120 + 60 * math.sin(2 * math.pi * t / DAY_S) + self.rng.uniform(-15, 15)))
            hum_raw = int(round(4000 + 400 * math.sin(2 * math.pi * (t / DAY_S + 0.3)) + self.rng.uniform(-50, 50)))
            self.report(CL_TEMPERATURE, ATTR_MEASURED, temp_raw)
            self.report(CL_HUMIDITY, ATTR_MEASURED, hum_raw)
        self.last_reported = self.concentration
        self.last_report_at = t


_MODEL_CLASSES = {
    "thermostat-1": _ThermostatModel,
    "airquality-1": _AirQualityModel,
    "contact-1": _ContactModel,
    "motion-1": _MotionModel,
    "co2-1": _Co2Model,
}


@dataclass
class RunReport:
    scenario: str
    seed: int
    simulated_hours: float
    joined_devices: int
    router_count: int
    total_messages: int
    hourly_messages: list[tuple[int, int]]
    device_lqi: dict[str, dict[str, float]]
    pending_dropped: int
    pending_expired: int
    checksum: str = ""

    def as_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "simulated_hours": self.simulated_hours,
            "joined_devices": self.joined_devices,
            "router_count": self.router_count,
            "total_messages": self.total_messages,
            "hourly_messages": self.hourly_messages,
            "device_lqi": self.device_lqi,
            "pending_dropped": self.pending_dropped,
            "pending_expired": self.pending_expired,
            "checksum": self.checksum,
        }

    def compute_checksum(self) -> str:
        body = {k: v for k, v in self.as_dict().items() if k != "checksum"}
        digest = hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()
        self.checksum = digest
        return digest


class Scenario:
    """One configured network + gateway, ready to run or serve."""

    def __init__(
        self,
        config: ScenarioConfig,
        *,
        seed: int | None = None,
        telemetry_path: str | Path | None = None,
        registry_path: str | Path | None = None,
        broker: MqttBroker | None = None,
        base_topic: str = "gw",
    ) -> None:
        self.config = config
        self.seed = config.seed if seed is None else seed
        self.network = ZigbeeNetwork(
            CoordinatorConfig(config.coordinator_ieee, config.coordinator_position),
            seed=self.seed,
            lqi_model=LqiModel(noise_enabled=config.noise_enabled),
            log_polls=False,
        )
        for wall in config.walls:
            self.network.add_wall(*wall)
        self.telemetry = TelemetryStore(telemetry_path)
        self.broker = broker or MqttBroker()
        self.gateway = Gateway(
            self.network,
            builtin_catalog(),
            self.broker,
            self.telemetry,
            base=base_topic,
            registry_path=registry_path,
        )
        self._models: dict[int, _DeviceModel] = {}
        self._unjoined: dict[str, DeviceSpec] = {}
        self.network.add_listener(self._on_event)

        for spec in config.devices:
            key = self.network.register_credential(spec.ieee, parse_qr_payload(spec.qr))
            self._unjoined[spec.ieee] = spec
            self._schedule_join_attempts(spec, key)
        for relocation in config.relocations:
            self._schedule_relocation(relocation)
        if config.auto_pair:
            self.network.permit_join(254)
        self.network.schedule_at(config.tick_s, self._behavior_tick)

    # -- pairing ------------------------------------------------------------

    def _schedule_join_attempts(self, spec: DeviceSpec, key) -> None:
        # stagger the first attempt so join order is stable
        first_attempt = 1.0 + len(self._unjoined)

        def attempt() -> None:
            if spec.ieee not in self._unjoined:
                return
            node = Node(
                spec.ieee,
                Role.END_DEVICE,
                spec.position,
                sleepy=spec.sleepy,
                poll_interval=spec.poll_interval_s if spec.sleepy else None,
                model_id=spec.model,
            )
            try:
                joined = self.network.join(node, key)
            except (PermitJoinClosed, NoParentInRange):
                self.network.schedule_in(self.config.pair_retry_s, attempt)
                return
            del self._unjoined[spec.ieee]
            self.gateway.rename_device(joined.ieee_addr, spec.friendly)
            self._models[joined.short_addr] = _MODEL_CLASSES[spec.model](self, joined, spec)

        self.network.schedule_at(first_attempt, attempt)

    # -- behaviors ------------------------------------------------------------

    def _behavior_tick(self) -> None:
        t = self.network.clock
        occupants = self.config.schedule.occupants_at(t)
        for short in sorted(self._models):
            self._models[short].on_tick(t, self.config.tick_s, occupants)
        self.network.schedule_in(self.config.tick_s, self._behavior_tick)

    def _on_event(self, event: dict) -> None:
        if event["event"] != "frame_delivered":
            return
        model = self._models.get(event["dst"])
        if model is None:
            return
        payload = event.get("payload")
        if isinstance(payload, dict) and "cluster_id" in payload:
            model.on_write(
                AttributeReport(
                    payload["cluster_id"], payload["attribute_id"], payload["raw_value"]
                )
            )

    # -- operations ------------------------------------------------------------

    def relocate_device(self, friendly: str, position, t: float | None = None) -> None:
        """Move a device at simulated time t (now when omitted)."""
        record = self.gateway.record_for(friendly)  # raises UnknownDevice
        ieee = record.ieee_addr

        def move() -> None:
            node = self.network.node_by_ieee(ieee)
            if node is None or node.short_addr is None:
                raise UnknownDevice(friendly)
            self.network.move_node(node.short_addr, tuple(position))

        if t is None or t <= self.network.clock:
            move()
        else:
            self.network.schedule_at(t, move)

    def _schedule_relocation(self, spec: RelocationSpec) -> None:
        def move() -> None:
            try:
                record = self.gateway.record_for(spec.device)
            except UnknownDevice:
                return
            node = self.network.node_by_ieee(record.ieee_addr)
            if node is not None and node.short_addr is not None:
                self.network.move_node(node.short_addr, spec.position)

        self.network.schedule_at(spec.at_s, move)

    def run(self, simulated_hours: float) -> RunReport:
        """Advance through the schedule and assemble the run report."""
        if simulated_hours <= 0:
            raise ValueError("simulated_hours must be positive")
        horizon = simulated_hours * HOUR_S
        if horizon > self.network.clock:
            self.network.tick(horizon - self.network.clock)
        return self.build_report(simulated_hours)

    def build_report(self, simulated_hours: float) -> RunReport:
        t1 = simulated_hours * HOUR_S
        store = self.telemetry
        known = set(store.series_names())
        total = len(store.query("mqtt.messages", 0, t1)) if "mqtt.messages" in known else 0
        hourly = (
            store.hourly_count("mqtt.messages", 0, t1) if "mqtt.messages" in known else []
        )
        device_lqi: dict[str, dict[str, float]] = {}
        for record in self.gateway.devices.values():
            series = f"lqi.{record.friendly_name}"
            if series not in known:
                continue
            samples = [s.value for s in store.query(series, 0, t1)]
            if samples:
                device_lqi[record.friendly_name] = {
                    "count": len(samples),
                    "mean": round(sum(samples) / len(samples), 3),
                    "min": min(samples),
                    "max": max(samples),
                }
        dropped = sum(1 for e in self.network.event_log if e["event"] == "pending_dropped")
        expired = sum(1 for e in self.network.event_log if e["event"] == "pending_expired")
        report = RunReport(
            scenario=self.config.name,
            seed=self.seed,
            simulated_hours=simulated_hours,
            joined_devices=sum(1 for n in self.network.nodes.values() if n.role is Role.END_DEVICE),
            router_count=sum(1 for n in self.network.nodes.values() if n.role is Role.ROUTER),
            total_messages=total,
            hourly_messages=hourly,
            device_lqi=device_lqi,
            pending_dropped=dropped,
            pending_expired=expired,
        )
        report.compute_checksum()
        return report


def build_case_study(seed: int = 1, **kwargs) -> Scenario:
    """The packaged two-office, ten-sensor deployment."""
    config = load_scenario_config("office")
    return Scenario(config, seed=seed, **kwargs)
