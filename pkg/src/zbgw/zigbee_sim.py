"""Deterministic discrete-event simulation of a Zigbee network.

Models the network/application-layer behavior that matters to a gateway:
Trust-Center-gated joining with out-of-band registered link keys, mesh
routing over a link-quality graph, indirect transmission to sleepy end
devices, and a simulated clock driving polls, expiries, and scheduled
callbacks. The 802.15.4 radio is abstracted behind a link-quality model
(linear falloff over range, a per-wall penalty, and bounded uniform
noise); frame encryption is out of scope and join security is modeled
as equality of the derived link key.

Everything is deterministic given the seed: one RNG, one event heap
ordered by (time, insertion sequence), and insertion-ordered containers
throughout.
"""

from __future__ import annotations

import dataclasses
import enum
import heapq
import itertools
import json
import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

from .errors import GatewayError
from .install_code import Credential, LinkKey, derive_link_key

__all__ = [
    "AlreadyJoined",
    "ConfigurationError",
    "CoordinatorConfig",
    "DurationOutOfRange",
    "Frame",
    "KeyMismatch",
    "Link",
    "LqiModel",
    "Node",
    "NoParentInRange",
    "NotRegistered",
    "PermitJoinClosed",
    "Role",
    "TrustCenterRegistry",
    "Unreachable",
    "ZigbeeNetwork",
    "compute_lqi",
    "form_network",
    "walls_crossed",
]

PERMIT_JOIN_MAX_S = 254

# Reporting-only topology constant; link bandwidth is not enforced.
LINK_BANDWIDTH_KBPS = 250


class ConfigurationError(GatewayError):
    """Network construction violated an invariant (e.g. two coordinators)."""


class DurationOutOfRange(GatewayError):
    """permit_join duration outside [0, 254] seconds."""


class PermitJoinClosed(GatewayError):
    """Join attempted while the pairing window is closed."""


class NotRegistered(GatewayError):
    """Device has no out-of-band registered link key."""


class KeyMismatch(GatewayError):
    """Presented link key differs from the registered one."""


class NoParentInRange(GatewayError):
    """No coordinator or router with a usable link to the joining device."""


class AlreadyJoined(GatewayError):
    """Device already holds a network address."""


class Unreachable(GatewayError):
    """No usable route between the two nodes."""


class Role(enum.Enum):
    COORDINATOR = "coordinator"
    ROUTER = "router"
    END_DEVICE = "end_device"


@dataclass
class LqiModel:
    """Centralized link-quality constants (invented model parameters)."""

    max_lqi: int = 255
    range_m: float = 100.0
    wall_penalty: float = 40.0
    noise_amplitude: float = 5.0
    noise_enabled: bool = True


def compute_lqi(
    distance_m: float,
    walls: int,
    *,
    model: LqiModel | None = None,
    rng: random.Random | None = None,
) -> int:
    """Link quality for a distance and wall count, 0..max.

    Linear falloff to zero at the range limit, a fixed penalty per wall,
    plus zero-mean uniform noise when a RNG is supplied and the model has
    noise enabled. At or past the range limit the link is dead no matter
    what the noise says.
    """
    if distance_m < 0 or walls < 0:
        raise ValueError("distance and wall count must be non-negative")
    m = model or LqiModel()
    if distance_m >= m.range_m:
        return 0
    base = m.max_lqi * (1.0 - distance_m / m.range_m) - m.wall_penalty * walls
    noise = 0.0
    if m.noise_enabled and rng is not None:
        noise = rng.uniform(-m.noise_amplitude, m.noise_amplitude)
    return max(0, min(m.max_lqi, round(base + noise)))


Point = tuple[float, float]
Segment = tuple[Point, Point]


def _cross(o: Point, a: Point, b: Point) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool:
    # proper crossings only; collinear touches do not count as a wall hit
    d1 = _cross(q1, q2, p1)
    d2 = _cross(q1, q2, p2)
    d3 = _cross(p1, p2, q1)
    d4 = _cross(p1, p2, q2)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0


def walls_crossed(a: Point, b: Point, walls: Iterable[Segment]) -> int:
    """Number of wall segments the straight line a->b passes through."""
    return sum(1 for w in walls if _segments_intersect(a, b, w[0], w[1]))


_IEEE_HEX_LEN = 16


def _normalize_ieee(ieee: str) -> str:
    value = ieee.lower().replace(":", "")
    if len(value) != _IEEE_HEX_LEN or any(c not in "0123456789abcdef" for c in value):
        raise ConfigurationError(f"ieee address must be {_IEEE_HEX_LEN} hex chars: {ieee!r}")
    return value


@dataclass
class Node:
    """One simulated device; short_addr/parent are assigned on join."""

    ieee_addr: str
    role: Role
    position: Point
    sleepy: bool = False
    poll_interval: float | None = None
    model_id: str | None = None
    short_addr: int | None = None
    parent: int | None = None

    def __post_init__(self) -> None:
        self.ieee_addr = _normalize_ieee(self.ieee_addr)
        if self.sleepy and self.role is not Role.END_DEVICE:
            raise ConfigurationError("only end devices can be sleepy")
        if self.sleepy and not (self.poll_interval and self.poll_interval > 0):
            raise ConfigurationError("sleepy devices need a positive poll_interval")

    @property
    def joined(self) -> bool:
        return self.short_addr is not None


@dataclass
class Link:
    """Undirected link; lqi == 0 never stored (absence means unusable)."""

    a: int
    b: int
    lqi: int
    distance_m: float
    walls: int


@dataclass
class TrustCenterRegistry:
    """Out-of-band key material plus the pairing window state."""

    keys: dict[str, LinkKey] = field(default_factory=dict)
    permit_join_until: float | None = None


@dataclass
class Frame:
    """Application frame routed through the network."""

    src: int
    dst: int
    cluster_id: int
    payload: Any = None
    hops: list[int] = field(default_factory=list)
    lqi_at_receiver: int | None = None
    frame_id: int | None = None


@dataclass(frozen=True)
class CoordinatorConfig:
    ieee_addr: str
    position: Point = (0.0, 0.0)


@dataclass
class _PendingEntry:
    frame: Frame
    enqueued_at: float


class ZigbeeNetwork:
    """Single-owner deterministic network simulator.

    Drive it from one logical context; the event log is append-only and
    safe to read from anywhere once emitted.
    """

    def __init__(
        self,
        coordinator: CoordinatorConfig,
        *,
        seed: int = 0,
        lqi_model: LqiModel | None = None,
        pending_capacity: int = 8,
        pending_expiry_s: float = 7.68,
        log_polls: bool = True,
    ) -> None:
        self.lqi_model = lqi_model or LqiModel()
        self.pending_capacity = pending_capacity
        self.pending_expiry_s = pending_expiry_s
        self.log_polls = log_polls
        self.rng = random.Random(seed)
        self.clock = 0.0
        self.registry = TrustCenterRegistry()
        self.walls: list[Segment] = []
        self.event_log: list[dict] = []
        self._listeners: list[Callable[[dict], None]] = []
        self._heap: list[tuple[float, int, Callable[[], None]]] = []
        self._seq = itertools.count()
        self._frame_ids = itertools.count(1)
        self._pj_generation = 0
        self._pending: dict[int, deque[_PendingEntry]] = {}

        coord = Node(coordinator.ieee_addr, Role.COORDINATOR, coordinator.position)
        coord.short_addr = 0x0000
        self.nodes: dict[int, Node] = {0x0000: coord}
        self.links: dict[tuple[int, int], Link] = {}

    # -- events ------------------------------------------------------------

    def add_listener(self, listener: Callable[[dict], None]) -> None:
        self._listeners.append(listener)

    def _emit(self, event: str, **fields: Any) -> dict:
        record = {"t": self.clock, "event": event, **fields}
        self.event_log.append(record)
        for listener in self._listeners:
            listener(record)
        return record

    def write_events(self, path) -> None:
        """Dump the event log as newline-delimited JSON."""
        with open(path, "w", encoding="utf-8") as fp:
            for record in self.event_log:
                fp.write(json.dumps(record) + "\n")

    # -- topology ----------------------------------------------------------

    def add_wall(self, start: Point, end: Point) -> None:
        self.walls.append((tuple(start), tuple(end)))

    @property
    def coordinator(self) -> Node:
        return self.nodes[0x0000]

    def node_by_ieee(self, ieee: str) -> Node | None:
        ieee = _normalize_ieee(ieee)
        for node in self.nodes.values():
            if node.ieee_addr == ieee:
                return node
        return None

    def joined_nodes(self) -> list[Node]:
        return [self.nodes[s] for s in sorted(self.nodes)]

    def _distance(self, a: Node, b: Node) -> float:
        return math.dist(a.position, b.position)

    def _sample_lqi(self, a: Node, b: Node) -> tuple[int, float, int]:
        distance = self._distance(a, b)
        walls = walls_crossed(a.position, b.position, self.walls)
        lqi = compute_lqi(distance, walls, model=self.lqi_model, rng=self.rng)
        return lqi, distance, walls

    def _refresh_links_of(self, short: int) -> None:
        node = self.nodes[short]
        for other_short in sorted(self.nodes):
            if other_short == short:
                continue
            other = self.nodes[other_short]
            key = (min(short, other_short), max(short, other_short))
            lqi, distance, walls = self._sample_lqi(node, other)
            if lqi > 0:
                self.links[key] = Link(key[0], key[1], lqi, distance, walls)
            else:
                self.links.pop(key, None)

    def link_between(self, a: int, b: int) -> Link | None:
        return self.links.get((min(a, b), max(a, b)))

    def move_node(self, short: int, position: Point) -> None:
        """Relocate a joined node and refresh its links."""
        node = self.nodes[short]
        node.position = tuple(position)
        self._refresh_links_of(short)
        self._emit("device_moved", short_addr=short, ieee=node.ieee_addr,
                   position=list(node.position))

    # -- trust center ------------------------------------------------------

    def register_credential(self, ieee: str, cred: Credential) -> LinkKey:
        """Store the derived link key for a device, out-of-band.

        Propagates InvalidCrc from derivation; nothing is stored then.
        """
        key = derive_link_key(cred)
        self.registry.keys[_normalize_ieee(ieee)] = key
        return key

    def permit_join(self, duration_s: float) -> None:
        if not 0 <= duration_s <= PERMIT_JOIN_MAX_S:
            raise DurationOutOfRange(
                f"duration must be within [0, {PERMIT_JOIN_MAX_S}] s, got {duration_s}"
            )
        self._pj_generation += 1
        was_open = self.permit_join_open
        if duration_s == 0:
            self.registry.permit_join_until = None
            if was_open:
                self._emit("permit_join_closed")
            return
        until = self.clock + duration_s
        self.registry.permit_join_until = until
        self._emit("permit_join_opened", until=until)
        generation = self._pj_generation

        def close() -> None:
            if generation != self._pj_generation:
                return  # superseded by a later permit_join call
            self.registry.permit_join_until = None
            self._emit("permit_join_closed")

        self.schedule_at(until, close)

    @property
    def permit_join_open(self) -> bool:
        until = self.registry.permit_join_until
        return until is not None and self.clock < until

    def join(self, node: Node, presented_key: LinkKey) -> Node:
        """Admit a device; returns the node with short_addr assigned.

        Fails with AlreadyJoined, PermitJoinClosed, NotRegistered,
        KeyMismatch, or NoParentInRange, checked in that order.
        """
        if node.joined or self.node_by_ieee(node.ieee_addr) is not None:
            raise AlreadyJoined(node.ieee_addr)
        if node.role is Role.COORDINATOR:
            raise ConfigurationError("network already has its coordinator")
        if not self.permit_join_open:
            raise PermitJoinClosed(node.ieee_addr)
        registered = self.registry.keys.get(node.ieee_addr)
        if registered is None:
            raise NotRegistered(node.ieee_addr)
        if registered != presented_key:
            raise KeyMismatch(node.ieee_addr)

        candidates: list[tuple[int, int]] = []  # (lqi, parent_short)
        for short in sorted(self.nodes):
            parent = self.nodes[short]
            if parent.role is Role.END_DEVICE:
                continue
            lqi, _, _ = self._sample_lqi(node, parent)
            if lqi > 0:
                candidates.append((lqi, short))
        if not candidates:
            raise NoParentInRange(node.ieee_addr)
        best_lqi, best_parent = max(candidates, key=lambda c: (c[0], -c[1]))

        short = 0x0001
        while short in self.nodes:
            short += 1
        node.short_addr = short
        node.parent = best_parent
        self.nodes[short] = node
        self._refresh_links_of(short)

        if node.sleepy:
            assert node.poll_interval is not None
            self._schedule_poll(short, self.clock + node.poll_interval)

        self._emit(
            "device_joined",
            ieee=node.ieee_addr,
            short_addr=short,
            parent=best_parent,
            lqi=best_lqi,
            model_id=node.model_id,
        )
        return node

    # -- routing and delivery ----------------------------------------------

    def route(self, src: int, dst: int) -> list[int]:
        """Min-hop path; ties by max bottleneck lqi, then lowest addresses.

        End devices can be endpoints but never forward.
        """
        if src not in self.nodes or dst not in self.nodes:
            raise Unreachable(f"{src:#06x} -> {dst:#06x}: not joined")
        if src == dst:
            return [src]

        adjacency: dict[int, list[int]] = {s: [] for s in self.nodes}
        for (a, b), link in self.links.items():
            if link.lqi > 0:
                adjacency[a].append(b)
                adjacency[b].append(a)
        for neighbors in adjacency.values():
            neighbors.sort()

        def can_forward(short: int) -> bool:
            return self.nodes[short].role is not Role.END_DEVICE

        # BFS distance layers under the forwarding constraint
        dist = {src: 0}
        frontier = deque([src])
        while frontier:
            current = frontier.popleft()
            if current != src and not can_forward(current):
                continue
            for neighbor in adjacency[current]:
                if neighbor not in dist:
                    dist[neighbor] = dist[current] + 1
                    frontier.append(neighbor)
        if dst not in dist:
            raise Unreachable(f"{src:#06x} -> {dst:#06x}")

        # enumerate all min-hop paths along strictly increasing layers
        paths: list[list[int]] = []
        path = [src]

        def extend(current: int) -> None:
            if current == dst:
                paths.append(list(path))
                return
            if current != src and not can_forward(current):
                return
            for neighbor in adjacency[current]:
                if dist.get(neighbor) == dist[current] + 1:
                    path.append(neighbor)
                    extend(neighbor)
                    path.pop()

        extend(src)

        def bottleneck(p: list[int]) -> int:
            return min(
                self.links[(min(u, v), max(u, v))].lqi for u, v in zip(p, p[1:])
            )

        best_bottleneck = max(bottleneck(p) for p in paths)
        contenders = [p for p in paths if bottleneck(p) == best_bottleneck]
        return min(contenders)

    def deliver(self, frame: Frame) -> tuple[str, Frame]:
        """Route a frame; returns ("delivered" | "queued", frame).

        Frames for sleepy end devices are held at the parent (bounded
        queue, drop-oldest, timed expiry) until the child polls.
        """
        if frame.src not in self.nodes:
            raise Unreachable(f"source {frame.src:#06x} not joined")
        if frame.frame_id is None:
            frame.frame_id = next(self._frame_ids)
        destination = self.nodes.get(frame.dst)
        if destination is None:
            raise Unreachable(f"destination {frame.dst:#06x} not joined")

        if destination.sleepy:
            parent_short = destination.parent
            assert parent_short is not None
            frame.hops = self.route(frame.src, parent_short)
            self._enqueue_pending(parent_short, frame)
            return "queued", frame

        frame.hops = self.route(frame.src, frame.dst)
        frame.lqi_at_receiver = self._receiver_lqi(frame.hops)
        self._emit_delivered(frame)
        return "delivered", frame

    def _receiver_lqi(self, hops: list[int]) -> int:
        if len(hops) < 2:
            return self.lqi_model.max_lqi
        lqi, _, _ = self._sample_lqi(self.nodes[hops[-2]], self.nodes[hops[-1]])
        # the link was usable enough to route; a measured 0 would claim otherwise
        return max(1, lqi)

    def _emit_delivered(self, frame: Frame) -> None:
        self._emit(
            "frame_delivered",
            frame_id=frame.frame_id,
            src=frame.src,
            dst=frame.dst,
            cluster_id=frame.cluster_id,
            hops=list(frame.hops),
            lqi=frame.lqi_at_receiver,
            payload=_payload_json(frame.payload),
        )

    def _enqueue_pending(self, parent_short: int, frame: Frame) -> None:
        queue = self._pending.setdefault(parent_short, deque())
        if len(queue) >= self.pending_capacity:
            dropped = queue.popleft()
            self._emit(
                "pending_dropped",
                frame_id=dropped.frame.frame_id,
                parent=parent_short,
                dst=dropped.frame.dst,
            )
        entry = _PendingEntry(frame, self.clock)
        queue.append(entry)
        self._emit(
            "frame_pending",
            frame_id=frame.frame_id,
            parent=parent_short,
            dst=frame.dst,
            cluster_id=frame.cluster_id,
        )

        frame_id = frame.frame_id

        def expire() -> None:
            q = self._pending.get(parent_short)
            if not q:
                return
            for pending in q:
                if pending.frame.frame_id == frame_id:
                    q.remove(pending)
                    self._emit(
                        "pending_expired",
                        frame_id=frame_id,
                        parent=parent_short,
                        dst=frame.dst,
                    )
                    return

        self.schedule_at(self.clock + self.pending_expiry_s, expire)

    def pending_for(self, parent_short: int) -> list[Frame]:
        return [e.frame for e in self._pending.get(parent_short, ())]

    # -- polling -----------------------------------------------------------

    def _schedule_poll(self, child_short: int, at: float) -> None:
        def poll() -> None:
            child = self.nodes.get(child_short)
            if child is None or not child.joined:
                return
            if self.log_polls:
                self._emit("poll", short_addr=child_short)
            self._deliver_pending_to(child)
            assert child.poll_interval is not None
            self._schedule_poll(child_short, self.clock + child.poll_interval)

        self.schedule_at(at, poll)

    def _deliver_pending_to(self, child: Node) -> None:
        assert child.parent is not None and child.short_addr is not None
        queue = self._pending.get(child.parent)
        if not queue:
            return
        parent = self.nodes[child.parent]
        mine = [e for e in queue if e.frame.dst == child.short_addr]
        if not mine:
            return
        lqi, _, _ = self._sample_lqi(parent, child)
        if lqi <= 0:
            return  # out of range; entries stay queued until they expire
        for entry in mine:
            queue.remove(entry)
            entry.frame.hops = entry.frame.hops + [child.short_addr]
            entry.frame.lqi_at_receiver = max(1, lqi)
            self._emit_delivered(entry.frame)

    # -- clock -------------------------------------------------------------

    def schedule_at(self, t: float, fn: Callable[[], None]) -> None:
        heapq.heappush(self._heap, (max(t, self.clock), next(self._seq), fn))

    def schedule_in(self, dt: float, fn: Callable[[], None]) -> None:
        self.schedule_at(self.clock + dt, fn)

    def tick(self, dt_s: float) -> list[dict]:
        """Advance the clock, firing all due events in deterministic order.

        Returns the events emitted during this tick.
        """
        if dt_s <= 0:
            raise ValueError("dt_s must be positive")
        log_start = len(self.event_log)
        target = self.clock + dt_s
        while self._heap and self._heap[0][0] <= target:
            t, _, fn = heapq.heappop(self._heap)
            self.clock = t
            fn()
        self.clock = target
        return self.event_log[log_start:]


def _payload_json(payload: Any) -> Any:
    if payload is None:
        return None
    if dataclasses.is_dataclass(payload) and not isinstance(payload, type):
        return dataclasses.asdict(payload)
    if isinstance(payload, (bytes, bytearray)):
        return {"hex": bytes(payload).hex()}
    return payload


def form_network(
    coordinator: CoordinatorConfig | Sequence[CoordinatorConfig],
    *,
    seed: int = 0,
    lqi_model: LqiModel | None = None,
    **kwargs: Any,
) -> ZigbeeNetwork:
    """Create a network from exactly one coordinator config."""
    if isinstance(coordinator, CoordinatorConfig):
        configs = [coordinator]
    else:
        configs = list(coordinator)
    if len(configs) != 1:
        raise ConfigurationError(
            f"exactly one coordinator config required, got {len(configs)}"
        )
    return ZigbeeNetwork(configs[0], seed=seed, lqi_model=lqi_model, **kwargs)
