"""Embedded broker core: sessions, wildcard fan-out, retained, QoS 1.

The core is sans-IO: transports feed it opened/bytes/lost/time events
and apply the returned actions (send packet, close connection). All
state changes happen on whatever single context drives those calls, so
there is no locking; connection I/O may be concurrent as long as events
funnel through one ordered stream.

Clean sessions only: a reconnect under a live client id evicts the old
connection, and disconnect discards all session state including
unacknowledged QoS 1 deliveries.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Callable

from .codec import (
    Connack,
    Connect,
    Disconnect,
    MqttPacket,
    Pingreq,
    Pingresp,
    ProtocolError,
    Puback,
    Publish,
    Suback,
    Subscribe,
    Unsuback,
    Unsubscribe,
    decode_packet,
)
from .topics import InvalidFilter, TopicFilter

__all__ = ["BrokerConfig", "CloseConnection", "MqttBroker", "Send"]


@dataclass(frozen=True)
class Send:
    conn_id: Any
    packet: MqttPacket


@dataclass(frozen=True)
class CloseConnection:
    conn_id: Any
    reason: str = ""


Action = Send | CloseConnection


@dataclass
class BrokerConfig:
    retransmit_interval_s: float = 5.0
    keepalive_grace: float = 1.5
    sys_topics: bool = True


@dataclass
class _InFlight:
    publish: Publish
    last_tx: float


@dataclass
class _Session:
    client_id: str
    conn_id: Any
    keepalive_s: int
    subscriptions: dict[str, tuple[TopicFilter, int]] = field(default_factory=dict)
    inflight: dict[int, _InFlight] = field(default_factory=dict)
    _pid_counter: itertools.count = field(default_factory=lambda: itertools.count(1))

    def next_packet_id(self) -> int:
        while True:
            pid = next(self._pid_counter)
            if pid > 0xFFFF:
                self._pid_counter = itertools.count(1)
                continue
            if pid not in self.inflight:
                return pid


@dataclass
class _Conn:
    buffer: bytearray = field(default_factory=bytearray)
    client_id: str | None = None
    last_rx: float = 0.0


class MqttBroker:
    """Single-owner broker state machine."""

    def __init__(self, config: BrokerConfig | None = None) -> None:
        self.config = config or BrokerConfig()
        self._conns: dict[Any, _Conn] = {}
        self._sessions: dict[str, _Session] = {}
        self._retained: dict[str, tuple[bytes, int]] = {}
        self._internal_subs: list[tuple[TopicFilter, Callable[[str, bytes, int, bool], None]]] = []
        self._actions: list[Action] = []
        self._anon_ids = itertools.count(1)
        self.messages_received = 0
        self.messages_sent = 0
        # merged monotonic clock: callers may feed different time bases
        # (simulated vs wall); the max keeps timers coherent either way
        self._now = 0.0

    def _advance(self, now: float) -> float:
        self._now = max(self._now, now)
        return self._now

    # -- inspection ----------------------------------------------------------

    @property
    def session_count(self) -> int:
        return len(self._sessions)

    def retained_message(self, topic: str) -> bytes | None:
        entry = self._retained.get(topic)
        return entry[0] if entry else None

    def retained_topics(self) -> list[str]:
        return list(self._retained)

    # -- transport events ------------------------------------------------------

    def connection_opened(self, conn_id: Any, now: float = 0.0) -> list[Action]:
        self._conns[conn_id] = _Conn(last_rx=self._advance(now))
        return self._drain()

    def bytes_received(self, conn_id: Any, data: bytes, now: float = 0.0) -> list[Action]:
        conn = self._conns.get(conn_id)
        if conn is None:
            return self._drain()
        conn.last_rx = self._advance(now)
        conn.buffer.extend(data)
        while True:
            try:
                decoded = decode_packet(conn.buffer)
            except ProtocolError as exc:
                self._close(conn_id, f"protocol error: {exc}")
                break
            if decoded is None:
                break
            packet, consumed = decoded
            del conn.buffer[:consumed]
            try:
                self._handle(conn_id, conn, packet, now)
            except ProtocolError as exc:
                self._close(conn_id, f"protocol error: {exc}")
                break
            if conn_id not in self._conns:
                break
        return self._drain()

    def connection_lost(self, conn_id: Any, now: float = 0.0) -> list[Action]:
        """Transport dropped; clean session state evaporates (QoS 1 abandoned)."""
        conn = self._conns.pop(conn_id, None)
        if conn and conn.client_id:
            session = self._sessions.get(conn.client_id)
            if session and session.conn_id == conn_id:
                del self._sessions[conn.client_id]
                self._publish_sys_counters()
        return self._drain()

    def time_advanced(self, now: float) -> list[Action]:
        """Drive retransmissions and keepalive expiry."""
        now = self._advance(now)
        for session in list(self._sessions.values()):
            for inflight in session.inflight.values():
                if now - inflight.last_tx >= self.config.retransmit_interval_s:
                    inflight.last_tx = now
                    retry = Publish(
                        topic=inflight.publish.topic,
                        payload=inflight.publish.payload,
                        qos=1,
                        retain=inflight.publish.retain,
                        packet_id=inflight.publish.packet_id,
                        dup=True,
                    )
                    self._send(session.conn_id, retry)
        for conn_id, conn in list(self._conns.items()):
            if conn.client_id is None:
                continue
            session = self._sessions.get(conn.client_id)
            if session is None or session.keepalive_s <= 0:
                continue
            if now - conn.last_rx > self.config.keepalive_grace * session.keepalive_s:
                self._close(conn_id, "keepalive expired")
        return self._drain()

    # -- in-process surface ----------------------------------------------------

    def publish(
        self, topic: str, payload: bytes, qos: int = 0, retain: bool = False, now: float = 0.0
    ) -> list[Action]:
        """Publish from inside the process (gateway, $SYS, tests)."""
        self._ingress_publish(topic, payload, qos, retain, self._advance(now))
        return self._drain()

    def subscribe_internal(
        self, filter_: str, callback: Callable[[str, bytes, int, bool], None]
    ) -> None:
        """In-process subscriber: callback(topic, payload, qos, retain)."""
        self._internal_subs.append((TopicFilter.parse(filter_), callback))

    # -- packet handling ---------------------------------------------------------

    def _handle(self, conn_id: Any, conn: _Conn, packet: MqttPacket, now: float) -> None:
        if isinstance(packet, Connect):
            self._handle_connect(conn_id, conn, packet, now)
            return
        if conn.client_id is None:
            raise ProtocolError("first packet must be CONNECT")
        session = self._sessions.get(conn.client_id)
        if session is None or session.conn_id != conn_id:
            self._close(conn_id, "session gone")
            return

        if isinstance(packet, Publish):
            if packet.qos == 1:
                assert packet.packet_id is not None
                self._send(conn_id, Puback(packet.packet_id))
            self._ingress_publish(
                packet.topic, packet.payload, packet.qos, packet.retain, self._now
            )
        elif isinstance(packet, Subscribe):
            self._handle_subscribe(session, packet, now)
        elif isinstance(packet, Unsubscribe):
            for topic_filter in packet.filters:
                session.subscriptions.pop(topic_filter, None)
            self._send(conn_id, Unsuback(packet.packet_id))
        elif isinstance(packet, Puback):
            session.inflight.pop(packet.packet_id, None)
        elif isinstance(packet, Pingreq):
            self._send(conn_id, Pingresp())
        elif isinstance(packet, Disconnect):
            self._close(conn_id, "client disconnect")
        else:
            raise ProtocolError(f"unexpected {type(packet).__name__} from client")

    def _handle_connect(self, conn_id: Any, conn: _Conn, packet: Connect, now: float) -> None:
        if conn.client_id is not None:
            raise ProtocolError("duplicate CONNECT")
        client_id = packet.client_id or f"anon-{next(self._anon_ids)}"
        existing = self._sessions.get(client_id)
        if existing is not None:
            # takeover: evict the old connection, clean session restarts
            old_conn = existing.conn_id
            self._sessions.pop(client_id, None)
            if old_conn in self._conns:
                self._conns[old_conn].client_id = None
                self._close(old_conn, "session taken over")
        conn.client_id = client_id
        conn.last_rx = now
        self._sessions[client_id] = _Session(client_id, conn_id, packet.keepalive_s)
        self._send(conn_id, Connack(session_present=False, return_code=0))
        self._publish_sys_counters()

    def _handle_subscribe(self, session: _Session, packet: Subscribe, now: float) -> None:
        codes: list[int] = []
        granted: list[tuple[str, TopicFilter, int]] = []
        for filter_str, requested_qos in packet.filters:
            try:
                parsed = TopicFilter.parse(filter_str)
            except InvalidFilter:
                codes.append(0x80)
                continue
            qos = min(requested_qos, 1)
            session.subscriptions[filter_str] = (parsed, qos)
            granted.append((filter_str, parsed, qos))
            codes.append(qos)
        self._send(session.conn_id, Suback(packet.packet_id, tuple(codes)))
        # retained replay for the filters just granted
        for _, parsed, sub_qos in granted:
            for topic in list(self._retained):
                if parsed.matches(topic):
                    payload, retained_qos = self._retained[topic]
                    self._deliver(session, topic, payload, min(sub_qos, retained_qos), True, now)

    # -- publish pipeline ---------------------------------------------------------

    def _ingress_publish(
        self, topic: str, payload: bytes, qos: int, retain: bool, now: float
    ) -> None:
        is_sys = topic.startswith("$")
        if not is_sys:
            self.messages_received += 1
        if retain:
            if payload:
                self._retained[topic] = (bytes(payload), qos)
            else:
                self._retained.pop(topic, None)  # zero-byte payload clears
        for parsed, callback in self._internal_subs:
            if parsed.matches(topic):
                callback(topic, bytes(payload), qos, retain)
        for client_id in sorted(self._sessions):
            session = self._sessions[client_id]
            best: int | None = None
            for parsed, sub_qos in session.subscriptions.values():
                if parsed.matches(topic):
                    effective = min(qos, sub_qos)
                    best = effective if best is None else max(best, effective)
            if best is not None:
                self._deliver(session, topic, payload, best, False, now)
        if not is_sys:
            self._publish_sys_counters()

    def _deliver(
        self, session: _Session, topic: str, payload: bytes, qos: int, retain: bool, now: float
    ) -> None:
        if qos == 0:
            self._send(session.conn_id, Publish(topic, bytes(payload), 0, retain))
            return
        pid = session.next_packet_id()
        publish = Publish(topic, bytes(payload), 1, retain, pid)
        session.inflight[pid] = _InFlight(publish, now)
        self._send(session.conn_id, publish)

    # -- $SYS -----------------------------------------------------------------

    def _publish_sys_counters(self) -> None:
        if not self.config.sys_topics:
            return
        counters = {
            "$SYS/broker/messages/received": self.messages_received,
            "$SYS/broker/messages/sent": self.messages_sent,
            "$SYS/broker/sessions": len(self._sessions),
        }
        for topic, value in counters.items():
            payload = str(value).encode()
            if self._retained.get(topic, (None, 0))[0] != payload:
                self._ingress_publish(topic, payload, 0, True, 0.0)

    def set_sys_counter(self, name: str, value: int | str) -> list[Action]:
        """Expose an external counter (e.g. bridge drops) under $SYS."""
        if self.config.sys_topics:
            self._ingress_publish(f"$SYS/broker/{name}", str(value).encode(), 0, True, 0.0)
        return self._drain()

    # -- plumbing ----------------------------------------------------------------

    def _send(self, conn_id: Any, packet: MqttPacket) -> None:
        if conn_id is None or conn_id not in self._conns:
            return
        if isinstance(packet, Publish) and not packet.topic.startswith("$"):
            self.messages_sent += 1
        self._actions.append(Send(conn_id, packet))

    def _close(self, conn_id: Any, reason: str) -> None:
        conn = self._conns.pop(conn_id, None)
        if conn and conn.client_id:
            session = self._sessions.get(conn.client_id)
            if session and session.conn_id == conn_id:
                del self._sessions[conn.client_id]
        self._actions.append(CloseConnection(conn_id, reason))
        self._publish_sys_counters()

    def _drain(self) -> list[Action]:
        actions, self._actions = self._actions, []
        return actions
