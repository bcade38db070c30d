"""MQTT 3.1.1 wire codec for the QoS 0/1 clean-session subset.

``decode_packet`` is incremental: it returns None while the buffer holds
an incomplete frame and never reads past the declared remaining length,
so callers can append stream chunks and retry. Malformed input raises
:class:`ProtocolError` carrying the absolute byte offset of the offense.

Encoding is canonical (minimal varints), so encode(decode(b)) == b for
every valid frame.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from ..errors import GatewayError
from .topics import validate_topic

__all__ = [
    "Connack",
    "Connect",
    "Disconnect",
    "MqttPacket",
    "Pingreq",
    "Pingresp",
    "ProtocolError",
    "Puback",
    "Publish",
    "RemainingLengthOverflow",
    "Suback",
    "Subscribe",
    "Unsuback",
    "Unsubscribe",
    "decode_packet",
    "decode_varint",
    "encode_packet",
    "encode_varint",
]

MAX_REMAINING_LENGTH = 268_435_455


class ProtocolError(GatewayError):
    """Malformed or unsupported wire data; ``offset`` is the byte at fault."""

    def __init__(self, message: str, offset: int = 0) -> None:
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class RemainingLengthOverflow(ProtocolError):
    """Remaining-length varint exceeds four bytes / 268,435,455."""


@dataclass(frozen=True)
class Connect:
    client_id: str
    keepalive_s: int = 0
    clean_session: bool = True
    username: str | None = None
    password: bytes | None = None


@dataclass(frozen=True)
class Connack:
    session_present: bool = False
    return_code: int = 0


@dataclass(frozen=True)
class Publish:
    topic: str
    payload: bytes = b""
    qos: int = 0
    retain: bool = False
    packet_id: int | None = None
    dup: bool = False


@dataclass(frozen=True)
class Puback:
    packet_id: int


@dataclass(frozen=True)
class Subscribe:
    packet_id: int
    filters: tuple[tuple[str, int], ...]


@dataclass(frozen=True)
class Suback:
    packet_id: int
    return_codes: tuple[int, ...]


@dataclass(frozen=True)
class Unsubscribe:
    packet_id: int
    filters: tuple[str, ...]


@dataclass(frozen=True)
class Unsuback:
    packet_id: int


@dataclass(frozen=True)
class Pingreq:
    pass


@dataclass(frozen=True)
class Pingresp:
    pass


@dataclass(frozen=True)
class Disconnect:
    pass


MqttPacket = Union[
    Connect,
    Connack,
    Publish,
    Puback,
    Subscribe,
    Suback,
    Unsubscribe,
    Unsuback,
    Pingreq,
    Pingresp,
    Disconnect,
]

_TYPE_CONNECT = 1
_TYPE_CONNACK = 2
_TYPE_PUBLISH = 3
_TYPE_PUBACK = 4
_TYPE_SUBSCRIBE = 8
_TYPE_SUBACK = 9
_TYPE_UNSUBSCRIBE = 10
_TYPE_UNSUBACK = 11
_TYPE_PINGREQ = 12
_TYPE_PINGRESP = 13
_TYPE_DISCONNECT = 14


def encode_varint(value: int) -> bytes:
    """Remaining-length encoding: 7 bits per byte, continuation high bit."""
    if not 0 <= value <= MAX_REMAINING_LENGTH:
        raise RemainingLengthOverflow(f"remaining length {value} out of range")
    out = bytearray()
    while True:
        digit = value % 128
        value //= 128
        if value:
            out.append(digit | 0x80)
        else:
            out.append(digit)
            return bytes(out)


def decode_varint(data: bytes, offset: int = 0) -> tuple[int, int] | None:
    """Decode a varint at ``offset``; returns (value, bytes used) or None."""
    value = 0
    for i in range(4):
        if offset + i >= len(data):
            return None
        byte = data[offset + i]
        value |= (byte & 0x7F) << (7 * i)
        if not byte & 0x80:
            return value, i + 1
    raise RemainingLengthOverflow("remaining length exceeds 4 bytes", offset + 3)


class _Reader:
    """Bounded cursor over a packet body; errors carry absolute offsets."""

    def __init__(self, body: memoryview, base_offset: int) -> None:
        self._body = body
        self._base = base_offset
        self._pos = 0

    @property
    def offset(self) -> int:
        return self._base + self._pos

    def remaining(self) -> int:
        return len(self._body) - self._pos

    def take(self, n: int) -> bytes:
        if self.remaining() < n:
            raise ProtocolError(
                f"body truncated: wanted {n} bytes, {self.remaining()} left", self.offset
            )
        chunk = bytes(self._body[self._pos : self._pos + n])
        self._pos += n
        return chunk

    def byte(self) -> int:
        return self.take(1)[0]

    def uint16(self) -> int:
        raw = self.take(2)
        return (raw[0] << 8) | raw[1]

    def string(self) -> str:
        length = self.uint16()
        start = self.offset
        raw = self.take(length)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolError(f"invalid UTF-8 string: {exc}", start) from exc

    def expect_end(self) -> None:
        if self.remaining():
            raise ProtocolError(
                f"{self.remaining()} unexpected trailing bytes in body", self.offset
            )


def _string(value: str) -> bytes:
    raw = value.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ProtocolError(f"string too long ({len(raw)} bytes)")
    return len(raw).to_bytes(2, "big") + raw


def _check_packet_id(packet_id: int) -> int:
    if not 1 <= packet_id <= 0xFFFF:
        raise ProtocolError(f"packet id {packet_id} out of range")
    return packet_id


def encode_packet(packet: MqttPacket) -> bytes:
    """Serialize a packet; raises ProtocolError on invariant violations."""
    if isinstance(packet, Connect):
        if packet.password is not None and packet.username is None:
            raise ProtocolError("password requires a username")
        flags = 0x02 if packet.clean_session else 0x00
        if packet.username is not None:
            flags |= 0x80
        if packet.password is not None:
            flags |= 0x40
        body = (
            _string("MQTT")
            + bytes((4, flags))
            + int(packet.keepalive_s).to_bytes(2, "big")
            + _string(packet.client_id)
        )
        if packet.username is not None:
            body += _string(packet.username)
        if packet.password is not None:
            body += len(packet.password).to_bytes(2, "big") + packet.password
        return _frame(_TYPE_CONNECT, 0, body)
    if isinstance(packet, Connack):
        return _frame(
            _TYPE_CONNACK, 0, bytes((1 if packet.session_present else 0, packet.return_code))
        )
    if isinstance(packet, Publish):
        validate_topic(packet.topic)
        if packet.qos not in (0, 1):
            raise ProtocolError(f"unsupported qos {packet.qos}")
        if packet.qos == 1 and packet.packet_id is None:
            raise ProtocolError("qos 1 publish requires a packet id")
        if packet.qos == 0 and packet.packet_id is not None:
            raise ProtocolError("qos 0 publish must not carry a packet id")
        if packet.qos == 0 and packet.dup:
            raise ProtocolError("dup flag is invalid on qos 0")
        flags = (0x08 if packet.dup else 0) | (packet.qos << 1) | (0x01 if packet.retain else 0)
        body = _string(packet.topic)
        if packet.qos == 1:
            body += _check_packet_id(packet.packet_id).to_bytes(2, "big")
        body += bytes(packet.payload)
        return _frame(_TYPE_PUBLISH, flags, body)
    if isinstance(packet, Puback):
        return _frame(_TYPE_PUBACK, 0, _check_packet_id(packet.packet_id).to_bytes(2, "big"))
    if isinstance(packet, Subscribe):
        if not packet.filters:
            raise ProtocolError("subscribe requires at least one filter")
        body = _check_packet_id(packet.packet_id).to_bytes(2, "big")
        for topic_filter, qos in packet.filters:
            if qos not in (0, 1):
                raise ProtocolError(f"unsupported subscription qos {qos}")
            body += _string(topic_filter) + bytes((qos,))
        return _frame(_TYPE_SUBSCRIBE, 0x02, body)
    if isinstance(packet, Suback):
        if not packet.return_codes:
            raise ProtocolError("suback requires at least one return code")
        body = _check_packet_id(packet.packet_id).to_bytes(2, "big")
        for code in packet.return_codes:
            if code not in (0x00, 0x01, 0x80):
                raise ProtocolError(f"invalid suback return code {code:#x}")
            body += bytes((code,))
        return _frame(_TYPE_SUBACK, 0, body)
    if isinstance(packet, Unsubscribe):
        if not packet.filters:
            raise ProtocolError("unsubscribe requires at least one filter")
        body = _check_packet_id(packet.packet_id).to_bytes(2, "big")
        for topic_filter in packet.filters:
            body += _string(topic_filter)
        return _frame(_TYPE_UNSUBSCRIBE, 0x02, body)
    if isinstance(packet, Unsuback):
        return _frame(_TYPE_UNSUBACK, 0, _check_packet_id(packet.packet_id).to_bytes(2, "big"))
    if isinstance(packet, Pingreq):
        return _frame(_TYPE_PINGREQ, 0, b"")
    if isinstance(packet, Pingresp):
        return _frame(_TYPE_PINGRESP, 0, b"")
    if isinstance(packet, Disconnect):
        return _frame(_TYPE_DISCONNECT, 0, b"")
    raise ProtocolError(f"cannot encode {type(packet).__name__}")


def _frame(packet_type: int, flags: int, body: bytes) -> bytes:
    return bytes(((packet_type << 4) | flags,)) + encode_varint(len(body)) + body


def decode_packet(data: bytes | bytearray | memoryview) -> tuple[MqttPacket, int] | None:
    """Decode one packet from the head of ``data``.

    Returns (packet, bytes consumed), or None when more bytes are needed
    for a complete frame. Never touches bytes beyond the declared
    remaining length.
    """
    view = memoryview(data)
    if len(view) < 2:
        return None
    first = view[0]
    packet_type = first >> 4
    flags = first & 0x0F

    varint = decode_varint(view, 1)
    if varint is None:
        return None
    remaining, varint_len = varint
    header_len = 1 + varint_len
    if len(view) < header_len + remaining:
        return None

    body = view[header_len : header_len + remaining]
    consumed = header_len + remaining
    reader = _Reader(body, header_len)
    packet = _decode_body(packet_type, flags, reader, remaining)
    return packet, consumed


def _require_flags(flags: int, expected: int, packet_name: str) -> None:
    if flags != expected:
        raise ProtocolError(f"{packet_name} flags must be {expected:#06b}, got {flags:#06b}", 0)


def _decode_body(packet_type: int, flags: int, reader: _Reader, remaining: int) -> MqttPacket:
    if packet_type == _TYPE_CONNECT:
        _require_flags(flags, 0, "connect")
        name_offset = reader.offset
        if reader.string() != "MQTT":
            raise ProtocolError("protocol name must be 'MQTT'", name_offset)
        level_offset = reader.offset
        if reader.byte() != 4:
            raise ProtocolError("protocol level must be 4 (MQTT 3.1.1)", level_offset)
        flags_offset = reader.offset
        connect_flags = reader.byte()
        if connect_flags & 0x01:
            raise ProtocolError("connect reserved flag must be 0", flags_offset)
        if connect_flags & 0x3C:
            raise ProtocolError("will messages are not supported here", flags_offset)
        if connect_flags & 0x40 and not connect_flags & 0x80:
            raise ProtocolError("password flag requires the username flag", flags_offset)
        keepalive = reader.uint16()
        client_id = reader.string()
        username = reader.string() if connect_flags & 0x80 else None
        password: bytes | None = None
        if connect_flags & 0x40:
            password = reader.take(reader.uint16())
        reader.expect_end()
        return Connect(client_id, keepalive, bool(connect_flags & 0x02), username, password)

    if packet_type == _TYPE_CONNACK:
        _require_flags(flags, 0, "connack")
        ack_flags = reader.byte()
        if ack_flags & 0xFE:
            raise ProtocolError("connack flags reserved bits must be 0", reader.offset - 1)
        code = reader.byte()
        reader.expect_end()
        return Connack(bool(ack_flags & 0x01), code)

    if packet_type == _TYPE_PUBLISH:
        dup = bool(flags & 0x08)
        qos = (flags >> 1) & 0x03
        retain = bool(flags & 0x01)
        if qos > 1:
            raise ProtocolError(f"qos {qos} not supported", 0)
        if qos == 0 and dup:
            raise ProtocolError("dup flag invalid on qos 0", 0)
        topic_offset = reader.offset
        topic = reader.string()
        try:
            validate_topic(topic)
        except GatewayError as exc:
            raise ProtocolError(str(exc), topic_offset) from exc
        packet_id = reader.uint16() if qos == 1 else None
        if packet_id == 0:
            raise ProtocolError("packet id must be non-zero", reader.offset - 2)
        payload = reader.take(reader.remaining())
        return Publish(topic, payload, qos, retain, packet_id, dup)

    if packet_type == _TYPE_PUBACK:
        _require_flags(flags, 0, "puback")
        packet_id = reader.uint16()
        reader.expect_end()
        return Puback(packet_id)

    if packet_type == _TYPE_SUBSCRIBE:
        _require_flags(flags, 0x02, "subscribe")
        packet_id = reader.uint16()
        filters: list[tuple[str, int]] = []
        while reader.remaining():
            topic_filter = reader.string()
            qos_offset = reader.offset
            qos = reader.byte()
            if qos not in (0, 1):
                raise ProtocolError(f"subscription qos {qos} not supported", qos_offset)
            filters.append((topic_filter, qos))
        if not filters:
            raise ProtocolError("subscribe without filters", reader.offset)
        return Subscribe(packet_id, tuple(filters))

    if packet_type == _TYPE_SUBACK:
        _require_flags(flags, 0, "suback")
        packet_id = reader.uint16()
        codes = []
        while reader.remaining():
            code_offset = reader.offset
            code = reader.byte()
            if code not in (0x00, 0x01, 0x80):
                raise ProtocolError(f"invalid suback return code {code:#x}", code_offset)
            codes.append(code)
        if not codes:
            raise ProtocolError("suback without return codes", reader.offset)
        return Suback(packet_id, tuple(codes))

    if packet_type == _TYPE_UNSUBSCRIBE:
        _require_flags(flags, 0x02, "unsubscribe")
        packet_id = reader.uint16()
        filters = []
        while reader.remaining():
            filters.append(reader.string())
        if not filters:
            raise ProtocolError("unsubscribe without filters", reader.offset)
        return Unsubscribe(packet_id, tuple(filters))

    if packet_type == _TYPE_UNSUBACK:
        _require_flags(flags, 0, "unsuback")
        packet_id = reader.uint16()
        reader.expect_end()
        return Unsuback(packet_id)

    if packet_type == _TYPE_PINGREQ:
        _require_flags(flags, 0, "pingreq")
        reader.expect_end()
        return Pingreq()

    if packet_type == _TYPE_PINGRESP:
        _require_flags(flags, 0, "pingresp")
        reader.expect_end()
        return Pingresp()

    if packet_type == _TYPE_DISCONNECT:
        _require_flags(flags, 0, "disconnect")
        reader.expect_end()
        return Disconnect()

    raise ProtocolError(f"unsupported packet type {packet_type}", 0)
