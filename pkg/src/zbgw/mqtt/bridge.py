"""Edge-to-uplink store-and-forward buffer.

Messages destined for the uplink broker always pass through a bounded
FIFO buffer. While the uplink is connected the pump drains it in order
at QoS 1; while it is down messages pile up, and on overflow the oldest
is dropped (counted, never raised - buffering *is* the error handling).
A message is only removed from the buffer once the uplink accepts it,
so a send interrupted by a disconnect is retried on reconnect:
at-least-once delivery in FIFO order.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Protocol

__all__ = ["BridgeBuffer", "BufferedMessage", "Uplink", "bridge_publish", "bridge_pump"]

DEFAULT_CAPACITY = 10_000


@dataclass(frozen=True)
class BufferedMessage:
    topic: str
    payload: bytes
    qos: int = 1


class Uplink(Protocol):
    """Transport the pump relays into."""

    @property
    def connected(self) -> bool: ...

    def send(self, message: BufferedMessage) -> bool:
        """True when the uplink accepted the message (acked for QoS 1)."""
        ...


class BridgeBuffer:
    """Bounded FIFO with drop-oldest overflow accounting."""

    def __init__(self, capacity: int = DEFAULT_CAPACITY) -> None:
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = capacity
        self._queue: deque[BufferedMessage] = deque()
        self.dropped = 0
        self.relayed = 0
        self.high_water = 0

    def __len__(self) -> int:
        return len(self._queue)

    def push(self, message: BufferedMessage) -> BufferedMessage | None:
        """Enqueue; returns the dropped oldest message on overflow."""
        dropped = None
        if len(self._queue) >= self.capacity:
            dropped = self._queue.popleft()
            self.dropped += 1
        self._queue.append(message)
        self.high_water = max(self.high_water, len(self._queue))
        return dropped

    def peek(self) -> BufferedMessage | None:
        return self._queue[0] if self._queue else None

    def pop(self) -> BufferedMessage:
        return self._queue.popleft()


def bridge_publish(buffer: BridgeBuffer, topic: str, payload: bytes, qos: int = 1) -> None:
    """Offer a message to the uplink path; never fails toward the caller."""
    buffer.push(BufferedMessage(topic, bytes(payload), qos))


def bridge_pump(buffer: BridgeBuffer, uplink: Uplink) -> int:
    """Relay as much of the buffer as the uplink will take, in FIFO order.

    Returns the number of messages relayed. The head message is removed
    only after the uplink accepts it, so failures leave it queued for the
    next pump (at-least-once).
    """
    relayed = 0
    while len(buffer) and uplink.connected:
        message = buffer.peek()
        assert message is not None
        if not uplink.send(message):
            break
        buffer.pop()
        buffer.relayed += 1
        relayed += 1
    return relayed
