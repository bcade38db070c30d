"""Live-serving runtime: broker TCP listener, HTTP/WS API, sim driver.

One asyncio loop hosts everything, which serializes all gateway
mutations for free: broker connections feed the sans-IO core, the sim
driver advances the scenario clock against wall time (scaled), and
uvicorn serves the API plus optional dashboard statics.
"""

from __future__ import annotations

import asyncio
import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import uvicorn

from .api import create_api
from .mqtt.bridge import BridgeBuffer, BufferedMessage, bridge_publish, bridge_pump
from .mqtt.broker import CloseConnection, MqttBroker, Send
from .mqtt.codec import (
    Connack,
    Connect,
    Pingreq,
    Publish,
    decode_packet,
    encode_packet,
)
from .scenario import Scenario

log = logging.getLogger("zbgw.server")

__all__ = ["RunSettings", "UplinkClient", "serve"]


@dataclass
class RunSettings:
    scenario: str = "office"
    seed: int | None = None
    broker_port: int = 1883
    http_port: int = 8080
    base_topic: str = "gw"
    registry_path: str | None = None
    telemetry_path: str | None = None
    dashboard_dir: str | None = None
    time_scale: float = 60.0  # simulated seconds per wall second
    uplink_address: str | None = None  # "host:port"
    uplink_capacity: int = 10_000
    uplink_username: str | None = None
    uplink_password: str | None = None
    heartbeat_s: float = 15.0
    extra: dict[str, Any] = field(default_factory=dict)


class BrokerServer:
    """TCP front-end feeding the sans-IO broker core."""

    def __init__(self, broker: MqttBroker, port: int, clock) -> None:
        self.broker = broker
        self.port = port
        self.clock = clock
        self.writers: dict[int, asyncio.StreamWriter] = {}
        self._conn_ids = itertools.count(1)
        self._server: asyncio.AbstractServer | None = None

    def apply(self, actions) -> None:
        for action in actions:
            writer = self.writers.get(action.conn_id)
            if writer is None:
                continue
            if isinstance(action, Send):
                try:
                    writer.write(encode_packet(action.packet))
                except Exception:  # connection raced shut
                    pass
            elif isinstance(action, CloseConnection):
                self.writers.pop(action.conn_id, None)
                writer.close()

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        conn_id = next(self._conn_ids)
        self.writers[conn_id] = writer
        self.apply(self.broker.connection_opened(conn_id, self.clock()))
        try:
            while True:
                data = await reader.read(4096)
                if not data:
                    break
                self.apply(self.broker.bytes_received(conn_id, data, self.clock()))
                if conn_id not in self.writers:
                    return
        except (ConnectionError, asyncio.IncompleteReadError):
            pass
        finally:
            if conn_id in self.writers:
                del self.writers[conn_id]
                self.apply(self.broker.connection_lost(conn_id, self.clock()))
                writer.close()

    async def start(self) -> None:
        self._server = await asyncio.start_server(self._handle, "0.0.0.0", self.port)
        log.info("broker listening on :%d", self.port)

    async def stop(self) -> None:
        if self._server:
            self._server.close()
            await self._server.wait_closed()


class UplinkClient:
    """Minimal MQTT 3.1.1 client for the edge-to-fog bridge relay.

    ``send`` succeeds once the QoS 1 publish is written to a live
    connection; a socket failure marks the uplink down and the message
    stays in the bridge buffer for the next pump.
    """

    def __init__(
        self,
        host: str,
        port: int,
        client_id: str = "zbgw-bridge",
        username: str | None = None,
        password: bytes | None = None,
    ) -> None:
        self.host = host
        self.port = port
        self.client_id = client_id
        self.username = username
        self.password = password
        self.connected = False
        self._writer: asyncio.StreamWriter | None = None
        self._packet_ids = itertools.count(1)
        self._task: asyncio.Task | None = None

    async def maintain(self) -> None:
        """Reconnect loop; run as a background task."""
        while True:
            try:
                await self._connect_once()
            except (ConnectionError, OSError, asyncio.TimeoutError) as exc:
                log.warning("uplink unavailable: %s", exc)
            self.connected = False
            self._writer = None
            await asyncio.sleep(2.0)

    async def _connect_once(self) -> None:
        reader, writer = await asyncio.open_connection(self.host, self.port)
        writer.write(
            encode_packet(
                Connect(self.client_id, keepalive_s=60, username=self.username, password=self.password)
            )
        )
        await writer.drain()
        buffer = bytearray()
        self._writer = writer
        ping_task = asyncio.create_task(self._ping_loop())
        try:
            while True:
                data = await reader.read(4096)
                if not data:
                    return
                buffer.extend(data)
                while True:
                    decoded = decode_packet(buffer)
                    if decoded is None:
                        break
                    packet, consumed = decoded
                    del buffer[:consumed]
                    if isinstance(packet, Connack):
                        if packet.return_code != 0:
                            raise ConnectionError(f"uplink refused: rc={packet.return_code}")
                        self.connected = True
                        log.info("uplink connected to %s:%d", self.host, self.port)
                    # pubacks/pingresps just confirm liveness
        finally:
            ping_task.cancel()

    async def _ping_loop(self) -> None:
        while True:
            await asyncio.sleep(30)
            if self._writer and self.connected:
                self._writer.write(encode_packet(Pingreq()))

    def send(self, message: BufferedMessage) -> bool:
        if not self.connected or self._writer is None:
            return False
        packet = Publish(
            topic=message.topic,
            payload=message.payload,
            qos=1,
            packet_id=next(self._packet_ids) % 0xFFFF or 1,
        )
        try:
            self._writer.write(encode_packet(packet))
        except Exception:
            self.connected = False
            return False
        return True


async def serve(scenario: Scenario, settings: RunSettings) -> None:
    """Run broker + API + scenario until cancelled."""
    broker = scenario.broker
    network = scenario.network
    loop = asyncio.get_running_loop()

    broker_server = BrokerServer(broker, settings.broker_port, loop.time)
    scenario.gateway.action_sink = broker_server.apply
    await broker_server.start()

    buffer = BridgeBuffer(settings.uplink_capacity)
    uplink: UplinkClient | None = None
    uplink_task: asyncio.Task | None = None
    if settings.uplink_address:
        host, _, port = settings.uplink_address.partition(":")
        uplink = UplinkClient(
            host,
            int(port or 1883),
            username=settings.uplink_username,
            password=settings.uplink_password.encode() if settings.uplink_password else None,
        )
        uplink_task = asyncio.create_task(uplink.maintain())
        base = scenario.gateway.topics.base
        broker.subscribe_internal(
            f"{base}/#", lambda t, p, q, r: bridge_publish(buffer, t, p, qos=1)
        )

    app = create_api(
        scenario.gateway,
        scenario.telemetry,
        heartbeat_s=settings.heartbeat_s,
        dashboard_dir=settings.dashboard_dir,
    )
    uvicorn_config = uvicorn.Config(
        app, host="0.0.0.0", port=settings.http_port, log_level="warning"
    )
    api_server = uvicorn.Server(uvicorn_config)
    api_task = asyncio.create_task(api_server.serve())

    dropped_reported = -1
    try:
        wall_step = 0.25
        while not api_task.done():
            await asyncio.sleep(wall_step)
            sim_dt = wall_step * settings.time_scale
            if sim_dt > 0:
                network.tick(sim_dt)
            broker_server.apply(broker.time_advanced(loop.time()))
            if uplink is not None:
                bridge_pump(buffer, uplink)
                if buffer.dropped != dropped_reported:
                    dropped_reported = buffer.dropped
                    broker_server.apply(
                        broker.set_sys_counter("messages/dropped", buffer.dropped)
                    )
    finally:
        api_server.should_exit = True
        if uplink_task:
            uplink_task.cancel()
        await broker_server.stop()
        scenario.telemetry.close()
