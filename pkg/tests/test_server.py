"""Socket-level tests: TCP broker front-end and the uplink relay path."""

import asyncio

from zbgw.mqtt.bridge import BridgeBuffer, bridge_publish, bridge_pump
from zbgw.mqtt.broker import MqttBroker
from zbgw.mqtt.codec import (
    Connack,
    Connect,
    Publish,
    Suback,
    Subscribe,
    decode_packet,
    encode_packet,
)
from zbgw.server import BrokerServer, UplinkClient


class WireClient:
    """Plain asyncio MQTT client speaking through the real codec."""

    def __init__(self):
        self.reader = None
        self.writer = None
        self.buffer = bytearray()

    async def connect(self, port: int, client_id: str):
        self.reader, self.writer = await asyncio.open_connection("127.0.0.1", port)
        await self.send(Connect(client_id))
        packet = await self.recv()
        assert isinstance(packet, Connack) and packet.return_code == 0
        return self

    async def send(self, packet):
        self.writer.write(encode_packet(packet))
        await self.writer.drain()

    async def recv(self, timeout: float = 3.0):
        while True:
            decoded = decode_packet(self.buffer)
            if decoded is not None:
                packet, consumed = decoded
                del self.buffer[:consumed]
                return packet
            chunk = await asyncio.wait_for(self.reader.read(4096), timeout)
            if not chunk:
                raise ConnectionError("closed")
            self.buffer.extend(chunk)

    async def close(self):
        self.writer.close()


async def start_broker(port: int = 0) -> tuple[MqttBroker, BrokerServer, int]:
    loop = asyncio.get_running_loop()
    broker = MqttBroker()
    server = BrokerServer(broker, port, loop.time)
    await server.start()
    actual_port = server._server.sockets[0].getsockname()[1]
    return broker, server, actual_port


def test_tcp_publish_subscribe_round_trip():
    asyncio.run(_tcp_round_trip())


async def _tcp_round_trip():
    broker, server, port = await start_broker()
    try:
        sub = await WireClient().connect(port, "sub")
        await sub.send(Subscribe(1, (("office/+", 0),)))
        assert isinstance(await sub.recv(), Suback)

        pub = await WireClient().connect(port, "pub")
        await pub.send(Publish("office/temp", b"21.5", retain=True))

        delivered = await sub.recv()
        assert delivered == Publish("office/temp", b"21.5", 0, False)

        late = await WireClient().connect(port, "late")
        await late.send(Subscribe(2, (("office/#", 0),)))
        packets = [await late.recv(), await late.recv()]
        retained = [p for p in packets if isinstance(p, Publish)]
        assert retained and retained[0].retain is True

        await sub.close()
        await pub.close()
        await late.close()
    finally:
        await server.stop()


def test_bridge_relays_edge_publishes_to_uplink_broker():
    asyncio.run(_bridge_relay())


async def _bridge_relay():
    # edge broker (local) and fog broker (uplink) in one loop
    edge_broker, edge_server, edge_port = await start_broker()
    fog_broker, fog_server, fog_port = await start_broker()
    try:
        fog_sub = await WireClient().connect(fog_port, "fog-consumer")
        await fog_sub.send(Subscribe(1, (("gw/#", 1),)))
        assert isinstance(await fog_sub.recv(), Suback)

        buffer = BridgeBuffer()
        uplink = UplinkClient(
            "127.0.0.1", fog_port, client_id="edge-bridge", username="edge01", password=b"pw"
        )
        task = asyncio.create_task(uplink.maintain())
        edge_broker.subscribe_internal(
            "gw/#", lambda t, p, q, r: bridge_publish(buffer, t, p)
        )
        for _ in range(100):
            if uplink.connected:
                break
            await asyncio.sleep(0.05)
        assert uplink.connected

        # messages published on the edge while the uplink is up...
        edge_server.apply(edge_broker.publish("gw/office1_co2", b'{"co2":812}'))
        assert bridge_pump(buffer, uplink) == 1
        relayed = await fog_sub.recv()
        assert isinstance(relayed, Publish)
        assert relayed.topic == "gw/office1_co2"
        assert relayed.payload == b'{"co2":812}'

        # ...and while it is down they buffer, then drain on reconnect
        uplink.connected = False
        for i in range(5):
            edge_server.apply(edge_broker.publish("gw/x", str(i).encode()))
        assert bridge_pump(buffer, uplink) == 0
        assert len(buffer) == 5
        uplink.connected = True
        assert bridge_pump(buffer, uplink) == 5
        payloads = []
        for _ in range(5):
            packet = await fog_sub.recv()
            payloads.append(packet.payload)
        assert payloads == [str(i).encode() for i in range(5)]

        task.cancel()
        await fog_sub.close()
    finally:
        await edge_server.stop()
        await fog_server.stop()
