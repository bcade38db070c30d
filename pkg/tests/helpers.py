"""Shared fixtures-in-code: broker harness and network population helpers."""

from __future__ import annotations

import random

from zbgw.install_code import Credential, CredentialKind, VendorFormat, crc16_install_code
from zbgw.mqtt.broker import BrokerConfig, CloseConnection, MqttBroker, Send
from zbgw.mqtt.codec import Connect, Publish, encode_packet
from zbgw.zigbee_sim import Node, Role, ZigbeeNetwork


def make_credential(rng: random.Random, length: int = 16) -> Credential:
    code = rng.randbytes(length)
    return Credential(
        CredentialKind.INSTALL_CODE, code, crc16_install_code(code), VendorFormat.RAW_HEX
    )


def add_device(
    net: ZigbeeNetwork,
    ieee: str,
    position,
    *,
    role: Role = Role.END_DEVICE,
    sleepy: bool = False,
    poll_interval: float | None = None,
    model_id: str | None = None,
    rng_seed: int = 99,
) -> Node:
    """Register a fresh valid credential and join the node."""
    cred = make_credential(random.Random(rng_seed + sum(ord(c) for c in ieee)))
    key = net.register_credential(ieee, cred)
    node = Node(
        ieee,
        role,
        position,
        sleepy=sleepy,
        poll_interval=poll_interval,
        model_id=model_id,
    )
    return net.join(node, key)


class Harness:
    """Owns a broker and routes returned actions to every fake client."""

    def __init__(self, config: BrokerConfig | None = None, broker: MqttBroker | None = None):
        self.broker = broker or MqttBroker(config)
        self.clients: dict[str, "Client"] = {}

    def client(self, conn_id: str, now: float = 0.0) -> "Client":
        client = Client(self, conn_id)
        self.clients[conn_id] = client
        self.apply(self.broker.connection_opened(conn_id, now))
        return client

    def apply(self, actions):
        for action in actions:
            target = self.clients.get(action.conn_id)
            if target is None:
                continue
            if isinstance(action, Send):
                target.inbox.append(action.packet)
            elif isinstance(action, CloseConnection):
                target.closed = True
        return actions

    def tick(self, now: float):
        return self.apply(self.broker.time_advanced(now))


class Client:
    """One fake connection; packets go through the wire codec both ways."""

    def __init__(self, harness: Harness, conn_id: str):
        self.harness = harness
        self.conn_id = conn_id
        self.inbox: list = []
        self.closed = False

    def send(self, packet, now: float = 0.0):
        return self.harness.apply(
            self.harness.broker.bytes_received(self.conn_id, encode_packet(packet), now)
        )

    def connect(self, client_id: str, keepalive: int = 0, now: float = 0.0):
        self.send(Connect(client_id, keepalive), now)
        return self

    def publishes(self) -> list[Publish]:
        return [p for p in self.inbox if isinstance(p, Publish)]
