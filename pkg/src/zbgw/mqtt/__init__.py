"""Embedded MQTT 3.1.1 stack: wire codec, broker core, uplink bridge.

Protocol level is fixed at 3.1.1 with QoS 0/1, clean sessions only; QoS
2, persistent sessions, and wills are deliberately absent. CONNECT
credentials are carried on the wire (the uplink bridge sends them) but
the embedded broker accepts any - it is a single-operator desk tool.
"""

from .bridge import BridgeBuffer, BufferedMessage, bridge_publish, bridge_pump
from .broker import BrokerConfig, CloseConnection, MqttBroker, Send
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
    RemainingLengthOverflow,
    Suback,
    Subscribe,
    Unsuback,
    Unsubscribe,
    decode_packet,
    decode_varint,
    encode_packet,
    encode_varint,
)
from .topics import InvalidFilter, TopicFilter, topic_matches, validate_topic

__all__ = [
    "BridgeBuffer",
    "BrokerConfig",
    "BufferedMessage",
    "CloseConnection",
    "Connack",
    "Connect",
    "Disconnect",
    "InvalidFilter",
    "MqttBroker",
    "MqttPacket",
    "Pingreq",
    "Pingresp",
    "ProtocolError",
    "Puback",
    "Publish",
    "RemainingLengthOverflow",
    "Send",
    "Suback",
    "Subscribe",
    "TopicFilter",
    "Unsuback",
    "Unsubscribe",
    "bridge_publish",
    "bridge_pump",
    "decode_packet",
    "decode_varint",
    "encode_packet",
    "encode_varint",
    "topic_matches",
    "validate_topic",
]
