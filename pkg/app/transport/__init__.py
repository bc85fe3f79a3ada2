"""Shadow topic grammar, JSON wire format and message envelopes.

The bus implementations live in `app.transport.bus` and
`app.transport.mqtt_bridge`; they depend on the security package and are
imported from there directly.
"""
from .codec import UpdateRequest, decode_document, decode_object, decode_update, encode_document, encode_payload
from .messages import MAX_PAYLOAD_BYTES, Delivery, WireMessage
from .topics import RESPONSE_CHANNELS, Channel, Topic, make_topic, parse_topic, topic_for, topic_matches

__all__ = [
    "MAX_PAYLOAD_BYTES",
    "RESPONSE_CHANNELS",
    "Channel",
    "Delivery",
    "Topic",
    "UpdateRequest",
    "WireMessage",
    "decode_document",
    "decode_object",
    "decode_update",
    "encode_document",
    "encode_payload",
    "make_topic",
    "parse_topic",
    "topic_for",
    "topic_matches",
]
