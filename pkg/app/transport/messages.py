from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Union

from app.core.errors import PayloadTooLarge
from app.security.principals import Principal
from app.transport.codec import encode_payload
from app.transport.topics import Topic, parse_topic

MAX_PAYLOAD_BYTES = 256 * 1024


@dataclass
class WireMessage:
    """
    One message on a shadow topic.

    `body` is either ready UTF-8 JSON bytes or a payload object that is
    encoded on first access to `payload`. In-process subscribers that read
    `body` directly never pay for encoding.
    """

    topic: Topic
    body: Union[bytes, Any]
    qos: int = 1
    max_bytes: int = field(default=MAX_PAYLOAD_BYTES, repr=False)

    def __post_init__(self) -> None:
        if isinstance(self.topic, str):
            self.topic = parse_topic(self.topic)
        if self.qos not in (0, 1):
            raise ValueError(f"Unsupported QoS: {self.qos}")
        if isinstance(self.body, (bytes, bytearray)):
            self._check_size(len(self.body))

    def _check_size(self, size: int) -> None:
        if size > self.max_bytes:
            raise PayloadTooLarge(f"Payload of {size} bytes exceeds {self.max_bytes} bytes on {self.topic}")

    @cached_property
    def payload(self) -> bytes:
        if isinstance(self.body, (bytes, bytearray)):
            return bytes(self.body)
        encoded = encode_payload(self.body)
        self._check_size(len(encoded))
        return encoded

    def encode(self) -> bytes:
        """Encode now, raising PayloadTooLarge before the message is handed to any subscriber."""
        return self.payload

    @property
    def is_encoded(self) -> bool:
        return isinstance(self.body, (bytes, bytearray)) or "payload" in self.__dict__


@dataclass(frozen=True)
class Delivery:
    """A message as handed to a subscriber, together with who published it."""

    message: WireMessage
    sender: Principal

    @property
    def topic(self) -> Topic:
        return self.message.topic
