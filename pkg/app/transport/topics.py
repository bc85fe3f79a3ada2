"""
Shadow topic grammar (AWS-style):

    base shadow:   things/{device}/shadow/{channel}
    named shadow:  things/{device}/shadow/name/{tag}/{channel}
    admin channel: things/{device}/shadow/tags/push

These strings are the external contract of the service.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional

from paho.mqtt.client import topic_matches_sub

from app.core.errors import InvalidKey, InvalidTag, UnparsableTopic
from app.domain.validators import BASE_SHADOW, normalize_tag, validate_device_id


class Channel(str, Enum):
    UPDATE = "update"
    UPDATE_ACCEPTED = "update/accepted"
    UPDATE_REJECTED = "update/rejected"
    UPDATE_DELTA = "update/delta"
    UPDATE_DOCUMENTS = "update/documents"
    GET = "get"
    GET_ACCEPTED = "get/accepted"
    GET_REJECTED = "get/rejected"
    TAGS_PUSH = "tags/push"


# Channels only the shadow service publishes on
RESPONSE_CHANNELS = frozenset(
    {
        Channel.UPDATE_ACCEPTED,
        Channel.UPDATE_REJECTED,
        Channel.UPDATE_DELTA,
        Channel.UPDATE_DOCUMENTS,
        Channel.GET_ACCEPTED,
        Channel.GET_REJECTED,
    }
)

_CHANNELS = {channel.value: channel for channel in Channel}


@dataclass(frozen=True)
class Topic:
    device_id: str
    shadow_name: str
    channel: Channel

    @property
    def is_base(self) -> bool:
        return self.shadow_name == BASE_SHADOW

    @property
    def tag(self) -> Optional[str]:
        return None if self.is_base else self.shadow_name

    def render(self) -> str:
        if self.is_base:
            return f"things/{self.device_id}/shadow/{self.channel.value}"
        return f"things/{self.device_id}/shadow/name/{self.shadow_name}/{self.channel.value}"

    def sibling(self, channel: Channel) -> "Topic":
        return Topic(self.device_id, self.shadow_name, channel)

    def __str__(self) -> str:
        return self.render()


def make_topic(device_id: str, shadow_name: Optional[str], channel) -> Topic:
    """Validated Topic. `shadow_name` None or "base" means the base shadow."""
    try:
        validate_device_id(device_id)
        name = BASE_SHADOW if shadow_name in (None, BASE_SHADOW) else normalize_tag(shadow_name)
        if name != BASE_SHADOW and name != shadow_name:
            raise InvalidTag(f"Shadow name must be lower-case: {shadow_name!r}")
        resolved = channel if isinstance(channel, Channel) else _CHANNELS[channel]
    except (InvalidKey, InvalidTag) as e:
        raise UnparsableTopic(str(e))
    except KeyError:
        raise UnparsableTopic(f"Unknown channel: {channel!r}")

    if resolved is Channel.TAGS_PUSH and name != BASE_SHADOW:
        raise UnparsableTopic("tags/push exists only on the base shadow")
    return Topic(device_id, name, resolved)


def topic_for(device_id: str, shadow_name: Optional[str], channel) -> str:
    return make_topic(device_id, shadow_name, channel).render()


def parse_topic(topic: str) -> Topic:
    if not isinstance(topic, str):
        raise UnparsableTopic(f"Topic must be a string, got: {type(topic).__name__}")
    parts = topic.split("/")
    if len(parts) < 4 or parts[0] != "things" or parts[2] != "shadow":
        raise UnparsableTopic(f"Not a shadow topic: {topic!r}")

    device_id = parts[1]
    if parts[3] == "name":
        if len(parts) < 6:
            raise UnparsableTopic(f"Named shadow topic without channel: {topic!r}")
        shadow_name, channel = parts[4], "/".join(parts[5:])
        if shadow_name == BASE_SHADOW:
            raise UnparsableTopic(f"{BASE_SHADOW!r} is not a valid shadow name: {topic!r}")
    else:
        shadow_name, channel = BASE_SHADOW, "/".join(parts[3:])

    return make_topic(device_id, shadow_name, channel)


def is_wildcard(topic_filter: str) -> bool:
    return "+" in topic_filter or "#" in topic_filter


def topic_matches(topic_filter: str, topic: str) -> bool:
    """MQTT filter matching (`+` single level, `#` multi level)."""
    return topic_matches_sub(topic_filter, topic)
