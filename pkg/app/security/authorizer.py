from dataclasses import dataclass
from enum import Enum
from typing import Union

from app.core.errors import UnparsableTopic
from app.security.policy import AccessPolicy, Action
from app.security.principals import Principal, Role
from app.transport.topics import RESPONSE_CHANNELS, Channel, Topic, parse_topic


class Operation(str, Enum):
    PUBLISH = "publish"
    SUBSCRIBE = "subscribe"


@dataclass(frozen=True)
class Decision:
    allowed: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.allowed


# Channels a device may always use on its own base shadow
DEVICE_PUBLISH = frozenset({Channel.UPDATE, Channel.GET})
DEVICE_SUBSCRIBE = frozenset(
    {
        Channel.UPDATE_DELTA,
        Channel.UPDATE_ACCEPTED,
        Channel.UPDATE_REJECTED,
        Channel.GET_ACCEPTED,
        Channel.GET_REJECTED,
        Channel.TAGS_PUSH,
    }
)


def required_action(operation: Operation, channel: Channel) -> Action:
    # Publishing on `update` writes desired state; everything else reads.
    if operation is Operation.PUBLISH and channel is Channel.UPDATE:
        return Action.WRITE
    return Action.READ


def authorize(
    policy: AccessPolicy,
    principal: Principal,
    operation: Operation,
    topic: Union[str, Topic],
) -> Decision:
    """Decide whether `principal` may publish or subscribe on a shadow topic."""
    if isinstance(topic, str):
        try:
            topic = parse_topic(topic)
        except UnparsableTopic as e:
            return Decision(False, f"unparsable topic: {e}")

    if principal.has_role(Role.ADMIN):
        return Decision(True, "admin")

    own_device = principal.has_role(Role.DEVICE) and principal.device_id == topic.device_id

    if topic.channel is Channel.TAGS_PUSH:
        if operation is Operation.SUBSCRIBE and own_device:
            return Decision(True, "device receives its admin tags")
        return Decision(False, "admin channel requires admin role")

    if operation is Operation.PUBLISH and topic.channel in RESPONSE_CHANNELS:
        return Decision(False, f"{topic.channel.value} is published by the shadow service only")

    if own_device and topic.is_base:
        allowed = DEVICE_PUBLISH if operation is Operation.PUBLISH else DEVICE_SUBSCRIBE
        if topic.channel in allowed:
            return Decision(True, "device on own base shadow")

    action = required_action(operation, topic.channel)
    for entry in policy.grants:
        if entry.matches(principal.id, topic.device_id, topic.tag, action):
            return Decision(True, f"grant {entry.device}/{entry.tag}/{entry.action.value}")

    shadow = "base shadow" if topic.is_base else f"tag {topic.tag!r}"
    return Decision(False, f"no {action.value} grant for {principal.id!r} on {topic.device_id}/{shadow}")
