"""Property test: bus deliveries against a brute-force grant oracle"""
import fnmatch
import random

import pytest

from app.core.errors import Unauthorized
from app.security.policy import AccessPolicy, Action, Grant, PolicyStore
from app.security.principals import Principal, Role
from app.transport.bus import InProcessBus
from app.transport.messages import WireMessage
from app.transport.topics import Channel, make_topic

pytestmark = pytest.mark.integration

DEVICES = ["car1", "car2", "truck"]
TAGS = [None, "pressure", "location", "critical"]
DEVICE_GLOBS = ["car1", "car2", "car*", "*", "truck"]
TAG_GLOBS = ["pressure", "location", "#base", "*", "press*", "crit?cal"]
RESPONSES = {
    Channel.UPDATE_ACCEPTED,
    Channel.UPDATE_REJECTED,
    Channel.UPDATE_DELTA,
    Channel.UPDATE_DOCUMENTS,
    Channel.GET_ACCEPTED,
    Channel.GET_REJECTED,
}
DEVICE_PUBLISH = {Channel.UPDATE, Channel.GET}
DEVICE_SUBSCRIBE = RESPONSES - {Channel.UPDATE_DOCUMENTS} | {Channel.TAGS_PUSH}

ADMIN = Principal("root", frozenset({Role.ADMIN}))
PRINCIPALS = [
    Principal("app0", frozenset({Role.APP})),
    Principal("app1", frozenset({Role.APP})),
    Principal("car1-device", frozenset({Role.DEVICE}), device_id="car1"),
    Principal("truck-device", frozenset({Role.DEVICE}), device_id="truck"),
    ADMIN,
]


def _granted(policy, principal, device, tag, action):
    wanted = "#base" if tag is None else None
    for g in policy.grants:
        if g.principal != principal.id or g.action is not action:
            continue
        if not fnmatch.fnmatchcase(device, g.device):
            continue
        if wanted is not None:
            if g.tag == wanted:
                return True
        elif g.tag != "#base" and fnmatch.fnmatchcase(tag, g.tag):
            return True
    return False


def may_subscribe(policy, principal, device, tag, channel):
    if principal.is_admin:
        return True
    own = principal.device_id == device
    if channel is Channel.TAGS_PUSH:
        return own
    if own and tag is None and channel in DEVICE_SUBSCRIBE:
        return True
    return _granted(policy, principal, device, tag, Action.READ)


def may_publish(policy, principal, device, tag, channel):
    if principal.is_admin:
        return True
    if channel is Channel.TAGS_PUSH or channel in RESPONSES:
        return False
    if principal.device_id == device and tag is None and channel in DEVICE_PUBLISH:
        return True
    action = Action.WRITE if channel is Channel.UPDATE else Action.READ
    return _granted(policy, principal, device, tag, action)


def _random_policy(rng):
    grants = set()
    for _ in range(rng.randint(0, 6)):
        grants.add(
            Grant(
                rng.choice(["app0", "app1", "car1-device"]),
                rng.choice(DEVICE_GLOBS),
                rng.choice(TAG_GLOBS),
                rng.choice([Action.READ, Action.WRITE]),
            )
        )
    return AccessPolicy(frozenset(grants))


def _random_topic(rng):
    tag = rng.choice(TAGS)
    channels = [c for c in Channel if not (tag and c is Channel.TAGS_PUSH)]
    channel = rng.choice(channels)
    return rng.choice(DEVICES), tag, channel


def test_no_delivery_violates_grants():
    """Test 10,000 random (principal, topic) cases against random policies, with revocation"""
    rng = random.Random(2024)
    store = PolicyStore()
    bus = InProcessBus(store, max_redeliveries=0)
    violations = []
    revocations_checked = 0

    for case in range(10_000):
        if case % 100 == 0:
            store.replace(_random_policy(rng))
        policy = store.current
        principal = rng.choice(PRINCIPALS)
        device, tag, channel = _random_topic(rng)
        topic = make_topic(device, tag, channel)

        published = bool(bus.publish(principal, WireMessage(topic, b"{}", qos=0)))
        if published != may_publish(policy, principal, device, tag, channel):
            violations.append(("publish", principal.id, str(topic), published))

        received = []
        try:
            subscription = bus.subscribe(principal, topic.render(), received.append)
        except Unauthorized:
            if may_subscribe(policy, principal, device, tag, channel):
                violations.append(("subscribe-denied", principal.id, str(topic)))
            continue
        if not may_subscribe(policy, principal, device, tag, channel):
            violations.append(("subscribe-allowed", principal.id, str(topic)))

        bus.publish(ADMIN, WireMessage(topic, b"{}", qos=0))
        if len(received) != 1:
            violations.append(("delivery", principal.id, str(topic), len(received)))

        granting = [
            g
            for g in policy.grants
            if g.action is Action.READ and g.matches(principal.id, device, tag, Action.READ)
        ]
        own_channel = principal.device_id == device and (tag is None and channel in DEVICE_SUBSCRIBE or channel is Channel.TAGS_PUSH)
        if granting and not principal.is_admin and not own_channel:
            for g in granting:
                store.revoke(g, ADMIN)
            bus.publish(ADMIN, WireMessage(topic, b"{}", qos=0))
            if len(received) != 1:
                violations.append(("after-revoke", principal.id, str(topic), len(received)))
            revocations_checked += 1
            store.replace(policy)

        bus.unsubscribe(subscription)

    assert violations == []
    assert revocations_checked > 0
