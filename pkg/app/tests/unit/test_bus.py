"""Unit tests for the in-process bus: authorization, QoS and delivery order"""
import pytest

from app.core.errors import Unauthorized, UnparsableTopic
from app.security import Operation
from app.tests.support import read_grant
from app.transport.bus import InProcessBus
from app.transport.messages import WireMessage

PRESSURE_DOCS = "things/car1/shadow/name/pressure/update/documents"


def _collector():
    received = []

    def handler(delivery):
        received.append(delivery)

    return received, handler


def test_granted_subscriber_receives(bus, policy_store, admin, app_client):
    """Test an authorized publish reaching an authorized subscriber"""
    policy_store.grant(read_grant("app1", "car1", "pressure"), admin)
    received, handler = _collector()
    bus.subscribe(app_client, PRESSURE_DOCS, handler)

    result = bus.publish(admin, WireMessage(PRESSURE_DOCS, {"current": {}}))
    assert result
    assert len(received) == 1
    assert received[0].sender == admin
    assert received[0].message.body == {"current": {}}


def test_denied_publish_is_audited(bus, app_client):
    """Test that a denied publish delivers nothing and leaves an audit record"""
    received, handler = _collector()
    result = bus.publish(app_client, WireMessage("things/car1/shadow/update/accepted", {}))
    assert not result
    assert not received
    record = bus.audit_log[-1]
    assert (record.principal, record.operation) == ("app1", Operation.PUBLISH)
    assert record.topic == "things/car1/shadow/update/accepted"


def test_subscribe_authorization(bus, admin, app_client):
    """Test wildcard, ungranted and unparsable subscriptions"""
    _, handler = _collector()
    with pytest.raises(Unauthorized):
        bus.subscribe(app_client, "things/+/shadow/update/documents", handler)
    with pytest.raises(Unauthorized):
        bus.subscribe(app_client, PRESSURE_DOCS, handler)
    with pytest.raises(UnparsableTopic):
        bus.subscribe(app_client, "things/car1/nope", handler)
    assert len(bus.audit_log) == 3
    assert bus.subscribe(admin, "things/#", handler).active


def test_admin_wildcard_sees_everything(bus, admin, car_device):
    """Test that an admin wildcard subscription matches named and base topics"""
    received, handler = _collector()
    bus.subscribe(admin, "things/+/shadow/#", handler)
    bus.publish(car_device, WireMessage("things/car1/shadow/update", {"state": {}}))
    bus.publish(admin, WireMessage(PRESSURE_DOCS, {}))
    assert [str(d.topic) for d in received] == ["things/car1/shadow/update", PRESSURE_DOCS]


def test_qos1_nack_is_redelivered(admin):
    """Test that a nacking handler sees 1 + max_redeliveries attempts"""
    bus = InProcessBus(max_redeliveries=2)
    attempts = []

    def nack(delivery):
        attempts.append(delivery)
        return False

    bus.subscribe(admin, PRESSURE_DOCS, nack)
    bus.publish(admin, WireMessage(PRESSURE_DOCS, {}))
    assert len(attempts) == 3


def test_qos1_retries_after_exception_then_acks(admin):
    """Test that a handler failing once is retried and then stops"""
    bus = InProcessBus()
    attempts = []

    def flaky(delivery):
        attempts.append(delivery)
        if len(attempts) == 1:
            raise RuntimeError("transient")

    bus.subscribe(admin, PRESSURE_DOCS, flaky)
    bus.publish(admin, WireMessage(PRESSURE_DOCS, {}))
    assert len(attempts) == 2


def test_qos0_is_delivered_once(admin):
    """Test at-most-once delivery"""
    bus = InProcessBus()
    attempts = []

    def nack(delivery):
        attempts.append(delivery)
        return False

    def broken(delivery):
        raise RuntimeError("boom")

    bus.subscribe(admin, PRESSURE_DOCS, broken)
    bus.subscribe(admin, PRESSURE_DOCS, nack)
    bus.publish(admin, WireMessage(PRESSURE_DOCS, {}, qos=0))
    assert len(attempts) == 1


def test_deferred_mode_waits_for_drain(admin):
    """Test that deferred messages queue until drain"""
    bus = InProcessBus(deferred=True)
    received, handler = _collector()
    bus.subscribe(admin, PRESSURE_DOCS, handler)
    bus.publish(admin, WireMessage(PRESSURE_DOCS, {"n": 1}))
    bus.publish(admin, WireMessage(PRESSURE_DOCS, {"n": 2}))
    assert bus.pending == 2 and not received
    assert bus.drain() == 2
    assert [d.message.body["n"] for d in received] == [1, 2]
    assert bus.drain() == 0


def test_publish_from_handler_keeps_global_order(bus, admin):
    """Test that a message published inside a handler is delivered after the current one"""
    order = []
    second = "things/car1/shadow/name/pressure/update/accepted"

    def relay(delivery):
        order.append(("first", delivery.message.body["n"]))
        bus.publish(admin, WireMessage(second, {"n": delivery.message.body["n"]}))
        order.append(("relayed", delivery.message.body["n"]))

    bus.subscribe(admin, PRESSURE_DOCS, relay)
    bus.subscribe(admin, second, lambda d: order.append(("second", d.message.body["n"])))
    bus.publish(admin, WireMessage(PRESSURE_DOCS, {"n": 1}))
    assert order == [("first", 1), ("relayed", 1), ("second", 1)]


def test_revocation_stops_next_delivery(bus, policy_store, admin, app_client):
    """Test that a revoked grant is enforced from the next message on"""
    entry = read_grant("app1", "car1", "pressure")
    policy_store.grant(entry, admin)
    received, handler = _collector()
    bus.subscribe(app_client, PRESSURE_DOCS, handler)
    bus.publish(admin, WireMessage(PRESSURE_DOCS, {}))

    policy_store.revoke(entry, admin)
    bus.publish(admin, WireMessage(PRESSURE_DOCS, {}))
    assert len(received) == 1
    assert bus.audit_log[-1].principal == "app1"
    assert bus.audit_log[-1].operation is Operation.SUBSCRIBE


def test_unsubscribe_and_clear(bus, admin):
    """Test removing subscriptions"""
    received, handler = _collector()
    subscription = bus.subscribe(admin, PRESSURE_DOCS, handler)
    bus.unsubscribe(subscription)
    bus.publish(admin, WireMessage(PRESSURE_DOCS, {}))
    assert not received and not subscription.active

    bus.subscribe(admin, PRESSURE_DOCS, handler)
    bus.clear()
    assert bus.subscriptions() == []
