"""Unit tests for the MQTT bridge against a fake paho client"""
import json
from types import SimpleNamespace

import paho.mqtt.client as mqtt
import pytest

from app.edge.service import EdgeTwinService
from app.tests.support import bulk_report, read_grant
from app.transport.messages import MAX_PAYLOAD_BYTES, WireMessage
from app.transport.mqtt_bridge import BROKER_PRINCIPAL, MqttBridge

PRESSURE_DOCS = "things/car1/shadow/name/pressure/update/documents"


class FakeClient:
    def __init__(self, connect_failures=0):
        self.connect_failures = connect_failures
        self.connects = 0
        self.published = []
        self.subscribed = []
        self.unsubscribed = []
        self.looping = False

    def connect(self, host, port, keepalive=60):
        self.connects += 1
        if self.connects <= self.connect_failures:
            raise OSError("connection refused")

    def loop_start(self):
        self.looping = True

    def loop_stop(self):
        self.looping = False

    def disconnect(self):
        pass

    def publish(self, topic, payload, qos=0):
        self.published.append((topic, payload, qos))
        return SimpleNamespace(rc=mqtt.MQTT_ERR_SUCCESS)

    def subscribe(self, topic_filter, qos=0):
        self.subscribed.append(topic_filter)

    def unsubscribe(self, topic_filter):
        self.unsubscribed.append(topic_filter)


@pytest.fixture
def bridge(policy_store):
    bridge = MqttBridge("broker.local", policy=policy_store, connect_attempts=2)
    bridge._client = FakeClient()
    return bridge


def test_connect_retries_then_starts_loop(bridge):
    """Test one refused connection followed by success"""
    bridge._client = FakeClient(connect_failures=1)
    bridge.connect()
    assert bridge._client.connects == 2 and bridge._client.looping


def test_connect_gives_up(policy_store):
    """Test that exhausted attempts re-raise the connection error"""
    bridge = MqttBridge("broker.local", policy=policy_store, connect_attempts=1)
    bridge._client = FakeClient(connect_failures=5)
    with pytest.raises(OSError):
        bridge.connect()


def test_publish_is_authorized_locally(bridge, car_device, app_client):
    """Test that allowed publishes reach the broker and denied ones are audited"""
    assert bridge.publish(car_device, WireMessage("things/car1/shadow/update", {"state": {}}))
    assert bridge._client.published == [("things/car1/shadow/update", b'{"state":{}}', 1)]

    assert not bridge.publish(app_client, WireMessage("things/car1/shadow/update", b"{}"))
    assert len(bridge._client.published) == 1
    assert bridge.audit_log[-1].principal == "app1"


def test_broker_messages_fan_out_with_authorization(bridge, policy_store, admin, app_client):
    """Test incoming messages reaching granted local subscribers only"""
    policy_store.grant(read_grant("app1", "car1", "pressure"), admin)
    received = []
    bridge.subscribe(app_client, PRESSURE_DOCS, lambda d: received.append(d))

    bridge._on_message(None, None, SimpleNamespace(topic=PRESSURE_DOCS, payload=b"{}", qos=1))
    bridge._on_message(None, None, SimpleNamespace(topic="garbage/topic", payload=b"{}", qos=0))
    assert len(received) == 1
    assert received[0].sender == BROKER_PRINCIPAL

    policy_store.revoke(read_grant("app1", "car1", "pressure"), admin)
    bridge._on_message(None, None, SimpleNamespace(topic=PRESSURE_DOCS, payload=b"{}", qos=1))
    assert len(received) == 1


def test_broker_subscriptions_are_reference_counted(bridge, admin):
    """Test that the broker filter lives as long as one local subscription does"""
    first = bridge.subscribe(admin, PRESSURE_DOCS, lambda d: None)
    second = bridge.subscribe(admin, PRESSURE_DOCS, lambda d: None)
    assert bridge._client.subscribed == [PRESSURE_DOCS]
    bridge.unsubscribe(first)
    assert bridge._client.unsubscribed == []
    bridge.unsubscribe(second)
    assert bridge._client.unsubscribed == [PRESSURE_DOCS]


def test_reconnect_resubscribes(bridge, admin):
    """Test that a successful (re)connect restores broker subscriptions"""
    bridge.subscribe(admin, PRESSURE_DOCS, lambda d: None)
    client = FakeClient()
    bridge._on_connect(client, None, None, SimpleNamespace(is_failure=False), None)
    assert client.subscribed == [PRESSURE_DOCS]
    failed = FakeClient()
    bridge._on_connect(failed, None, None, SimpleNamespace(is_failure=True), None)
    assert failed.subscribed == []


def test_oversized_response_does_not_reapply_a_report(bridge, policy_store):
    """Test a repeated large report over the broker: applied once per message, nothing oversized sent"""
    service = EdgeTwinService(bridge, policy=policy_store)
    service.start()
    report = json.dumps(bulk_report()).encode()
    for _ in range(2):
        bridge._on_message(None, None, SimpleNamespace(topic="things/car1/shadow/update", payload=report, qos=1))

    assert service.document("car1").version == 2
    published = bridge._client.published
    accepted = [topic for topic, _, _ in published if topic == "things/car1/shadow/update/accepted"]
    assert len(accepted) == 2
    assert all(len(payload) <= MAX_PAYLOAD_BYTES for _, payload, _ in published)
    assert len(service.twin("car1", "bulk").shadow.reported) == 1000
    service.stop()
