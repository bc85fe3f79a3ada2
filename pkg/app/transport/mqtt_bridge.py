"""
MQTT 5.0 bridge to an external broker.

Implements the same MessageBus contract as the in-process bus. Outgoing
publishes are authorized locally, then sent to the broker. Incoming broker
messages are fanned out to local subscribers through an internal
InProcessBus, so subscriptions get the same per-delivery authorization.
The external broker authenticates remote clients and enforces the exported
ACL (`twinmesh admin acl`), so messages it delivers are attributed to
BROKER_PRINCIPAL.
"""

from typing import Optional, Union

import paho.mqtt.client as mqtt
import structlog
from paho.mqtt.enums import CallbackAPIVersion
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt, wait_exponential

from app.core.errors import UnparsableTopic
from app.core.interfaces import Handler, MessageBus
from app.security.authorizer import Operation, authorize
from app.security.policy import AccessPolicy, PolicyStore
from app.security.principals import Principal, Role
from app.transport.bus import InProcessBus, PublishResult, Subscription
from app.transport.messages import WireMessage
from app.transport.topics import parse_topic

logger = structlog.get_logger(__name__)

BROKER_PRINCIPAL = Principal("mqtt-broker", frozenset({Role.ADMIN}))


class MqttBridge(MessageBus):
    def __init__(
        self,
        host: str,
        port: int = 1883,
        client_id: str = "twinmesh-edge",
        username: Optional[str] = None,
        password: Optional[str] = None,
        policy: Union[AccessPolicy, PolicyStore, None] = None,
        connect_attempts: int = 5,
        max_redeliveries: int = 3,
    ):
        self.host = host
        self.port = port
        self.connect_attempts = connect_attempts
        self._local = InProcessBus(policy, deferred=False, max_redeliveries=max_redeliveries)
        self._client = mqtt.Client(
            callback_api_version=CallbackAPIVersion.VERSION2,
            client_id=client_id,
            protocol=mqtt.MQTTv5,
        )
        if username:
            self._client.username_pw_set(username, password)
        self._client.on_connect = self._on_connect
        self._client.on_disconnect = self._on_disconnect
        self._client.on_message = self._on_message
        self._filters: dict = {}

    @property
    def audit_log(self):
        return self._local.audit_log

    def connect(self) -> None:
        retrying = Retrying(
            stop=stop_after_attempt(self.connect_attempts),
            wait=wait_exponential(multiplier=0.5, max=10),
            retry=retry_if_exception_type(OSError),
            reraise=True,
        )
        for attempt in retrying:
            with attempt:
                logger.info("mqtt_connecting", host=self.host, port=self.port, attempt=attempt.retry_state.attempt_number)
                self._client.connect(self.host, self.port, keepalive=60)
        self._client.loop_start()

    def disconnect(self) -> None:
        self._client.loop_stop()
        self._client.disconnect()

    def _on_connect(self, client, userdata, flags, reason_code, properties) -> None:
        if reason_code.is_failure:
            logger.error("mqtt_connect_failed", reason=str(reason_code))
            return
        logger.info("mqtt_connected", host=self.host, port=self.port)
        # Resubscribe after reconnects
        for topic_filter in self._filters:
            client.subscribe(topic_filter, qos=1)

    def _on_disconnect(self, client, userdata, flags, reason_code, properties) -> None:
        logger.warning("mqtt_disconnected", reason=str(reason_code))

    def _on_message(self, client, userdata, msg) -> None:
        try:
            message = WireMessage(parse_topic(msg.topic), bytes(msg.payload), qos=min(msg.qos, 1))
        except (UnparsableTopic, ValueError) as e:
            logger.warning("mqtt_message_dropped", topic=msg.topic, reason=str(e))
            return
        self._local.publish(BROKER_PRINCIPAL, message)

    def publish(self, principal: Principal, message: WireMessage) -> PublishResult:
        decision = authorize(self._local.policy, principal, Operation.PUBLISH, message.topic)
        if not decision:
            self._local.record_denial(principal, Operation.PUBLISH, str(message.topic), decision.reason)
            return PublishResult(False, decision.reason)
        info = self._client.publish(str(message.topic), message.payload, qos=message.qos)
        if info.rc != mqtt.MQTT_ERR_SUCCESS:
            logger.error("mqtt_publish_failed", topic=str(message.topic), rc=info.rc)
            return PublishResult(False, mqtt.error_string(info.rc))
        return PublishResult(True)

    def subscribe(self, principal: Principal, topic_filter: str, handler: Handler) -> Subscription:
        subscription = self._local.subscribe(principal, topic_filter, handler)
        if topic_filter not in self._filters:
            self._client.subscribe(topic_filter, qos=1)
        self._filters[topic_filter] = self._filters.get(topic_filter, 0) + 1
        return subscription

    def unsubscribe(self, subscription: Subscription) -> None:
        self._local.unsubscribe(subscription)
        remaining = self._filters.get(subscription.topic_filter, 0) - 1
        if remaining <= 0:
            self._filters.pop(subscription.topic_filter, None)
            self._client.unsubscribe(subscription.topic_filter)
        else:
            self._filters[subscription.topic_filter] = remaining
