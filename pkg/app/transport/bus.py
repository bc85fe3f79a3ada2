"""
In-process message bus.

Messages are delivered in global publish order, which gives per-topic FIFO.
In immediate mode `publish` delivers before returning; in deferred mode
messages wait until `drain()` so a test or benchmark can step the system.
A handler that publishes while a drain is running only enqueues, and the
running drain picks the message up.

Every publish and every subscription is authorized, and each delivery
re-checks the subscriber's read permission against the current policy, so a
revoked grant stops deliveries from the next message on.
"""

import itertools
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Optional, Tuple, Union

import structlog
from tenacity import Retrying, retry_if_exception_type, retry_if_result, stop_after_attempt

from app.core.errors import Unauthorized, UnparsableTopic
from app.core.interfaces import Handler, MessageBus
from app.security.authorizer import Operation, authorize
from app.security.policy import AccessPolicy, PolicyStore
from app.security.principals import Principal
from app.shadow.state import wall_clock_ms
from app.transport.messages import Delivery, WireMessage
from app.transport.topics import is_wildcard, parse_topic, topic_matches

logger = structlog.get_logger(__name__)

DEFAULT_MAX_REDELIVERIES = 3
AUDIT_CAPACITY = 10_000


@dataclass(frozen=True)
class AuditRecord:
    timestamp: int
    principal: str
    operation: Operation
    topic: str
    reason: str


@dataclass(frozen=True)
class PublishResult:
    allowed: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.allowed


@dataclass(eq=False)
class Subscription:
    id: int
    principal: Principal
    topic_filter: str
    handler: Handler
    active: bool = field(default=True)


def _nacked(result: Optional[bool]) -> bool:
    return result is False


class InProcessBus(MessageBus):
    def __init__(
        self,
        policy: Union[AccessPolicy, PolicyStore, None] = None,
        deferred: bool = False,
        max_redeliveries: int = DEFAULT_MAX_REDELIVERIES,
        audit_capacity: int = AUDIT_CAPACITY,
    ):
        self._policy = policy if policy is not None else AccessPolicy()
        self.deferred = deferred
        self.max_redeliveries = max_redeliveries
        self.audit_log: Deque[AuditRecord] = deque(maxlen=audit_capacity)
        self._queue: Deque[Tuple[WireMessage, Principal]] = deque()
        self._subscriptions: Dict[int, Subscription] = {}
        self._ids = itertools.count(1)
        self._drain_lock = threading.Lock()
        self._subs_lock = threading.Lock()

    @property
    def policy(self) -> AccessPolicy:
        if isinstance(self._policy, PolicyStore):
            return self._policy.current
        return self._policy

    @property
    def pending(self) -> int:
        return len(self._queue)

    def subscriptions(self) -> List[Subscription]:
        return list(self._subscriptions.values())

    def record_denial(self, principal: Principal, operation: Operation, topic: str, reason: str) -> None:
        self.audit_log.append(AuditRecord(wall_clock_ms(), principal.id, operation, topic, reason))
        logger.warning("bus_denied", principal=principal.id, operation=operation.value, topic=topic, reason=reason)

    def publish(self, principal: Principal, message: WireMessage) -> PublishResult:
        decision = authorize(self.policy, principal, Operation.PUBLISH, message.topic)
        if not decision:
            self.record_denial(principal, Operation.PUBLISH, str(message.topic), decision.reason)
            return PublishResult(False, decision.reason)
        self._queue.append((message, principal))
        if not self.deferred:
            self.drain()
        return PublishResult(True)

    def subscribe(self, principal: Principal, topic_filter: str, handler: Handler) -> Subscription:
        if is_wildcard(topic_filter):
            if not principal.is_admin:
                reason = "wildcard subscriptions require admin role"
                self.record_denial(principal, Operation.SUBSCRIBE, topic_filter, reason)
                raise Unauthorized(reason)
        else:
            try:
                topic = parse_topic(topic_filter)
            except UnparsableTopic as e:
                self.record_denial(principal, Operation.SUBSCRIBE, topic_filter, str(e))
                raise
            decision = authorize(self.policy, principal, Operation.SUBSCRIBE, topic)
            if not decision:
                self.record_denial(principal, Operation.SUBSCRIBE, topic_filter, decision.reason)
                raise Unauthorized(decision.reason)

        subscription = Subscription(next(self._ids), principal, topic_filter, handler)
        with self._subs_lock:
            self._subscriptions[subscription.id] = subscription
        logger.debug("bus_subscribed", principal=principal.id, topic_filter=topic_filter, id=subscription.id)
        return subscription

    def unsubscribe(self, subscription: Subscription) -> None:
        subscription.active = False
        with self._subs_lock:
            self._subscriptions.pop(subscription.id, None)

    def drain(self) -> int:
        """Deliver queued messages until the queue is empty; returns how many were delivered."""
        delivered = 0
        while self._queue:
            if not self._drain_lock.acquire(blocking=False):
                # Another drain (possibly further up this very stack) owns the queue
                return delivered
            try:
                while self._queue:
                    message, sender = self._queue.popleft()
                    self._deliver(message, sender)
                    delivered += 1
            finally:
                self._drain_lock.release()
        return delivered

    def clear(self) -> None:
        """Drop queued messages and all subscriptions."""
        self._queue.clear()
        with self._subs_lock:
            for subscription in self._subscriptions.values():
                subscription.active = False
            self._subscriptions.clear()

    def _deliver(self, message: WireMessage, sender: Principal) -> None:
        topic = message.topic
        rendered = topic.render()
        with self._subs_lock:
            targets = [s for s in self._subscriptions.values() if topic_matches(s.topic_filter, rendered)]
        if not targets:
            return

        policy = self.policy
        delivery = Delivery(message, sender)
        for subscription in targets:
            if not subscription.active:
                continue
            if not subscription.principal.is_admin:
                decision = authorize(policy, subscription.principal, Operation.SUBSCRIBE, topic)
                if not decision:
                    self.record_denial(subscription.principal, Operation.SUBSCRIBE, rendered, decision.reason)
                    continue
            self._hand_off(subscription, delivery)

    def _hand_off(self, subscription: Subscription, delivery: Delivery) -> None:
        if delivery.message.qos == 0:
            try:
                subscription.handler(delivery)
            except Exception:
                logger.exception("bus_handler_failed", topic=str(delivery.topic), subscription=subscription.id)
            return

        def give_up(retry_state) -> bool:
            logger.error(
                "bus_delivery_abandoned",
                topic=str(delivery.topic),
                subscription=subscription.id,
                attempts=retry_state.attempt_number,
            )
            return False

        retrying = Retrying(
            stop=stop_after_attempt(1 + self.max_redeliveries),
            retry=retry_if_result(_nacked) | retry_if_exception_type(Exception),
            retry_error_callback=give_up,
        )
        retrying(subscription.handler, delivery)
