"""
Edge twin service.

Listens on the shadow request channels of every device and answers on the
response channels:

    things/{d}/shadow/update            reported (device or admin) and desired
    things/{d}/shadow/get               -> get/accepted | get/rejected
    things/{d}/shadow/tags/push         admin tags and rule reloads
    things/{d}/shadow/name/{t}/update   desired for keys the twin holds,
                                        forwarded to the base shadow
    things/{d}/shadow/name/{t}/get      -> get/accepted | get/rejected

A reported update runs three timed stages: `update` (decode, tag enrichment,
base merge), `delta` (publishing the base shadow's events) and `parse_tags`
(partitioning into tag twins and publishing their events).
"""

import threading
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Deque, Dict, Iterable, List, Mapping, Optional, Tuple

import structlog

from app.core.errors import (
    ConfigError,
    InvalidTag,
    InvalidValue,
    NotFound,
    PayloadTooLarge,
    SchemaViolation,
    ShadowError,
    Unauthorized,
)
from app.core.events import EventKind, ShadowEvent, ShadowId
from app.core.interfaces import MessageBus
from app.domain.models import ShadowDocument
from app.monitoring import ProcessingMonitor
from app.routing import DEFAULT_IDLE_THRESHOLD_MS, TwinEntry, TwinRouter
from app.security.authorizer import Operation, authorize
from app.security.policy import PolicyStore
from app.security.principals import SERVICE_PRINCIPAL, Principal, Role
from app.shadow import DesiredCommand, ReportedCommand, ShadowActor
from app.shadow.state import wall_clock_ms
from app.tags import AdminTagSet, AdminTagStore, RuleStore, enrich_reported, push_admin_tags
from app.transport.codec import UpdateRequest, decode_object, decode_update
from app.transport.messages import MAX_PAYLOAD_BYTES, Delivery, WireMessage
from app.transport.topics import Channel, Topic, make_topic

logger = structlog.get_logger(__name__)

REQUEST_FILTERS = (
    "things/+/shadow/update",
    "things/+/shadow/get",
    "things/+/shadow/tags/push",
    "things/+/shadow/name/+/update",
    "things/+/shadow/name/+/get",
)

EVENT_CHANNELS = {
    EventKind.ACCEPTED: Channel.UPDATE_ACCEPTED,
    EventKind.REJECTED: Channel.UPDATE_REJECTED,
    EventKind.DELTA_PUBLISHED: Channel.UPDATE_DELTA,
    EventKind.DOCUMENTS_CHANGED: Channel.UPDATE_DOCUMENTS,
}


@lru_cache(maxsize=8192)
def _topic(device_id: str, tag: Optional[str], channel: Channel) -> Topic:
    return make_topic(device_id, tag, channel)


@dataclass
class _DeviceState:
    actor: ShadowActor
    router: TwinRouter
    lock: threading.RLock = field(default_factory=threading.RLock)


class EdgeTwinService:
    def __init__(
        self,
        bus: MessageBus,
        policy: Optional[PolicyStore] = None,
        rules: Optional[RuleStore] = None,
        admin_tags: Optional[AdminTagStore] = None,
        monitor: Optional[ProcessingMonitor] = None,
        principal: Principal = SERVICE_PRINCIPAL,
        max_twins_per_device: Optional[int] = 1024,
        idle_threshold_ms: int = DEFAULT_IDLE_THRESHOLD_MS,
        qos: int = 1,
        max_payload_bytes: int = MAX_PAYLOAD_BYTES,
        diagnostics_capacity: int = 1000,
    ):
        if not principal.is_admin:
            raise ValueError("The service principal needs the admin role")
        self.bus = bus
        self.policy = policy or PolicyStore()
        self.rules = rules or RuleStore()
        self.admin_tags = admin_tags or AdminTagStore()
        self.monitor = monitor or ProcessingMonitor()
        self.principal = principal
        self.max_twins_per_device = max_twins_per_device
        self.idle_threshold_ms = idle_threshold_ms
        self.qos = qos
        self.max_payload_bytes = max_payload_bytes
        self.diagnostics: Deque[str] = deque(maxlen=diagnostics_capacity)
        self._devices: Dict[str, _DeviceState] = {}
        self._devices_lock = threading.Lock()
        self._subscriptions = []

    # --- lifecycle --------------------------------------------------------------

    def start(self) -> None:
        if self._subscriptions:
            return
        handlers = {
            "things/+/shadow/update": self._on_base_update,
            "things/+/shadow/get": self._on_get,
            "things/+/shadow/tags/push": self._on_tags_push,
            "things/+/shadow/name/+/update": self._on_named_update,
            "things/+/shadow/name/+/get": self._on_get,
        }
        self._subscriptions = [
            self.bus.subscribe(self.principal, topic_filter, handlers[topic_filter])
            for topic_filter in REQUEST_FILTERS
        ]
        logger.info("edge_service_started", filters=len(self._subscriptions))

    def stop(self) -> None:
        for subscription in self._subscriptions:
            self.bus.unsubscribe(subscription)
        self._subscriptions = []
        logger.info("edge_service_stopped")

    def reset(self, device_id: Optional[str] = None) -> None:
        """Empty shadows, twins and admin tags (of one device, or of all)."""
        with self._devices_lock:
            states = list(self._devices.values()) if device_id is None else [self._devices.get(device_id)]
        for state in states:
            if state is None:
                continue
            with state.lock:
                state.actor.reset()
                state.router.reset()
        self.admin_tags.clear(device_id)

    def _device(self, device_id: str) -> _DeviceState:
        state = self._devices.get(device_id)
        if state is None:
            with self._devices_lock:
                state = self._devices.get(device_id)
                if state is None:
                    state = _DeviceState(
                        actor=ShadowActor(ShadowId(device_id)),
                        router=TwinRouter(device_id, self.max_twins_per_device),
                    )
                    self._devices[device_id] = state
                    logger.info("device_shadow_created", device=device_id)
        return state

    # --- queries used by the HTTP surface and the benchmark -----------------------

    def devices(self) -> List[str]:
        return sorted(self._devices)

    def document(self, device_id: str) -> ShadowDocument:
        state = self._devices.get(device_id)
        if state is None:
            raise NotFound(f"No shadow for device {device_id}")
        return state.actor.document

    def twin(self, device_id: str, tag: str) -> TwinEntry:
        state = self._devices.get(device_id)
        entry = state.router.registry.get(tag) if state else None
        if entry is None:
            raise NotFound(f"No twin {tag!r} for device {device_id}")
        return entry

    def twins(self, device_id: str) -> List[TwinEntry]:
        state = self._devices.get(device_id)
        return list(state.router.registry) if state else []

    def reap_idle(self, now: Optional[int] = None) -> Dict[str, List[str]]:
        """Put twins idle past the threshold to sleep; returns reaped tags per device."""
        now = wall_clock_ms() if now is None else now
        reaped = {}
        for device_id, state in list(self._devices.items()):
            tags = state.router.reap(now, self.idle_threshold_ms)
            if tags:
                reaped[device_id] = tags
        return reaped

    def push_tags(self, principal: Principal, device_id: str, tags: Iterable[str]) -> AdminTagSet:
        return push_admin_tags(self.admin_tags, self.policy.current, device_id, tags, principal)

    # --- publishing -------------------------------------------------------------

    def _send(self, topic: Topic, body: Any) -> None:
        """Publish one response; failures are logged, never raised into a handler."""
        try:
            message = WireMessage(topic, body, qos=self.qos, max_bytes=self.max_payload_bytes)
            message.encode()
            result = self.bus.publish(self.principal, message)
        except PayloadTooLarge as e:
            logger.error("edge_publish_oversized", topic=str(topic), reason=str(e))
            return
        except (OSError, ValueError) as e:
            logger.error("edge_publish_failed", topic=str(topic), reason=str(e))
            return
        if not result:
            logger.error("edge_publish_denied", topic=str(topic), reason=result.reason)

    def _publish_events(self, events: List[ShadowEvent]) -> None:
        for event in events:
            channel = EVENT_CHANNELS.get(event.kind)
            if channel is None:
                logger.debug("shadow_keys_resolved", shadow=str(event.shadow_id), **event.payload)
                continue
            shadow_id = event.shadow_id
            self._send(_topic(shadow_id.device_id, shadow_id.tag, channel), event.payload)

    def _reject(self, topic: Topic, channel: Channel, error: ShadowError) -> None:
        logger.info("shadow_request_rejected", topic=str(topic), code=error.code, reason=str(error))
        self._send(topic.sibling(channel), error.to_payload())

    # --- handlers ---------------------------------------------------------------

    def _decode(self, delivery: Delivery) -> UpdateRequest:
        body = delivery.message.body
        return decode_update(body if isinstance(body, (bytes, bytearray, str)) else delivery.message.payload)

    def _may_report(self, sender: Principal, device_id: str) -> bool:
        if sender.is_admin:
            return True
        return sender.has_role(Role.DEVICE) and sender.device_id == device_id

    def _on_base_update(self, delivery: Delivery) -> None:
        topic = delivery.topic
        device_id = topic.device_id
        state = self._device(device_id)
        sample = self.monitor.begin(device_id)

        with state.lock:
            with sample.stage("update"):
                events, reported_applied = self._apply_base_update(delivery, state)
            # The base shadow is committed; nothing below may raise into the bus
            try:
                with sample.stage("delta"):
                    self._publish_events(events)
                if reported_applied:
                    sample.reported = True
                    with sample.stage("parse_tags"):
                        document = state.actor.document
                        twin_events = state.router.dispatch(document.reported, document.version, document.timestamp)
                        self._publish_events(twin_events)
                    sample.twins_touched = sum(1 for e in twin_events if e.kind is EventKind.DOCUMENTS_CHANGED)
            except Exception:
                logger.exception("edge_post_commit_failed", device=device_id, version=state.actor.document.version)

            document = state.actor.document
            sample.pair_count = len(document.reported)
            sample.tag_attachments = document.tag_attachments
            sample.rejected = any(e.kind is EventKind.REJECTED for e in events)
        self.monitor.record(sample)

    def _apply_base_update(self, delivery: Delivery, state: _DeviceState) -> Tuple[List[ShadowEvent], bool]:
        shadow_id = state.actor.shadow_id
        try:
            request = self._decode(delivery)
            if request.reported is not None and not self._may_report(delivery.sender, shadow_id.device_id):
                raise Unauthorized(f"{delivery.sender.id!r} cannot report state for {shadow_id.device_id}")
        except ShadowError as e:
            return [ShadowEvent(EventKind.REJECTED, shadow_id, e.to_payload())], False

        now = wall_clock_ms()
        events: List[ShadowEvent] = []
        expected = request.expected_version
        reported_applied = False
        if request.reported is not None:
            enriched = enrich_reported(
                request.reported,
                self.rules.current,
                self.admin_tags.tags_for(shadow_id.device_id),
                self.diagnostics,
            )
            events += state.actor.tell(ReportedCommand(enriched, expected, now))
            reported_applied = events[-1].kind is not EventKind.REJECTED
            if not reported_applied:
                return events, False
            # The version check applies once, to the first subgroup of the request
            expected = None
        if request.desired is not None:
            events += state.actor.tell(DesiredCommand(request.desired, expected, now))
        return events, reported_applied

    def _on_named_update(self, delivery: Delivery) -> None:
        topic = delivery.topic
        tag = topic.tag
        state = self._devices.get(topic.device_id)
        if state is None:
            self._reject(topic, Channel.UPDATE_REJECTED, NotFound(f"No shadow for device {topic.device_id}"))
            return
        with state.lock:
            try:
                request = self._decode(delivery)
                if request.reported is not None:
                    raise InvalidValue("Tag shadows accept desired state only; report to the base shadow")
                entry = state.router.registry.get(tag)
                if entry is None:
                    raise NotFound(f"No twin {tag!r} for device {topic.device_id}")
                foreign = sorted(k for k in request.desired if k not in entry.shadow.reported)
                if foreign:
                    raise Unauthorized(f"Twin {tag!r} does not hold keys {foreign}")
            except ShadowError as e:
                self._reject(topic, Channel.UPDATE_REJECTED, e)
                return

            now = wall_clock_ms()
            events = state.actor.tell(DesiredCommand(request.desired, None, now))
            if events[-1].kind is EventKind.REJECTED:
                self._send(topic.sibling(Channel.UPDATE_REJECTED), events[-1].payload)
                return
            state.router.record_forwarded(tag, request.desired)
            self._publish_events(events)
            self._send(
                topic.sibling(Channel.UPDATE_ACCEPTED),
                {
                    "state": {"desired": dict(request.desired)},
                    "forwarded_to": "base",
                    "version": entry.shadow.version,
                    "timestamp": now,
                },
            )
        logger.info("desired_forwarded", device=topic.device_id, tag=tag, keys=sorted(request.desired))

    def _on_get(self, delivery: Delivery) -> None:
        topic = delivery.topic
        state = self._devices.get(topic.device_id)
        if topic.is_base:
            if state is None:
                self._reject(topic, Channel.GET_REJECTED, NotFound(f"No shadow for device {topic.device_id}"))
                return
            self._send(topic.sibling(Channel.GET_ACCEPTED), state.actor.document)
            return

        entry = state.router.registry.get(topic.tag) if state else None
        if entry is None:
            self._reject(topic, Channel.GET_REJECTED, NotFound(f"No twin {topic.tag!r} for device {topic.device_id}"))
            return
        self._send(topic.sibling(Channel.GET_ACCEPTED), twin_view(entry))

    def _on_tags_push(self, delivery: Delivery) -> None:
        topic = delivery.topic
        body = delivery.message.body
        try:
            payload = decode_object(body) if isinstance(body, (bytes, bytearray, str)) else dict(body)
            if "tags" not in payload and "rules" not in payload:
                raise SchemaViolation(".", "admin push needs 'tags' or 'rules'")
            if "rules" in payload:
                if not delivery.sender.is_admin:
                    raise Unauthorized("Rule reload requires admin role")
                try:
                    self.rules.reload_from(payload["rules"])
                except ConfigError as e:
                    raise SchemaViolation(".rules", str(e))
            if "tags" in payload:
                tags = payload["tags"]
                if not isinstance(tags, list):
                    raise InvalidTag("'tags' must be an array of tag names")
                push_admin_tags(self.admin_tags, self.policy.current, topic.device_id, tags, delivery.sender)
        except ShadowError as e:
            self._reject(make_topic(topic.device_id, None, Channel.UPDATE), Channel.UPDATE_REJECTED, e)


def twin_view(entry: TwinEntry) -> Dict[str, Any]:
    """A twin as served on get/accepted: its reported state plus the forwarded-desired ledger."""
    shadow = entry.shadow
    return {
        "state": {"reported": shadow.reported, "forwarded": entry.forwarded},
        "status": entry.state.value,
        "version": shadow.version,
        "timestamp": shadow.timestamp,
    }


def can_read(policy: PolicyStore, principal: Principal, device_id: str, tag: Optional[str]) -> bool:
    """Whether `principal` may read a shadow, judged like a `get` request on the bus."""
    return bool(authorize(policy.current, principal, Operation.PUBLISH, _topic(device_id, tag, Channel.GET)))


def can_write(policy: PolicyStore, principal: Principal, device_id: str, tag: Optional[str]) -> bool:
    return bool(authorize(policy.current, principal, Operation.PUBLISH, _topic(device_id, tag, Channel.UPDATE)))


def state_summary(document: ShadowDocument) -> Mapping[str, int]:
    return {
        "version": document.version,
        "pairs": len(document.reported),
        "tag_attachments": document.tag_attachments,
        "desired": len(document.desired),
        "delta": len(document.delta),
    }
