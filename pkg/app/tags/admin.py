"""Administrator tags: sticky tags pushed through a device's base shadow."""

import threading
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Tuple

import structlog

from app.core.errors import InvalidTag, Unauthorized
from app.domain.validators import normalize_tags, validate_device_id
from app.security.authorizer import Operation, authorize
from app.security.policy import AccessPolicy
from app.security.principals import Principal
from app.shadow.state import wall_clock_ms
from app.transport.topics import Channel, make_topic

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class AdminTagSet:
    device_id: str
    tags: Tuple[str, ...]
    applied_at: int

    def __post_init__(self) -> None:
        if not self.tags:
            raise InvalidTag("Admin tag set cannot be empty")


class AdminTagStore:
    """Current AdminTagSet per device, kept in runtime state only."""

    def __init__(self) -> None:
        self._sets: Dict[str, AdminTagSet] = {}
        self._lock = threading.Lock()

    def get(self, device_id: str) -> Optional[AdminTagSet]:
        return self._sets.get(device_id)

    def tags_for(self, device_id: str) -> Tuple[str, ...]:
        current = self._sets.get(device_id)
        return current.tags if current else ()

    def put(self, tag_set: AdminTagSet) -> None:
        with self._lock:
            self._sets[tag_set.device_id] = tag_set

    def clear(self, device_id: Optional[str] = None) -> None:
        with self._lock:
            if device_id is None:
                self._sets.clear()
            else:
                self._sets.pop(device_id, None)


def push_admin_tags(
    store: AdminTagStore,
    policy: AccessPolicy,
    device_id: str,
    tags: Iterable[str],
    principal: Principal,
    now_ms: Optional[int] = None,
) -> AdminTagSet:
    """
    Replace the device's admin tags.

    The principal must be allowed to publish on the device's `tags/push`
    channel. Either every tag is valid and the set is replaced, or nothing
    changes.
    """
    validate_device_id(device_id)
    decision = authorize(policy, principal, Operation.PUBLISH, make_topic(device_id, None, Channel.TAGS_PUSH))
    if not decision:
        logger.warning("admin_tags_denied", device=device_id, principal=principal.id, reason=decision.reason)
        raise Unauthorized(decision.reason)

    tag_set = AdminTagSet(
        device_id=device_id,
        tags=normalize_tags(tags),
        applied_at=wall_clock_ms() if now_ms is None else now_ms,
    )
    store.put(tag_set)
    logger.info("admin_tags_pushed", device=device_id, principal=principal.id, tags=list(tag_set.tags))
    return tag_set
