"""Events emitted by shadows and the twin router"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Optional


class EventKind(str, Enum):
    ACCEPTED = "accepted"
    REJECTED = "rejected"
    DELTA_PUBLISHED = "delta-published"
    DOCUMENTS_CHANGED = "documents-changed"
    RESOLVED = "resolved"


@dataclass(frozen=True)
class ShadowId:
    """Identifies a shadow: the device plus an optional tag (None = base shadow)."""

    device_id: str
    tag: Optional[str] = None

    @property
    def is_base(self) -> bool:
        return self.tag is None

    def __str__(self) -> str:
        return self.device_id if self.tag is None else f"{self.device_id}/{self.tag}"


@dataclass(frozen=True)
class ShadowEvent:
    """
    One outcome of a shadow operation.

    `payload` is a document fragment. Values may be ShadowDocument snapshots
    (documents-changed carries `previous` / `current`); the transport codec
    serializes them only when a message is actually put on the wire.
    """

    kind: EventKind
    shadow_id: ShadowId
    payload: Mapping[str, Any] = field(default_factory=dict)


__all__ = ["EventKind", "ShadowEvent", "ShadowId"]
