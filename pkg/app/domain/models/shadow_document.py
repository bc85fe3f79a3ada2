from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Dict, Mapping

from app.domain.models.tagged_value import TaggedValue
from app.domain.validators import Scalar


def _freeze(mapping: Mapping) -> Mapping:
    if isinstance(mapping, MappingProxyType):
        return mapping
    return MappingProxyType(dict(mapping))


@dataclass(frozen=True)
class ShadowDocument:
    """
    Versioned state of one shadow, split into reported / desired / delta.

    Instances are immutable snapshots: every accepted mutation builds a new
    document, so a snapshot can be handed to any thread.
    """

    reported: Mapping[str, TaggedValue] = field(default_factory=dict)
    desired: Mapping[str, Scalar] = field(default_factory=dict)
    delta: Mapping[str, Scalar] = field(default_factory=dict)
    version: int = 0
    timestamp: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "reported", _freeze(self.reported))
        object.__setattr__(self, "desired", _freeze(self.desired))
        object.__setattr__(self, "delta", _freeze(self.delta))

    @property
    def tag_attachments(self) -> int:
        """Total number of tags attached across all reported pairs."""
        return sum(len(pair.tags) for pair in self.reported.values())

    def to_state(self) -> Dict[str, Any]:
        """Plain-dict state in wire shape (reported pairs as value arrays)."""
        return {
            "reported": {key: pair.to_wire() for key, pair in self.reported.items()},
            "desired": dict(self.desired),
            "delta": dict(self.delta),
        }
