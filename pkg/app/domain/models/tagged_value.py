from dataclasses import dataclass
from typing import Iterable, List, Tuple

from app.domain.validators import Scalar, canonical_scalar, normalize_tags


@dataclass(frozen=True, slots=True)
class TaggedValue:
    """A reported reading plus the ordered set of tags attached to it.

    On the wire this is the two-element array `[value, ["tag1", "tag2"]]`.
    """

    value: Scalar
    tags: Tuple[str, ...] = ()

    @classmethod
    def of(cls, value: object, tags: Iterable[str] = ()) -> "TaggedValue":
        """Build a validated, canonical TaggedValue."""
        return cls(canonical_scalar(value), normalize_tags(tags))

    def with_tags(self, tags: Tuple[str, ...]) -> "TaggedValue":
        return TaggedValue(self.value, tags)

    def to_wire(self) -> List[object]:
        return [self.value, list(self.tags)]
