"""
Key, tag and value grammar.

Keys:    [a-zA-Z0-9_./-]{1,128}
Tags:    [a-z0-9_-]{1,64}, lower-cased on ingest; `base` is reserved
Devices: [a-zA-Z0-9_.:-]{1,128}
Values:  number | string | boolean. Integral floats collapse to ints so that
         28 and 28.0 are the same value on the wire and in comparisons.
"""

import math
import re
from typing import Iterable, Tuple, Union

from app.core.errors import InvalidKey, InvalidTag, InvalidValue

Scalar = Union[int, float, str, bool]

KEY_PATTERN = re.compile(r"[a-zA-Z0-9_./-]{1,128}")
TAG_PATTERN = re.compile(r"[a-z0-9_-]{1,64}")
DEVICE_ID_PATTERN = re.compile(r"[a-zA-Z0-9_.:-]{1,128}")

# Name of the unnamed shadow in topics and registries
BASE_SHADOW = "base"


def validate_key(key: str) -> str:
    if not isinstance(key, str) or KEY_PATTERN.fullmatch(key) is None:
        raise InvalidKey(f"Invalid key: {key!r}")
    return key


def validate_device_id(device_id: str) -> str:
    if not isinstance(device_id, str) or DEVICE_ID_PATTERN.fullmatch(device_id) is None:
        raise InvalidKey(f"Invalid device id: {device_id!r}")
    return device_id


def normalize_tag(tag: str) -> str:
    if not isinstance(tag, str):
        raise InvalidTag(f"Tag must be a string, got: {type(tag).__name__}")
    lowered = tag.lower()
    if TAG_PATTERN.fullmatch(lowered) is None:
        raise InvalidTag(f"Invalid tag: {tag!r}")
    if lowered == BASE_SHADOW:
        raise InvalidTag(f"Tag name {BASE_SHADOW!r} is reserved for the base shadow")
    return lowered


def normalize_tags(tags: Iterable[str]) -> Tuple[str, ...]:
    """Lower-case, validate and de-duplicate tags keeping first-seen order."""
    seen = {}
    for tag in tags:
        seen.setdefault(normalize_tag(tag), None)
    return tuple(seen)


def is_number(value: object) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def canonical_scalar(value: object) -> Scalar:
    if isinstance(value, bool) or isinstance(value, str):
        return value
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            raise InvalidValue(f"Non-finite value: {value!r}")
        return int(value) if value.is_integer() else value
    raise InvalidValue(f"Value must be a number, string or boolean, got: {type(value).__name__}")


def scalars_equal(a: Scalar, b: Scalar) -> bool:
    """Exact equality after canonicalization; booleans never equal numbers."""
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool) and a == b
    if is_number(a) and is_number(b):
        return a == b
    if isinstance(a, str) and isinstance(b, str):
        return a == b
    return False
