"""Grammar checks for keys, tags, device ids and scalar values"""
from .grammar import (
    BASE_SHADOW,
    DEVICE_ID_PATTERN,
    KEY_PATTERN,
    TAG_PATTERN,
    Scalar,
    canonical_scalar,
    is_number,
    normalize_tag,
    normalize_tags,
    scalars_equal,
    validate_device_id,
    validate_key,
)

__all__ = [
    "BASE_SHADOW",
    "DEVICE_ID_PATTERN",
    "KEY_PATTERN",
    "TAG_PATTERN",
    "Scalar",
    "canonical_scalar",
    "is_number",
    "normalize_tag",
    "normalize_tags",
    "scalars_equal",
    "validate_device_id",
    "validate_key",
]
