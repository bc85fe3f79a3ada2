"""
JSON wire format.

Documents travel as

    {"state": {"delta": {...}, "desired": {...}, "reported": {"k": [v, ["t1", "t2"]]}},
     "timestamp": 1700000000000, "version": 3}

with every object's keys in lexicographic order and no insignificant
whitespace, so equal documents always encode to identical bytes. Tag arrays
keep their order. SubDocuments encode as
`{"state": {"reported": {...}}, "tag": "...", "version": <source version>}`.
"""

import json
from dataclasses import dataclass
from enum import Enum
from types import MappingProxyType
from typing import Any, Dict, Mapping, Optional, Union

from app.core.errors import InvalidTag, InvalidValue, SchemaViolation
from app.domain.models import ShadowDocument, TaggedValue
from app.domain.validators import Scalar, canonical_scalar, normalize_tags
from app.routing.twin_router import SubDocument

ROOT = "."


def _to_json(obj: Any) -> Any:
    if isinstance(obj, TaggedValue):
        return obj.to_wire()
    if isinstance(obj, ShadowDocument):
        return {"state": obj.to_state(), "version": obj.version, "timestamp": obj.timestamp}
    if isinstance(obj, SubDocument):
        return {"state": {"reported": dict(obj.pairs)}, "tag": obj.tag, "version": obj.source_version}
    if isinstance(obj, MappingProxyType):
        return dict(obj)
    if isinstance(obj, Enum):
        return obj.value
    raise TypeError(f"Cannot encode {type(obj).__name__}")


def encode_payload(obj: Any) -> bytes:
    """Canonical JSON bytes for any payload built from documents, pairs and plain values."""
    return json.dumps(
        obj, default=_to_json, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    ).encode("utf-8")


def encode_document(doc: Union[ShadowDocument, SubDocument]) -> bytes:
    return encode_payload(doc)


# --- decoding -------------------------------------------------------------------


def _reject_constant(name: str) -> None:
    raise ValueError(f"{name} is not valid JSON")


def _load(data: Union[bytes, str]) -> Any:
    try:
        return json.loads(data, parse_constant=_reject_constant)
    except (ValueError, UnicodeDecodeError) as e:
        raise SchemaViolation(ROOT, f"not valid JSON: {e}")


def _child(path: str, key: str) -> str:
    return f"{path}{key}" if path == ROOT else f"{path}.{key}"


def _object(node: Any, path: str) -> Dict[str, Any]:
    if not isinstance(node, dict):
        raise SchemaViolation(path, f"expected object, got {type(node).__name__}")
    return node


def _scalar(node: Any, path: str) -> Scalar:
    try:
        return canonical_scalar(node)
    except InvalidValue as e:
        raise SchemaViolation(path, str(e))


def _pair(node: Any, path: str) -> TaggedValue:
    if not isinstance(node, list) or len(node) != 2:
        raise SchemaViolation(path, "expected [value, [tags]]")
    value = _scalar(node[0], f"{path}[0]")
    tags = node[1]
    if not isinstance(tags, list) or not all(isinstance(t, str) for t in tags):
        raise SchemaViolation(f"{path}[1]", "expected an array of tag names")
    try:
        return TaggedValue(value, normalize_tags(tags))
    except InvalidTag as e:
        raise SchemaViolation(f"{path}[1]", str(e))


def _int(node: Any, path: str) -> int:
    if isinstance(node, bool) or not isinstance(node, int) or node < 0:
        raise SchemaViolation(path, "expected a non-negative integer")
    return node


def _reported(node: Any, path: str, allow_null: bool) -> Dict[str, Optional[TaggedValue]]:
    out: Dict[str, Optional[TaggedValue]] = {}
    for key, raw in _object(node, path).items():
        key_path = _child(path, key)
        if raw is None:
            if not allow_null:
                raise SchemaViolation(key_path, "null is only allowed in updates")
            out[key] = None
        else:
            out[key] = _pair(raw, key_path)
    return out


def _scalars(node: Any, path: str, allow_null: bool) -> Dict[str, Optional[Scalar]]:
    out: Dict[str, Optional[Scalar]] = {}
    for key, raw in _object(node, path).items():
        key_path = _child(path, key)
        if raw is None:
            if not allow_null:
                raise SchemaViolation(key_path, "null is only allowed in updates")
            out[key] = None
        else:
            out[key] = _scalar(raw, key_path)
    return out


def decode_document(data: Union[bytes, str]) -> ShadowDocument:
    """Inverse of encode_document for ShadowDocuments; unknown fields are ignored."""
    root = _object(_load(data), ROOT)
    state = _object(root.get("state", {}), ".state")
    return ShadowDocument(
        reported=_reported(state.get("reported", {}), ".state.reported", allow_null=False),
        desired=_scalars(state.get("desired", {}), ".state.desired", allow_null=False),
        delta=_scalars(state.get("delta", {}), ".state.delta", allow_null=False),
        version=_int(root.get("version", 0), ".version"),
        timestamp=_int(root.get("timestamp", 0), ".timestamp"),
    )


@dataclass(frozen=True)
class UpdateRequest:
    """A decoded `update` payload. A subgroup left out of the payload is None."""

    reported: Optional[Mapping[str, Optional[TaggedValue]]] = None
    desired: Optional[Mapping[str, Optional[Scalar]]] = None
    expected_version: Optional[int] = None

    @property
    def is_empty(self) -> bool:
        return self.reported is None and self.desired is None


def decode_update(data: Union[bytes, str]) -> UpdateRequest:
    """Decode `{"state": {"reported"?: ..., "desired"?: ...}, "version"?: n}`; null values are tombstones."""
    root = _object(_load(data), ROOT)
    if "state" not in root:
        raise SchemaViolation(ROOT, "missing 'state'")
    state = _object(root["state"], ".state")
    reported = desired = None
    if state.get("reported") is not None:
        reported = _reported(state["reported"], ".state.reported", allow_null=True)
    if state.get("desired") is not None:
        desired = _scalars(state["desired"], ".state.desired", allow_null=True)
    version = root.get("version")
    request = UpdateRequest(
        reported=reported,
        desired=desired,
        expected_version=None if version is None else _int(version, ".version"),
    )
    if request.is_empty:
        raise SchemaViolation(".state", "update needs 'reported' or 'desired'")
    return request


def decode_object(data: Union[bytes, str]) -> Dict[str, Any]:
    """Any JSON object payload (get requests, admin pushes)."""
    if not data:
        return {}
    return _object(_load(data), ROOT)
