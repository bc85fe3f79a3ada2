"""
Shadow state machine: reported / desired / delta.

All functions are pure. They take an immutable ShadowDocument and return a
new one plus the events describing what happened. A rejected update returns
the original document object untouched and a single `rejected` event.
"""

import time
from dataclasses import replace
from typing import Dict, List, Mapping, Optional, Tuple

import structlog

from app.core.errors import InvalidValue, ShadowError, VersionConflict
from app.core.events import EventKind, ShadowEvent, ShadowId
from app.domain.models import ShadowDocument, TaggedValue
from app.domain.validators import Scalar, canonical_scalar, scalars_equal, validate_key

logger = structlog.get_logger(__name__)

UNBOUND_SHADOW = ShadowId("unbound")

ReportedUpdate = Mapping[str, Optional[TaggedValue]]
DesiredUpdate = Mapping[str, Optional[Scalar]]
ShadowResult = Tuple[ShadowDocument, List[ShadowEvent]]


def wall_clock_ms() -> int:
    return int(time.time() * 1000)


def compute_delta(reported: Mapping[str, TaggedValue], desired: Mapping[str, Scalar]) -> Dict[str, Scalar]:
    """Keys whose desired value is absent from, or differs from, the reported value.

    Tags never take part in the comparison.
    """
    delta = {}
    for key, wanted in desired.items():
        pair = reported.get(key)
        if pair is None or not scalars_equal(pair.value, wanted):
            delta[key] = wanted
    return delta


def _matched_keys(reported: Mapping[str, TaggedValue], desired: Mapping[str, Scalar]) -> List[str]:
    return [
        key
        for key, wanted in desired.items()
        if key in reported and scalars_equal(reported[key].value, wanted)
    ]


def resolve_matched(doc: ShadowDocument) -> ShadowDocument:
    """Drop every desired key the device has already confirmed from desired and delta."""
    matched = _matched_keys(doc.reported, doc.desired)
    if not matched:
        return doc
    gone = set(matched)
    return replace(
        doc,
        desired={k: v for k, v in doc.desired.items() if k not in gone},
        delta={k: v for k, v in doc.delta.items() if k not in gone},
    )


def get_document(doc: ShadowDocument) -> ShadowDocument:
    # Documents are immutable, the current object is already a snapshot
    return doc


def _check_version(doc: ShadowDocument, expected_version: Optional[int]) -> None:
    if expected_version is not None and expected_version < doc.version:
        raise VersionConflict(
            f"Expected version {expected_version} is older than current version {doc.version}"
        )


def _reject(doc: ShadowDocument, shadow_id: ShadowId, error: ShadowError) -> ShadowResult:
    logger.debug("shadow_update_rejected", shadow=str(shadow_id), code=error.code, reason=str(error))
    return doc, [ShadowEvent(EventKind.REJECTED, shadow_id, error.to_payload())]


def _settle(
    previous: ShadowDocument,
    reported: Dict[str, TaggedValue],
    desired: Dict[str, Scalar],
    accepted_state: Dict[str, Mapping],
    shadow_id: ShadowId,
    now_ms: Optional[int],
) -> ShadowResult:
    """Resolve matched keys, recompute delta, bump the version and build events."""
    resolved = _matched_keys(reported, desired)
    for key in resolved:
        del desired[key]
    delta = compute_delta(reported, desired)

    timestamp = wall_clock_ms() if now_ms is None else now_ms
    current = ShadowDocument(
        reported=reported,
        desired=desired,
        delta=delta,
        version=previous.version + 1,
        timestamp=timestamp,
    )

    events = [
        ShadowEvent(
            EventKind.ACCEPTED,
            shadow_id,
            {"state": accepted_state, "version": current.version, "timestamp": timestamp},
        )
    ]
    if resolved:
        events.append(
            ShadowEvent(EventKind.RESOLVED, shadow_id, {"resolved": resolved, "version": current.version})
        )
    if delta:
        events.append(
            ShadowEvent(
                EventKind.DELTA_PUBLISHED,
                shadow_id,
                {"state": current.delta, "version": current.version, "timestamp": timestamp},
            )
        )
    events.append(
        ShadowEvent(
            EventKind.DOCUMENTS_CHANGED,
            shadow_id,
            {"previous": previous, "current": current, "timestamp": timestamp},
        )
    )
    return current, events


def apply_reported(
    doc: ShadowDocument,
    update: ReportedUpdate,
    *,
    shadow_id: ShadowId = UNBOUND_SHADOW,
    expected_version: Optional[int] = None,
    now_ms: Optional[int] = None,
    trusted: bool = False,
) -> ShadowResult:
    """
    Merge a reported update key-wise (update wins; None deletes the key).

    `trusted` skips re-validation for pairs that already passed through a
    base shadow (the router feeding tag shadows).
    """
    try:
        _check_version(doc, expected_version)
        if trusted:
            checked = update
        else:
            checked = {}
            for key, pair in update.items():
                validate_key(key)
                if pair is None:
                    checked[key] = None
                elif isinstance(pair, TaggedValue):
                    checked[key] = TaggedValue.of(pair.value, pair.tags)
                else:
                    raise InvalidValue(f"Reported value for {key!r} must carry tags")
    except ShadowError as e:
        return _reject(doc, shadow_id, e)

    reported = dict(doc.reported)
    for key, pair in checked.items():
        if pair is None:
            reported.pop(key, None)
        else:
            reported[key] = pair

    return _settle(doc, reported, dict(doc.desired), {"reported": checked}, shadow_id, now_ms)


def apply_desired(
    doc: ShadowDocument,
    update: DesiredUpdate,
    *,
    shadow_id: ShadowId = UNBOUND_SHADOW,
    expected_version: Optional[int] = None,
    now_ms: Optional[int] = None,
) -> ShadowResult:
    """Merge a desired update key-wise (None deletes the key) and recompute delta."""
    try:
        _check_version(doc, expected_version)
        checked = {}
        for key, value in update.items():
            validate_key(key)
            checked[key] = None if value is None else canonical_scalar(value)
    except ShadowError as e:
        return _reject(doc, shadow_id, e)

    desired = dict(doc.desired)
    for key, value in checked.items():
        if value is None:
            desired.pop(key, None)
        else:
            desired[key] = value

    return _settle(doc, dict(doc.reported), desired, {"desired": checked}, shadow_id, now_ms)
