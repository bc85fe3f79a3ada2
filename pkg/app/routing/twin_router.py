"""
Tag-partitioned twin routing.

A reported state is split into one SubDocument per tag (`parse_tags`), and
each SubDocument is merged into the tag's twin (`route`). Twins are created
lazily on first use and go dormant after a period without routing; a dormant
twin keeps its last document and is reactivated by the next `ensure_twin`.
"""

import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from types import MappingProxyType
from typing import Dict, Iterator, List, Mapping, Optional, Tuple

import structlog

from app.core.errors import TwinCapacityExceeded
from app.core.events import EventKind, ShadowEvent, ShadowId
from app.domain.models import ShadowDocument, TaggedValue
from app.domain.validators import Scalar, normalize_tag, scalars_equal, validate_device_id
from app.shadow.state import apply_reported, wall_clock_ms

logger = structlog.get_logger(__name__)

DEFAULT_IDLE_THRESHOLD_MS = 60_000


class TwinState(str, Enum):
    ACTIVE = "active"
    DORMANT = "dormant"


@dataclass(frozen=True)
class SubDocument:
    """The pairs of one reported state that carry `tag`."""

    tag: str
    pairs: Mapping[str, TaggedValue]
    source_version: int = 0

    def __post_init__(self) -> None:
        if not self.pairs:
            raise ValueError(f"SubDocument for {self.tag!r} has no pairs")
        for key, pair in self.pairs.items():
            if self.tag not in pair.tags:
                raise ValueError(f"Pair {key!r} does not carry tag {self.tag!r}")
        if not isinstance(self.pairs, MappingProxyType):
            object.__setattr__(self, "pairs", MappingProxyType(dict(self.pairs)))


@dataclass(frozen=True)
class TwinEntry:
    tag: str
    shadow: ShadowDocument = field(default_factory=ShadowDocument)
    last_active: int = 0
    state: TwinState = TwinState.ACTIVE
    # desired values forwarded to the base shadow and not yet confirmed
    forwarded: Mapping[str, Scalar] = field(default_factory=lambda: MappingProxyType({}))

    @property
    def is_active(self) -> bool:
        return self.state is TwinState.ACTIVE


@dataclass(frozen=True)
class TwinRegistry:
    """Immutable map tag -> TwinEntry for one device."""

    device_id: str
    entries: Mapping[str, TwinEntry] = field(default_factory=dict)
    max_twins: Optional[int] = None

    def __post_init__(self) -> None:
        if not isinstance(self.entries, MappingProxyType):
            object.__setattr__(self, "entries", MappingProxyType(dict(self.entries)))

    def __contains__(self, tag: str) -> bool:
        return tag in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[TwinEntry]:
        return iter(self.entries.values())

    def get(self, tag: str) -> Optional[TwinEntry]:
        return self.entries.get(tag)

    def active_tags(self) -> List[str]:
        return [tag for tag, entry in self.entries.items() if entry.is_active]

    def _with(self, entries: Dict[str, TwinEntry]) -> "TwinRegistry":
        return TwinRegistry(self.device_id, entries, self.max_twins)


def parse_tags(reported: Mapping[str, TaggedValue], source_version: int = 0) -> Dict[str, SubDocument]:
    """Partition a reported map into per-tag SubDocuments.

    Tags come out in first-appearance order. Untagged pairs appear nowhere and
    a pair with n tags appears in exactly n SubDocuments.
    """
    buckets: Dict[str, Dict[str, TaggedValue]] = {}
    for key, pair in reported.items():
        for tag in pair.tags:
            bucket = buckets.get(tag)
            if bucket is None:
                bucket = buckets[tag] = {}
            bucket[key] = pair
    return {tag: SubDocument(tag, pairs, source_version) for tag, pairs in buckets.items()}


def _activate(entries: Dict[str, TwinEntry], registry: TwinRegistry, tag: str, now_ms: int) -> TwinEntry:
    entry = entries.get(tag)
    if entry is None:
        if registry.max_twins is not None and len(entries) >= registry.max_twins:
            raise TwinCapacityExceeded(
                f"Device {registry.device_id} already has {len(entries)} twins (limit {registry.max_twins})"
            )
        entry = TwinEntry(tag=tag, last_active=now_ms)
        logger.debug("twin_created", device=registry.device_id, tag=tag)
    elif not entry.is_active:
        entry = replace(entry, state=TwinState.ACTIVE, last_active=now_ms)
        logger.debug("twin_reactivated", device=registry.device_id, tag=tag, version=entry.shadow.version)
    else:
        return entry
    entries[tag] = entry
    return entry


def ensure_twin(
    registry: TwinRegistry, device_id: str, tag: str, now_ms: Optional[int] = None
) -> TwinRegistry:
    """Create the twin for `tag` if absent, reactivate it if dormant."""
    validate_device_id(device_id)
    if device_id != registry.device_id:
        raise ValueError(f"Registry belongs to {registry.device_id}, not {device_id}")
    tag = normalize_tag(tag)
    current = registry.entries.get(tag)
    if current is not None and current.is_active:
        return registry
    entries = dict(registry.entries)
    _activate(entries, registry, tag, wall_clock_ms() if now_ms is None else now_ms)
    return registry._with(entries)


def _settle_ledger(entry: TwinEntry) -> Mapping[str, Scalar]:
    if not entry.forwarded:
        return entry.forwarded
    reported = entry.shadow.reported
    pending = {
        key: wanted
        for key, wanted in entry.forwarded.items()
        if key not in reported or not scalars_equal(reported[key].value, wanted)
    }
    if len(pending) == len(entry.forwarded):
        return entry.forwarded
    return MappingProxyType(pending)


def route(
    subdocs: Mapping[str, SubDocument],
    registry: TwinRegistry,
    now_ms: Optional[int] = None,
    prune: bool = False,
) -> Tuple[TwinRegistry, List[ShadowEvent]]:
    """
    Merge every SubDocument into its twin's reported subgroup.

    With `prune`, `subdocs` is taken to be the partition of the complete base
    reported state: keys a twin holds that are missing from its SubDocument
    are tombstoned, and active twins whose tag vanished are emptied.
    """
    if not subdocs and not prune:
        return registry, []

    now = wall_clock_ms() if now_ms is None else now_ms
    device_id = registry.device_id
    entries = dict(registry.entries)
    events: List[ShadowEvent] = []

    for tag, sub in subdocs.items():
        shadow_id = ShadowId(device_id, tag)
        try:
            entry = _activate(entries, registry, tag, now)
        except TwinCapacityExceeded as e:
            logger.warning("twin_rejected", device=device_id, tag=tag, reason=str(e))
            events.append(ShadowEvent(EventKind.REJECTED, shadow_id, e.to_payload()))
            continue

        update: Dict[str, Optional[TaggedValue]] = dict(sub.pairs)
        if prune:
            for key in entry.shadow.reported:
                if key not in sub.pairs:
                    update[key] = None

        shadow, twin_events = apply_reported(entry.shadow, update, shadow_id=shadow_id, now_ms=now, trusted=True)
        entry = replace(entry, shadow=shadow, last_active=now)
        entries[tag] = replace(entry, forwarded=_settle_ledger(entry))
        events.extend(twin_events)

    if prune:
        for tag, entry in list(entries.items()):
            if tag in subdocs or not entry.is_active or not entry.shadow.reported:
                continue
            shadow_id = ShadowId(device_id, tag)
            update = {key: None for key in entry.shadow.reported}
            shadow, twin_events = apply_reported(entry.shadow, update, shadow_id=shadow_id, now_ms=now, trusted=True)
            entries[tag] = replace(entry, shadow=shadow, last_active=now)
            events.extend(twin_events)

    return registry._with(entries), events


def reap_idle(registry: TwinRegistry, now: int, idle_threshold_ms: int = DEFAULT_IDLE_THRESHOLD_MS) -> TwinRegistry:
    """Mark active twins idle for longer than the threshold as dormant."""
    if idle_threshold_ms <= 0:
        raise ValueError("idle_threshold_ms must be positive")
    reaped = {
        tag: replace(entry, state=TwinState.DORMANT)
        for tag, entry in registry.entries.items()
        if entry.is_active and now - entry.last_active > idle_threshold_ms
    }
    if not reaped:
        return registry
    for tag in reaped:
        logger.info("twin_reaped", device=registry.device_id, tag=tag)
    return registry._with({**registry.entries, **reaped})


def record_forwarded(registry: TwinRegistry, tag: str, desired: Mapping[str, Optional[Scalar]]) -> TwinRegistry:
    """Note desired values a twin forwarded to the base shadow (None clears a key)."""
    entry = registry.entries.get(tag)
    if entry is None:
        raise KeyError(tag)
    ledger = dict(entry.forwarded)
    for key, value in desired.items():
        if value is None:
            ledger.pop(key, None)
        else:
            ledger[key] = value
    return registry._with({**registry.entries, tag: replace(entry, forwarded=MappingProxyType(ledger))})


class TwinRouter:
    """Owner of one device's TwinRegistry; every mutation goes through its lock."""

    def __init__(self, device_id: str, max_twins: Optional[int] = None):
        self._registry = TwinRegistry(validate_device_id(device_id), max_twins=max_twins)
        self._lock = threading.Lock()

    @property
    def device_id(self) -> str:
        return self._registry.device_id

    @property
    def registry(self) -> TwinRegistry:
        return self._registry

    def dispatch(
        self, reported: Mapping[str, TaggedValue], source_version: int, now_ms: Optional[int] = None
    ) -> List[ShadowEvent]:
        """parse_tags + route over the full base reported state."""
        subdocs = parse_tags(reported, source_version)
        with self._lock:
            self._registry, events = route(subdocs, self._registry, now_ms, prune=True)
        return events

    def ensure(self, tag: str, now_ms: Optional[int] = None) -> TwinEntry:
        with self._lock:
            self._registry = ensure_twin(self._registry, self.device_id, tag, now_ms)
            return self._registry.entries[normalize_tag(tag)]

    def record_forwarded(self, tag: str, desired: Mapping[str, Optional[Scalar]]) -> None:
        with self._lock:
            self._registry = record_forwarded(self._registry, tag, desired)

    def reap(self, now: int, idle_threshold_ms: int = DEFAULT_IDLE_THRESHOLD_MS) -> List[str]:
        with self._lock:
            before = set(self._registry.active_tags())
            self._registry = reap_idle(self._registry, now, idle_threshold_ms)
            return sorted(before - set(self._registry.active_tags()))

    def reset(self) -> None:
        with self._lock:
            self._registry = TwinRegistry(self.device_id, max_twins=self._registry.max_twins)
