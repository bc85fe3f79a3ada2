"""
Threshold rules that attach tags to reported pairs on the fly.

Rule file format:

    {"rules": [
        {"key": "tire_pressure_*", "when": {"lt": 35}, "tag": "warning",  "rank": 1},
        {"key": "tire_pressure_*", "when": {"lt": 30}, "tag": "critical", "rank": 2},
        {"key": "temperature",     "when": {"gt": 100}, "tag": "warning"},
        {"key": "coolant_*",       "when": {"outside": [5, 90]}, "tag": "warning"},
        {"key": "temperature",     "when": {"invalid": true}, "tag": "malfunction",
         "family": "health"}
    ]}

`key` is a glob over key names. Rules sharing a key glob and a `family`
(default "severity") form one family; only the highest-ranked matching tag of
a family is attached.
"""

import fnmatch
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

import structlog
from pydantic import BaseModel, ConfigDict, FiniteFloat, ValidationError, model_validator

from app.core.errors import ConfigError, InvalidTag
from app.domain.models import TaggedValue
from app.domain.validators import Scalar, is_number, normalize_tag

logger = structlog.get_logger(__name__)

DEFAULT_FAMILY = "severity"


class PredicateKind(str, Enum):
    GT = "gt"
    LT = "lt"
    OUTSIDE = "outside"
    INVALID = "invalid"


@dataclass(frozen=True)
class Predicate:
    kind: PredicateKind
    threshold: Optional[float] = None
    lo: Optional[float] = None
    hi: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind in (PredicateKind.GT, PredicateKind.LT):
            if self.threshold is None or not math.isfinite(self.threshold):
                raise ValueError(f"{self.kind.value} predicate needs a finite threshold")
        elif self.kind is PredicateKind.OUTSIDE:
            if self.lo is None or self.hi is None:
                raise ValueError("outside predicate needs lo and hi")
            if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
                raise ValueError("outside bounds must be finite")
            if self.lo > self.hi:
                raise ValueError(f"outside bounds reversed: lo={self.lo} > hi={self.hi}")

    def holds(self, value: Scalar) -> Optional[bool]:
        """True/False for applicable values; None when a numeric test meets a non-number."""
        if self.kind is PredicateKind.INVALID:
            return not is_number(value) or value < 0
        if not is_number(value):
            return None
        if self.kind is PredicateKind.GT:
            return value > self.threshold
        if self.kind is PredicateKind.LT:
            return value < self.threshold
        return value < self.lo or value > self.hi

    def describe(self) -> str:
        if self.kind is PredicateKind.OUTSIDE:
            return f"value outside [{self.lo}, {self.hi}]"
        if self.kind is PredicateKind.INVALID:
            return "value not-a-number-or-negative"
        op = ">" if self.kind is PredicateKind.GT else "<"
        return f"value {op} {self.threshold}"


@dataclass(frozen=True)
class TagRule:
    key_pattern: str
    predicate: Predicate
    tag_to_attach: str
    severity_rank: int = 0
    family: str = DEFAULT_FAMILY

    def __post_init__(self) -> None:
        object.__setattr__(self, "tag_to_attach", normalize_tag(self.tag_to_attach))

    @property
    def family_key(self) -> Tuple[str, str]:
        return (self.key_pattern, self.family)

    def matches_key(self, key: str) -> bool:
        return fnmatch.fnmatchcase(key, self.key_pattern)


def evaluate_rules(
    key: str,
    value: Scalar,
    rules: Iterable[TagRule],
    diagnostics: Optional[List[str]] = None,
) -> Tuple[str, ...]:
    """
    Tags attached by the rules whose key glob matches and whose predicate holds.

    Within a family only the highest-ranked tags survive. The result keeps
    rule order so that tag composition stays deterministic. Non-numeric
    values met by numeric predicates skip the rule and leave a diagnostic,
    since they usually mean the sensor is misbehaving.
    """
    best: Dict[Tuple[str, str], Tuple[int, List[str]]] = {}
    for rule in rules:
        if not rule.matches_key(key):
            continue
        held = rule.predicate.holds(value)
        if held is None:
            message = f"{key}={value!r} is not numeric; skipped rule '{rule.predicate.describe()} -> {rule.tag_to_attach}'"
            if diagnostics is not None:
                diagnostics.append(message)
            logger.debug("tag_rule_skipped", key=key, tag=rule.tag_to_attach, reason="non-numeric value")
            continue
        if not held:
            continue
        current = best.get(rule.family_key)
        if current is None or rule.severity_rank > current[0]:
            best[rule.family_key] = (rule.severity_rank, [rule.tag_to_attach])
        elif rule.severity_rank == current[0] and rule.tag_to_attach not in current[1]:
            current[1].append(rule.tag_to_attach)

    tags: Dict[str, None] = {}
    for _, family_tags in best.values():
        for tag in family_tags:
            tags.setdefault(tag, None)
    return tuple(tags)


def effective_tags(
    pair_tags: Iterable[str],
    rule_tags: Iterable[str],
    admin_tags: Iterable[str],
) -> Tuple[str, ...]:
    """Device tags, then rule tags, then admin tags; first occurrence keeps its position."""
    ordered: Dict[str, None] = {}
    for source in (pair_tags, rule_tags, admin_tags):
        for tag in source:
            ordered.setdefault(tag, None)
    return tuple(ordered)


# --- rule file schema ---------------------------------------------------------


class RuleCondition(BaseModel):
    model_config = ConfigDict(extra="forbid")

    gt: Optional[FiniteFloat] = None
    lt: Optional[FiniteFloat] = None
    outside: Optional[Tuple[FiniteFloat, FiniteFloat]] = None
    invalid: Optional[bool] = None

    @model_validator(mode="after")
    def _exactly_one(self) -> "RuleCondition":
        chosen = [name for name in ("gt", "lt", "outside", "invalid") if getattr(self, name) is not None]
        if len(chosen) != 1:
            raise ValueError(f"'when' needs exactly one of gt, lt, outside, invalid; got {chosen}")
        if self.invalid is False:
            raise ValueError("'invalid' can only be true")
        return self

    def to_predicate(self) -> Predicate:
        if self.gt is not None:
            return Predicate(PredicateKind.GT, threshold=self.gt)
        if self.lt is not None:
            return Predicate(PredicateKind.LT, threshold=self.lt)
        if self.outside is not None:
            return Predicate(PredicateKind.OUTSIDE, lo=self.outside[0], hi=self.outside[1])
        return Predicate(PredicateKind.INVALID)


class RuleEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    key: str
    when: RuleCondition
    tag: str
    rank: int = 0
    family: str = DEFAULT_FAMILY

    def to_rule(self) -> TagRule:
        return TagRule(
            key_pattern=self.key,
            predicate=self.when.to_predicate(),
            tag_to_attach=self.tag,
            severity_rank=self.rank,
            family=self.family,
        )


class RuleFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rules: List[RuleEntry] = []


@dataclass(frozen=True)
class RuleSet:
    """Immutable collection of rules; replaced wholesale on reload."""

    rules: Tuple[TagRule, ...] = ()

    def __iter__(self):
        return iter(self.rules)

    def __len__(self) -> int:
        return len(self.rules)


def parse_rules(data: Union[dict, str, bytes]) -> RuleSet:
    """Validate a rule document and compile it into a RuleSet."""
    try:
        if isinstance(data, (str, bytes)):
            document = RuleFile.model_validate_json(data)
        else:
            document = RuleFile.model_validate(data)
        compiled = tuple(entry.to_rule() for entry in document.rules)
    except (ValidationError, ValueError, InvalidTag) as e:
        raise ConfigError(f"Invalid rule document: {e}")
    return RuleSet(compiled)


def load_rules(path: Union[str, Path]) -> RuleSet:
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read rule file {path}: {e}")
    rule_set = parse_rules(raw)
    logger.info("rules_loaded", path=str(path), count=len(rule_set))
    return rule_set


class RuleStore:
    """Holds the current RuleSet; swaps are a single reference assignment."""

    def __init__(self, rule_set: Optional[RuleSet] = None):
        self._current = rule_set or RuleSet()

    @property
    def current(self) -> RuleSet:
        return self._current

    def swap(self, rule_set: RuleSet) -> RuleSet:
        previous, self._current = self._current, rule_set
        logger.info("rules_swapped", previous=len(previous), current=len(rule_set))
        return previous

    def reload_from(self, data: Union[dict, str, bytes]) -> RuleSet:
        return self.swap(parse_rules(data))


def rules_to_document(rule_set: RuleSet) -> dict:
    """Inverse of parse_rules, used by the admin surface to show active rules."""
    entries = []
    for rule in rule_set:
        p = rule.predicate
        if p.kind is PredicateKind.OUTSIDE:
            when = {"outside": [p.lo, p.hi]}
        elif p.kind is PredicateKind.INVALID:
            when = {"invalid": True}
        else:
            when = {p.kind.value: p.threshold}
        entries.append(
            {"key": rule.key_pattern, "when": when, "tag": rule.tag_to_attach,
             "rank": rule.severity_rank, "family": rule.family}
        )
    return {"rules": entries}


def enrich_reported(
    update: Mapping[str, Optional[TaggedValue]],
    rules: Iterable[TagRule],
    admin_tags: Iterable[str] = (),
    diagnostics: Optional[List[str]] = None,
) -> Dict[str, Optional[TaggedValue]]:
    """Attach rule and admin tags to every pair of a reported update; tombstones pass through."""
    rules = tuple(rules)
    admin_tags = tuple(admin_tags)
    if not rules and not admin_tags:
        return dict(update)
    enriched: Dict[str, Optional[TaggedValue]] = {}
    for key, pair in update.items():
        if pair is None:
            enriched[key] = None
            continue
        rule_tags = evaluate_rules(key, pair.value, rules, diagnostics)
        tags = effective_tags(pair.tags, rule_tags, admin_tags)
        enriched[key] = pair if tags == pair.tags else pair.with_tags(tags)
    return enriched
