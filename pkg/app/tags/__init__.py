"""Rule-driven and administrator tag assignment"""
from .admin import AdminTagSet, AdminTagStore, push_admin_tags
from .rules import (
    DEFAULT_FAMILY,
    Predicate,
    PredicateKind,
    RuleSet,
    RuleStore,
    TagRule,
    effective_tags,
    enrich_reported,
    evaluate_rules,
    load_rules,
    parse_rules,
    rules_to_document,
)

__all__ = [
    "DEFAULT_FAMILY",
    "AdminTagSet",
    "AdminTagStore",
    "Predicate",
    "PredicateKind",
    "RuleSet",
    "RuleStore",
    "TagRule",
    "effective_tags",
    "enrich_reported",
    "evaluate_rules",
    "load_rules",
    "parse_rules",
    "push_admin_tags",
    "rules_to_document",
]
