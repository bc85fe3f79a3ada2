"""Base-shadow state machine and its owning actor"""
from .actor import DesiredCommand, ReportedCommand, ShadowActor
from .state import (
    UNBOUND_SHADOW,
    apply_desired,
    apply_reported,
    compute_delta,
    get_document,
    resolve_matched,
)

__all__ = [
    "DesiredCommand",
    "ReportedCommand",
    "ShadowActor",
    "UNBOUND_SHADOW",
    "apply_desired",
    "apply_reported",
    "compute_delta",
    "get_document",
    "resolve_matched",
]
