"""Per-tag twin partitioning and lifecycle"""
from .twin_router import (
    DEFAULT_IDLE_THRESHOLD_MS,
    SubDocument,
    TwinEntry,
    TwinRegistry,
    TwinRouter,
    TwinState,
    ensure_twin,
    parse_tags,
    reap_idle,
    record_forwarded,
    route,
)

__all__ = [
    "DEFAULT_IDLE_THRESHOLD_MS",
    "SubDocument",
    "TwinEntry",
    "TwinRegistry",
    "TwinRouter",
    "TwinState",
    "ensure_twin",
    "parse_tags",
    "reap_idle",
    "record_forwarded",
    "route",
]
