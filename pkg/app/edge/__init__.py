"""Edge twin service: request handling, event publishing and runtime assembly"""
from .runtime import EdgeRuntime, build_runtime
from .service import EdgeTwinService, can_read, can_write, state_summary, twin_view

__all__ = ["EdgeRuntime", "EdgeTwinService", "build_runtime", "can_read", "can_write", "state_summary", "twin_view"]
