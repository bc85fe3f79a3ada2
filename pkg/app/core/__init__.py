# app/core/__init__.py
"""
Core infrastructure shared across the service: settings, errors, events,
logging and the message bus interface
"""
from .interfaces import Handler, MessageBus

__all__ = [
    'Handler',
    'MessageBus',
]
