"""Core interfaces for the application"""
from .bus_interface import Handler, MessageBus

__all__ = [
    'Handler',
    'MessageBus',
]
