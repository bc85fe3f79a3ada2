"""Unit tests for core interfaces"""
import pytest

from app.core.interfaces import MessageBus
from app.transport.bus import InProcessBus
from app.transport.mqtt_bridge import MqttBridge


def test_message_bus_interface():
    """Test that interface cannot be instantiated directly"""
    with pytest.raises(TypeError):
        MessageBus()


def test_buses_implement_interface():
    """Test that both transports honour the bus contract"""
    assert issubclass(InProcessBus, MessageBus)
    assert issubclass(MqttBridge, MessageBus)
