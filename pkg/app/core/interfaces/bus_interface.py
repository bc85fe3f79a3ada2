from abc import ABC, abstractmethod
from typing import TYPE_CHECKING, Callable, Optional

if TYPE_CHECKING:
    from app.security.principals import Principal
    from app.transport.bus import PublishResult, Subscription
    from app.transport.messages import Delivery, WireMessage

# Returning False asks for redelivery of a QoS 1 message; None counts as an ack.
Handler = Callable[["Delivery"], Optional[bool]]


class MessageBus(ABC):
    """
    Publish/subscribe contract shared by the in-process bus and the MQTT bridge.
    Authorization happens inside the bus, never in the caller.
    """

    @abstractmethod
    def publish(self, principal: "Principal", message: "WireMessage") -> "PublishResult":
        """Publish a message; a denied publish delivers nothing."""
        pass

    @abstractmethod
    def subscribe(self, principal: "Principal", topic_filter: str, handler: Handler) -> "Subscription":
        """Register a handler for every message matching `topic_filter`."""
        pass

    @abstractmethod
    def unsubscribe(self, subscription: "Subscription") -> None:
        pass
