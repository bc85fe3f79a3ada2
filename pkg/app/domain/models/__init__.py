"""Domain models shared by shadows, the router and the transport codec"""
from .shadow_document import ShadowDocument
from .tagged_value import TaggedValue

__all__ = ["ShadowDocument", "TaggedValue"]
