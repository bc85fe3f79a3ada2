"""Unit tests for domain models and the key/tag/value grammar"""
import math

import pytest

from app.core.errors import InvalidKey, InvalidTag, InvalidValue
from app.domain.models import ShadowDocument, TaggedValue
from app.domain.validators import (
    canonical_scalar,
    normalize_tag,
    normalize_tags,
    scalars_equal,
    validate_device_id,
    validate_key,
)


def test_tagged_value_canonicalizes():
    """Test that TaggedValue.of lower-cases tags, drops duplicates and collapses integral floats"""
    pair = TaggedValue.of(28.0, ["Pressure", "tire", "pressure"])
    assert pair.value == 28 and isinstance(pair.value, int)
    assert pair.tags == ("pressure", "tire")
    assert pair.to_wire() == [28, ["pressure", "tire"]]


def test_tag_grammar():
    """Test tag validation and the reserved base name"""
    assert normalize_tag("Critical") == "critical"
    for bad in ("", "with space", "a/b", "x" * 65, "base", "BASE"):
        with pytest.raises(InvalidTag):
            normalize_tag(bad)
    with pytest.raises(InvalidTag):
        normalize_tags(["ok", 3])


def test_key_and_device_grammar():
    """Test key and device id validation"""
    assert validate_key("tp_front.left-1/ps") == "tp_front.left-1/ps"
    with pytest.raises(InvalidKey):
        validate_key("has space")
    with pytest.raises(InvalidKey):
        validate_key("k" * 129)
    assert validate_device_id("truck:1") == "truck:1"
    with pytest.raises(InvalidKey):
        validate_device_id("truck/1")


def test_scalar_rules():
    """Test value canonicalization and equality"""
    assert canonical_scalar(1.5) == 1.5
    assert canonical_scalar(True) is True
    for bad in (math.nan, math.inf, None, [1], {"a": 1}):
        with pytest.raises(InvalidValue):
            canonical_scalar(bad)
    assert scalars_equal(30, 30.0)
    assert not scalars_equal(True, 1)
    assert not scalars_equal("1", 1)


def test_shadow_document_is_frozen():
    """Test that documents freeze their subgroups and count tag attachments"""
    doc = ShadowDocument(
        reported={"a": TaggedValue(1, ("x", "y")), "b": TaggedValue(2, ())},
        desired={"a": 2},
        delta={"a": 2},
        version=3,
    )
    with pytest.raises(TypeError):
        doc.reported["c"] = TaggedValue(3, ())
    assert doc.tag_attachments == 2
    assert doc.to_state() == {
        "reported": {"a": [1, ["x", "y"]], "b": [2, []]},
        "desired": {"a": 2},
        "delta": {"a": 2},
    }
