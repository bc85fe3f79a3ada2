"""Constants and helpers shared by the test modules"""
from pathlib import Path

from app.security.policy import Action, Grant

PROJECT_ROOT = Path(__file__).resolve().parents[2]
CONFIG_DIR = PROJECT_ROOT / "config"

TIRE_RULES = {
    "rules": [
        {"key": "tp_*", "when": {"lt": 35}, "tag": "warning", "rank": 1},
        {"key": "tp_*", "when": {"lt": 30}, "tag": "critical", "rank": 2},
    ]
}


def read_grant(principal: str, device: str, tag: str) -> Grant:
    return Grant(principal, device, tag, Action.READ)


def write_grant(principal: str, device: str, tag: str) -> Grant:
    return Grant(principal, device, tag, Action.WRITE)


def bulk_report(pairs: int = 1000, width: int = 120, tag: str = "bulk") -> dict:
    """A valid report whose documents-changed event (previous + current) exceeds 256 KiB once repeated."""
    return {"state": {"reported": {f"k{i:04d}": ["x" * width, [tag]] for i in range(pairs)}}}
