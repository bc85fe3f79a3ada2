"""
Tag-based access policy.

Grants address (device glob, tag glob or `#base`, read|write) rather than raw
topics; `topic_filters` compiles them to topic patterns for brokers that need
them. Policy file format:

    {"grants": [
        {"principal": "app1", "device": "car1", "tag": "pressure", "action": "read"}
    ]}

Absence of a matching grant means deny.
"""

import fnmatch
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import FrozenSet, Iterable, List, Optional, Union

import structlog
from pydantic import BaseModel, ConfigDict, ValidationError

from app.core.errors import ConfigError, Unauthorized
from app.security.principals import Principal

logger = structlog.get_logger(__name__)

BASE_GRANT_TAG = "#base"


class Action(str, Enum):
    READ = "read"
    WRITE = "write"


def _plain_glob(pattern: str) -> bool:
    return pattern == "*" or not any(c in pattern for c in "*?[]")


@dataclass(frozen=True)
class Grant:
    principal: str
    device: str
    tag: str
    action: Action

    def __post_init__(self) -> None:
        object.__setattr__(self, "action", Action(self.action))
        if not self.principal or not self.device or not self.tag:
            raise ValueError("Grant needs principal, device and tag")

    def matches(self, principal_id: str, device_id: str, tag: Optional[str], action: Action) -> bool:
        """`tag` None addresses the base shadow."""
        if self.principal != principal_id or self.action is not action:
            return False
        if not fnmatch.fnmatchcase(device_id, self.device):
            return False
        if tag is None:
            return self.tag == BASE_GRANT_TAG
        return self.tag != BASE_GRANT_TAG and fnmatch.fnmatchcase(tag, self.tag)

    def topic_filters(self) -> List[str]:
        """MQTT topic patterns this grant covers (only exact or `*` globs compile)."""
        device = "+" if self.device == "*" else self.device
        if self.tag == BASE_GRANT_TAG:
            prefix = f"things/{device}/shadow"
        else:
            prefix = f"things/{device}/shadow/name/{'+' if self.tag == '*' else self.tag}"
        if self.action is Action.READ:
            return [f"{prefix}/get", f"{prefix}/get/+", f"{prefix}/update/+"]
        return [f"{prefix}/update"]

    def compiles(self) -> bool:
        return _plain_glob(self.device) and (self.tag == BASE_GRANT_TAG or _plain_glob(self.tag))

    def to_dict(self) -> dict:
        return {"principal": self.principal, "device": self.device, "tag": self.tag, "action": self.action.value}


@dataclass(frozen=True)
class AccessPolicy:
    grants: FrozenSet[Grant] = frozenset()

    def __len__(self) -> int:
        return len(self.grants)


def _require_admin(actor: Principal, verb: str) -> None:
    if not actor.is_admin:
        raise Unauthorized(f"{actor.id!r} is not allowed to {verb} grants")


def grant(policy: AccessPolicy, entry: Grant, actor: Principal) -> AccessPolicy:
    _require_admin(actor, "add")
    return AccessPolicy(policy.grants | {entry})


def revoke(policy: AccessPolicy, entry: Grant, actor: Principal) -> AccessPolicy:
    _require_admin(actor, "revoke")
    if entry not in policy.grants:
        return policy
    return AccessPolicy(policy.grants - {entry})


class PolicyStore:
    """Current policy snapshot; grant/revoke swap in a new snapshot under a lock."""

    def __init__(self, policy: Optional[AccessPolicy] = None):
        self._current = policy or AccessPolicy()
        self._lock = threading.Lock()

    @property
    def current(self) -> AccessPolicy:
        return self._current

    def grant(self, entry: Grant, actor: Principal) -> AccessPolicy:
        with self._lock:
            self._current = grant(self._current, entry, actor)
        logger.info("grant_added", by=actor.id, **entry.to_dict())
        return self._current

    def revoke(self, entry: Grant, actor: Principal) -> AccessPolicy:
        with self._lock:
            self._current = revoke(self._current, entry, actor)
        logger.info("grant_revoked", by=actor.id, **entry.to_dict())
        return self._current

    def replace(self, policy: AccessPolicy) -> None:
        self._current = policy


# --- policy file schema ---------------------------------------------------------


class GrantEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    principal: str
    device: str
    tag: str
    action: Action


class PolicyFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    grants: List[GrantEntry] = []


def parse_policy(data: Union[dict, str, bytes]) -> AccessPolicy:
    try:
        if isinstance(data, (str, bytes)):
            document = PolicyFile.model_validate_json(data)
        else:
            document = PolicyFile.model_validate(data)
        return AccessPolicy(
            frozenset(Grant(e.principal, e.device, e.tag, e.action) for e in document.grants)
        )
    except (ValidationError, ValueError) as e:
        raise ConfigError(f"Invalid policy document: {e}")


def load_policy(path: Union[str, Path]) -> AccessPolicy:
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read policy file {path}: {e}")
    policy = parse_policy(raw)
    logger.info("policy_loaded", path=str(path), grants=len(policy))
    return policy


def policy_to_document(policy: AccessPolicy) -> dict:
    grants = sorted(policy.grants, key=lambda g: (g.principal, g.device, g.tag, g.action.value))
    return {"grants": [g.to_dict() for g in grants]}


def to_mosquitto_acl(policy: AccessPolicy, principals: Iterable[Principal] = ()) -> str:
    """
    Render the policy as a Mosquitto ACL file for an external broker.

    Device principals get their own base shadow; admins get `#`. Grants whose
    globs have no MQTT equivalent are listed as comments and stay enforced by
    the in-process evaluator only.
    """
    lines: List[str] = []
    by_principal = {}
    for g in sorted(policy.grants, key=lambda g: (g.principal, g.device, g.tag, g.action.value)):
        by_principal.setdefault(g.principal, []).append(g)

    for principal in sorted(principals, key=lambda p: p.id):
        if principal.is_admin:
            lines += [f"user {principal.id}", "topic readwrite #", ""]
        elif principal.device_id:
            base = f"things/{principal.device_id}/shadow"
            lines += [
                f"user {principal.id}",
                f"topic write {base}/update",
                f"topic write {base}/get",
                f"topic read {base}/update/delta",
                f"topic read {base}/update/accepted",
                f"topic read {base}/update/rejected",
                f"topic read {base}/get/+",
                f"topic read {base}/tags/push",
                "",
            ]

    for principal_id, grants in by_principal.items():
        lines.append(f"user {principal_id}")
        for g in grants:
            if not g.compiles():
                lines.append(f"# not expressible as MQTT filter: {g.device} {g.tag} {g.action.value}")
                continue
            if g.action is Action.READ:
                get_topic, *read_topics = g.topic_filters()
                lines.append(f"topic write {get_topic}")
                lines += [f"topic read {t}" for t in read_topics]
            else:
                lines += [f"topic write {t}" for t in g.topic_filters()]
        lines.append("")
    return "\n".join(lines)
