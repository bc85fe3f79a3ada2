"""
Principals and the credential store.

Credential file format:

    {
      "principals": [
        {"id": "admin", "roles": ["admin"],
         "password": {"salt": "<hex>", "hash": "<hex>"}},
        {"id": "app1", "roles": ["app"],
         "password": {"salt": "<hex>", "hash": "<hex>"}},
        {"id": "car1-device", "roles": ["device"], "device_id": "car1",
         "psk_id": "car1-psk"}
      ],
      "psks": {"car1-psk": "<hex>"}
    }

Password hashes use scrypt with a per-entry salt; PSKs are opaque byte
strings looked up by id.
"""

import hmac
import json
import os
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Union

import structlog
from cryptography.exceptions import InvalidKey as InvalidDerivedKey
from cryptography.hazmat.primitives.kdf.scrypt import Scrypt
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from app.core.errors import AuthenticationFailed, ConfigError, ShadowError
from app.domain.validators import validate_device_id

logger = structlog.get_logger(__name__)

SCRYPT_N = 2**14
SCRYPT_R = 8
SCRYPT_P = 1
HASH_LENGTH = 32
SALT_LENGTH = 16


class Role(str, Enum):
    ADMIN = "admin"
    DEVICE = "device"
    APP = "app"


@dataclass(frozen=True)
class PasswordCredential:
    salt: bytes
    hash: bytes


@dataclass(frozen=True)
class PskCredential:
    psk_id: str


Credential = Union[PasswordCredential, PskCredential]


@dataclass(frozen=True)
class Principal:
    id: str
    roles: FrozenSet[Role]
    device_id: Optional[str] = None
    credential: Optional[Credential] = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("Principal id cannot be empty")
        object.__setattr__(self, "roles", frozenset(Role(r) for r in self.roles))
        if Role.DEVICE in self.roles:
            if not self.device_id:
                raise ValueError(f"Device principal {self.id!r} must be bound to a device_id")
            validate_device_id(self.device_id)
        elif self.device_id is not None:
            raise ValueError(f"Only device principals carry a device_id ({self.id!r})")

    def has_role(self, role: Role) -> bool:
        return role in self.roles

    @property
    def is_admin(self) -> bool:
        return Role.ADMIN in self.roles


# The edge service publishes responses under this identity
SERVICE_PRINCIPAL = Principal("twinmesh-service", frozenset({Role.ADMIN}))


def _scrypt(salt: bytes) -> Scrypt:
    return Scrypt(salt=salt, length=HASH_LENGTH, n=SCRYPT_N, r=SCRYPT_R, p=SCRYPT_P)


def hash_password(password: str, salt: Optional[bytes] = None) -> PasswordCredential:
    salt = salt if salt is not None else os.urandom(SALT_LENGTH)
    return PasswordCredential(salt=salt, hash=_scrypt(salt).derive(password.encode("utf-8")))


def verify_password(credential: PasswordCredential, password: str) -> bool:
    try:
        _scrypt(credential.salt).verify(password.encode("utf-8"), credential.hash)
    except InvalidDerivedKey:
        return False
    return True


class CredentialStore:
    """Looks principals up by id and checks their secrets."""

    def __init__(self, principals: Iterable[Principal] = (), psks: Optional[Dict[str, bytes]] = None):
        self._principals: Dict[str, Principal] = {}
        self._psks: Dict[str, bytes] = dict(psks or {})
        self._lock = threading.Lock()
        for principal in principals:
            self.add(principal)

    def add(self, principal: Principal, psk: Optional[bytes] = None) -> None:
        with self._lock:
            if principal.id in self._principals:
                raise ValueError(f"Duplicate principal id: {principal.id!r}")
            self._principals[principal.id] = principal
            if psk is not None:
                if not isinstance(principal.credential, PskCredential):
                    raise ValueError(f"Principal {principal.id!r} has no PSK credential")
                self._psks[principal.credential.psk_id] = psk

    def get(self, principal_id: str) -> Optional[Principal]:
        return self._principals.get(principal_id)

    def principals(self) -> List[Principal]:
        return list(self._principals.values())

    def authenticate(self, principal_id: str, secret: str) -> Principal:
        """
        Check `secret` against whichever credential the principal holds.

        Password principals send their password. PSK principals send the
        key as hex, the same encoding the credential file uses.
        """
        principal = self._principals.get(principal_id)
        if principal is not None and isinstance(principal.credential, PskCredential):
            try:
                key = bytes.fromhex(secret)
            except ValueError:
                logger.warning("authentication_failed", principal=principal_id, method="psk")
                raise AuthenticationFailed(f"Bad pre-shared key for {principal_id!r}")
            return self.authenticate_psk(principal.credential.psk_id, key)
        return self.authenticate_password(principal_id, secret)

    def authenticate_password(self, principal_id: str, password: str) -> Principal:
        principal = self._principals.get(principal_id)
        credential = principal.credential if principal else None
        if not isinstance(credential, PasswordCredential) or not verify_password(credential, password):
            logger.warning("authentication_failed", principal=principal_id, method="password")
            raise AuthenticationFailed(f"Bad credentials for {principal_id!r}")
        return principal

    def authenticate_psk(self, psk_id: str, key: bytes) -> Principal:
        expected = self._psks.get(psk_id)
        principal = next(
            (
                p
                for p in self._principals.values()
                if isinstance(p.credential, PskCredential) and p.credential.psk_id == psk_id
            ),
            None,
        )
        if expected is None or principal is None or not hmac.compare_digest(expected, key):
            logger.warning("authentication_failed", psk_id=psk_id, method="psk")
            raise AuthenticationFailed(f"Bad pre-shared key for {psk_id!r}")
        return principal


# --- credential file schema -----------------------------------------------------


class PasswordEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    salt: str
    hash: str


class PrincipalEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str
    roles: List[Role]
    device_id: Optional[str] = None
    password: Optional[PasswordEntry] = None
    psk_id: Optional[str] = None

    @model_validator(mode="after")
    def _one_credential(self) -> "PrincipalEntry":
        if (self.password is None) == (self.psk_id is None):
            raise ValueError(f"Principal {self.id!r} needs exactly one of password or psk_id")
        return self


class CredentialFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    principals: List[PrincipalEntry] = []
    psks: Dict[str, str] = {}


def parse_credentials(data: Union[dict, str, bytes]) -> CredentialStore:
    try:
        if isinstance(data, (str, bytes)):
            document = CredentialFile.model_validate_json(data)
        else:
            document = CredentialFile.model_validate(data)
        store = CredentialStore(psks={k: bytes.fromhex(v) for k, v in document.psks.items()})
        for entry in document.principals:
            if entry.password is not None:
                credential: Credential = PasswordCredential(
                    salt=bytes.fromhex(entry.password.salt),
                    hash=bytes.fromhex(entry.password.hash),
                )
            else:
                credential = PskCredential(entry.psk_id)
            store.add(
                Principal(
                    id=entry.id,
                    roles=frozenset(entry.roles),
                    device_id=entry.device_id,
                    credential=credential,
                )
            )
    except (ValidationError, ValueError, ShadowError) as e:
        raise ConfigError(f"Invalid credential document: {e}")
    return store


def load_credentials(path: Union[str, Path]) -> CredentialStore:
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read credential file {path}: {e}")
    store = parse_credentials(raw)
    logger.info("credentials_loaded", path=str(path), principals=len(store.principals()))
    return store


def password_entry(principal_id: str, password: str, roles: Iterable[str]) -> str:
    """JSON snippet for a new password principal, printed by `twinmesh admin hash-password`."""
    credential = hash_password(password)
    return json.dumps(
        {
            "id": principal_id,
            "roles": sorted(set(roles)),
            "password": {"salt": credential.salt.hex(), "hash": credential.hash.hex()},
        },
        indent=2,
    )
