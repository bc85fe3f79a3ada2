"""
Exception hierarchy for the edge twin service.

Shadow errors carry an AWS-style numeric code that is copied into the
`rejected` payload published on `update/rejected` and `get/rejected`.
"""

from typing import Optional


class TwinMeshError(Exception):
    """Root of every error raised by twinmesh."""


class ConfigError(TwinMeshError):
    """A configuration, rule, policy or device file could not be loaded."""


class ShadowError(TwinMeshError):
    """An update or request was rejected by a shadow."""

    code: int = 400

    def to_payload(self) -> dict:
        return {"code": self.code, "message": str(self)}


class InvalidKey(ShadowError):
    code = 400


class InvalidTag(ShadowError):
    code = 400


class InvalidValue(ShadowError):
    code = 400


class VersionConflict(ShadowError):
    code = 409


class SchemaViolation(ShadowError):
    """Wire payload does not match the document schema.

    `path` is the JSON path of the first offending node, e.g.
    `.state.reported.tp_ps[1]`.
    """

    code = 400

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path

    def to_payload(self) -> dict:
        return {"code": self.code, "message": str(self), "path": self.path}


class PayloadTooLarge(ShadowError):
    code = 413


class TwinCapacityExceeded(ShadowError):
    code = 503


class UnparsableTopic(ShadowError):
    code = 400


class Unauthorized(ShadowError):
    code = 403


class AuthenticationFailed(TwinMeshError):
    """Credentials did not match the credential store."""

    code = 401


class NotFound(ShadowError):
    code = 404


class DeviceTimeout(TwinMeshError):
    """A simulated device did not conform within the allowed time."""

    def __init__(self, device_id: str, step: int, detail: Optional[str] = None):
        message = f"device {device_id} did not conform at step {step}"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)
        self.device_id = device_id
        self.step = step


class InvariantViolation(TwinMeshError):
    """A state invariant checked during a benchmark step did not hold."""
