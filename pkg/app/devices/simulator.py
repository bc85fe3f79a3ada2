"""
Simulated physical devices.

A device subscribes to its base shadow's `update/delta` channel, adopts the
desired values it receives and reports them back on `update`. Each sensor
carries static device tags and optional device-side threshold rules, so a
device can tag its own readings before the shadow adds rule and admin tags.

Device config file format:

    {"devices": [
        {"id": "car1", "principal": "car1-device",
         "sensors": [
            {"key": "tire_pressure_ps", "value": 35, "tags": ["pressure", "tire"],
             "rules": [{"key": "tire_pressure_*", "when": {"lt": 30}, "tag": "critical", "rank": 2}]},
            {"key": "speed", "value": 0, "tags": ["motion"], "conform_latency_ms": 20}
         ]}
    ]}
"""

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import structlog
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from app.core.errors import ConfigError, SchemaViolation, ShadowError
from app.core.interfaces import MessageBus
from app.domain.models import TaggedValue
from app.domain.validators import Scalar, canonical_scalar, normalize_tags, validate_device_id, validate_key
from app.security.principals import Principal
from app.tags.rules import RuleEntry, TagRule, effective_tags, evaluate_rules
from app.transport.codec import decode_object, encode_payload
from app.transport.messages import Delivery, WireMessage
from app.transport.topics import Channel, make_topic

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class SensorConfig:
    key: str
    value: Scalar
    device_tags: Tuple[str, ...] = ()
    conform_latency_ms: int = 0
    rules: Tuple[TagRule, ...] = ()

    def __post_init__(self) -> None:
        validate_key(self.key)
        object.__setattr__(self, "value", canonical_scalar(self.value))
        object.__setattr__(self, "device_tags", normalize_tags(self.device_tags))
        object.__setattr__(self, "rules", tuple(self.rules))
        if self.conform_latency_ms < 0:
            raise ValueError("conform_latency_ms cannot be negative")

    def reading(self, value: Optional[Scalar] = None) -> TaggedValue:
        value = self.value if value is None else value
        rule_tags = evaluate_rules(self.key, value, self.rules) if self.rules else ()
        return TaggedValue(value, effective_tags(self.device_tags, rule_tags, ()))


@dataclass
class _PendingReport:
    due: float
    keys: Tuple[str, ...]


class SimulatedDevice:
    """In-process device actor speaking the shadow topics over a MessageBus."""

    def __init__(
        self,
        device_id: str,
        bus: MessageBus,
        principal: Principal,
        sensors: Tuple[SensorConfig, ...] = (),
        full_state_reports: bool = False,
        qos: int = 1,
    ):
        self.device_id = validate_device_id(device_id)
        self.bus = bus
        self.principal = principal
        self.full_state_reports = full_state_reports
        self.qos = qos
        self._sensors: Dict[str, SensorConfig] = {}
        self._pending: List[_PendingReport] = []
        self._subscriptions = []
        self.rejections: List[Mapping[str, Any]] = []
        self.last_delta_version: Optional[int] = None
        self.reports_sent = 0
        for sensor in sensors:
            self.configure_sensor(sensor)

        self._update_topic = make_topic(self.device_id, None, Channel.UPDATE)
        self._delta_topic = make_topic(self.device_id, None, Channel.UPDATE_DELTA)
        self._rejected_topic = make_topic(self.device_id, None, Channel.UPDATE_REJECTED)

    @property
    def sensors(self) -> Dict[str, SensorConfig]:
        return dict(self._sensors)

    @property
    def connected(self) -> bool:
        return bool(self._subscriptions)

    @property
    def pending_reports(self) -> int:
        return len(self._pending)

    def connect(self) -> None:
        if self.connected:
            return
        self._subscriptions = [
            self.bus.subscribe(self.principal, self._delta_topic.render(), self._on_delta),
            self.bus.subscribe(self.principal, self._rejected_topic.render(), self._on_rejected),
        ]
        logger.info("device_connected", device=self.device_id, sensors=len(self._sensors))

    def disconnect(self) -> None:
        for subscription in self._subscriptions:
            self.bus.unsubscribe(subscription)
        self._subscriptions = []
        self._pending.clear()

    def configure_sensor(self, config: SensorConfig) -> "SimulatedDevice":
        """Add or replace a sensor; the next report reflects it."""
        self._sensors[config.key] = config
        return self

    def reset(self) -> None:
        self._sensors.clear()
        self._pending.clear()
        self.last_delta_version = None

    def current_state(self, keys: Optional[Tuple[str, ...]] = None) -> Dict[str, TaggedValue]:
        keys = tuple(self._sensors) if keys is None else keys
        return {key: self._sensors[key].reading() for key in keys}

    def emit_reported(self) -> Dict[str, TaggedValue]:
        """Publish the full current state on `update`."""
        state = self.current_state()
        self._publish(state)
        return state

    def on_delta_conform(self, delta: Mapping[str, Any]) -> Optional[Dict[str, TaggedValue]]:
        """
        Adopt the delta values and report them back.

        Returns the reported update, or None when the delta was empty or the
        report is held back by a conform latency (see `poll`).
        """
        if not delta:
            return None

        latency = 0
        for key, raw in delta.items():
            try:
                value = canonical_scalar(raw)
            except ShadowError as e:
                logger.warning("device_delta_value_ignored", device=self.device_id, key=key, reason=str(e))
                continue
            sensor = self._sensors.get(key)
            if sensor is None:
                logger.warning("device_unknown_key_adopted", device=self.device_id, key=key)
                sensor = SensorConfig(key=key, value=value)
            else:
                sensor = SensorConfig(
                    key=key,
                    value=value,
                    device_tags=sensor.device_tags,
                    conform_latency_ms=sensor.conform_latency_ms,
                    rules=sensor.rules,
                )
            self._sensors[key] = sensor
            latency = max(latency, sensor.conform_latency_ms)

        keys = tuple(key for key in delta if key in self._sensors)
        if latency > 0:
            self._pending.append(_PendingReport(time.monotonic() + latency / 1000.0, keys))
            return None
        return self._report(keys)

    def poll(self, now: Optional[float] = None) -> int:
        """Publish reports whose conform latency has elapsed; returns how many were sent."""
        now = time.monotonic() if now is None else now
        due = [p for p in self._pending if p.due <= now]
        if not due:
            return 0
        self._pending = [p for p in self._pending if p.due > now]
        for report in due:
            self._report(report.keys)
        return len(due)

    def _report(self, keys: Tuple[str, ...]) -> Dict[str, TaggedValue]:
        state = self.current_state() if self.full_state_reports else self.current_state(keys)
        self._publish(state)
        return state

    def _publish(self, state: Mapping[str, TaggedValue]) -> None:
        # Devices put finished bytes on the wire
        body = encode_payload({"state": {"reported": state}})
        result = self.bus.publish(self.principal, WireMessage(self._update_topic, body, qos=self.qos))
        if not result:
            logger.error("device_report_denied", device=self.device_id, reason=result.reason)
            return
        self.reports_sent += 1

    def _payload(self, delivery: Delivery) -> Optional[Mapping[str, Any]]:
        body = delivery.message.body
        if isinstance(body, (bytes, bytearray)):
            try:
                return decode_object(body)
            except SchemaViolation as e:
                logger.warning("device_payload_unreadable", device=self.device_id, reason=str(e))
                return None
        return body

    def _on_delta(self, delivery: Delivery) -> None:
        payload = self._payload(delivery)
        if payload is None:
            return
        self.last_delta_version = payload.get("version")
        self.on_delta_conform(payload.get("state") or {})

    def _on_rejected(self, delivery: Delivery) -> None:
        payload = self._payload(delivery)
        if payload is not None:
            self.rejections.append(payload)
            logger.warning("device_update_rejected", device=self.device_id, code=payload.get("code"))


# --- device file schema ---------------------------------------------------------


class SensorEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    key: str
    value: Union[bool, int, float, str]
    tags: List[str] = []
    conform_latency_ms: int = Field(default=0, ge=0)
    rules: List[RuleEntry] = []

    def to_config(self) -> SensorConfig:
        return SensorConfig(
            key=self.key,
            value=self.value,
            device_tags=tuple(self.tags),
            conform_latency_ms=self.conform_latency_ms,
            rules=tuple(rule.to_rule() for rule in self.rules),
        )


class DeviceEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str
    principal: str
    sensors: List[SensorEntry] = []


class DeviceFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    devices: List[DeviceEntry] = []


@dataclass(frozen=True)
class DeviceSpec:
    device_id: str
    principal_id: str
    sensors: Tuple[SensorConfig, ...] = field(default_factory=tuple)


def parse_devices(data: Union[dict, str, bytes]) -> List[DeviceSpec]:
    try:
        if isinstance(data, (str, bytes)):
            document = DeviceFile.model_validate_json(data)
        else:
            document = DeviceFile.model_validate(data)
        specs = []
        for entry in document.devices:
            sensors = tuple(sensor.to_config() for sensor in entry.sensors)
            keys = [s.key for s in sensors]
            if len(keys) != len(set(keys)):
                raise ValueError(f"Device {entry.id!r} lists a sensor key twice")
            specs.append(DeviceSpec(validate_device_id(entry.id), entry.principal, sensors))
    except (ValidationError, ValueError, ShadowError) as e:
        raise ConfigError(f"Invalid device document: {e}")
    return specs


def load_devices(path: Union[str, Path]) -> List[DeviceSpec]:
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read device file {path}: {e}")
    specs = parse_devices(raw)
    logger.info("devices_loaded", path=str(path), devices=len(specs))
    return specs
