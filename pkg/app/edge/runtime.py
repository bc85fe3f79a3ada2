"""Assembles the edge service from Settings: files, bus, service and simulated devices."""

from dataclasses import dataclass, field
from typing import List, Optional, Union

import structlog

from app.core.config import Settings
from app.core.errors import ConfigError
from app.devices import SimulatedDevice, load_devices
from app.edge.service import EdgeTwinService
from app.monitoring import ProcessingMonitor
from app.security.policy import PolicyStore, load_policy
from app.security.principals import CredentialStore, Role, load_credentials
from app.tags import AdminTagStore, RuleStore, load_rules
from app.transport.bus import InProcessBus
from app.transport.mqtt_bridge import MqttBridge

logger = structlog.get_logger(__name__)


@dataclass
class EdgeRuntime:
    settings: Settings
    bus: Union[InProcessBus, MqttBridge]
    service: EdgeTwinService
    credentials: CredentialStore
    devices: List[SimulatedDevice] = field(default_factory=list)

    def start(self) -> None:
        if isinstance(self.bus, MqttBridge):
            self.bus.connect()
        self.service.start()
        for device in self.devices:
            device.connect()
            device.emit_reported()
        logger.info("edge_runtime_started", devices=len(self.devices), mqtt=isinstance(self.bus, MqttBridge))

    def stop(self) -> None:
        for device in self.devices:
            device.disconnect()
        self.service.stop()
        if isinstance(self.bus, MqttBridge):
            self.bus.disconnect()

    def poll_devices(self) -> int:
        return sum(device.poll() for device in self.devices)


def build_runtime(settings: Settings, bus: Optional[Union[InProcessBus, MqttBridge]] = None) -> EdgeRuntime:
    """Load declarative files named in `settings` and wire everything together."""
    policy = PolicyStore(load_policy(settings.policy_file) if settings.policy_file else None)
    rules = RuleStore(load_rules(settings.rules_file) if settings.rules_file else None)
    credentials = load_credentials(settings.credentials_file) if settings.credentials_file else CredentialStore()

    if bus is None:
        if settings.mqtt_enabled:
            bus = MqttBridge(
                host=settings.mqtt_host,
                port=settings.mqtt_port,
                client_id=settings.mqtt_client_id,
                username=settings.mqtt_username,
                password=settings.mqtt_password,
                policy=policy,
                connect_attempts=settings.mqtt_connect_attempts,
                max_redeliveries=settings.max_redeliveries,
            )
        else:
            bus = InProcessBus(policy, max_redeliveries=settings.max_redeliveries)

    service = EdgeTwinService(
        bus,
        policy=policy,
        rules=rules,
        admin_tags=AdminTagStore(),
        monitor=ProcessingMonitor(),
        max_twins_per_device=settings.max_twins_per_device,
        idle_threshold_ms=settings.idle_threshold_ms,
        qos=settings.shadow_qos,
        max_payload_bytes=settings.max_payload_bytes,
    )

    devices = []
    if settings.devices_file:
        for spec in load_devices(settings.devices_file):
            principal = credentials.get(spec.principal_id)
            if principal is None:
                raise ConfigError(f"Device {spec.device_id} names unknown principal {spec.principal_id!r}")
            if not principal.has_role(Role.DEVICE) or principal.device_id != spec.device_id:
                raise ConfigError(f"Principal {spec.principal_id!r} is not bound to device {spec.device_id}")
            devices.append(SimulatedDevice(spec.device_id, bus, principal, spec.sensors, qos=settings.shadow_qos))

    return EdgeRuntime(settings=settings, bus=bus, service=service, credentials=credentials, devices=devices)
