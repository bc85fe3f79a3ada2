"""Shared fixtures: principals, policy, an in-process bus and a running edge service"""
import pytest
from fastapi.testclient import TestClient

from app.core.config import Settings
from app.edge.service import EdgeTwinService
from app.main import create_app
from app.monitoring import ProcessingMonitor
from app.security.policy import PolicyStore
from app.security.principals import Principal, Role
from app.tags import AdminTagStore, RuleStore, parse_rules
from app.tests.support import CONFIG_DIR, TIRE_RULES
from app.transport.bus import InProcessBus


@pytest.fixture
def admin():
    return Principal("root", frozenset({Role.ADMIN}))


@pytest.fixture
def car_device():
    return Principal("car1-device", frozenset({Role.DEVICE}), device_id="car1")


@pytest.fixture
def app_client():
    return Principal("app1", frozenset({Role.APP}))


@pytest.fixture
def policy_store():
    return PolicyStore()


@pytest.fixture
def bus(policy_store):
    return InProcessBus(policy_store)


@pytest.fixture
def rule_store():
    return RuleStore(parse_rules(TIRE_RULES))


@pytest.fixture
def service(bus, policy_store, rule_store):
    edge = EdgeTwinService(
        bus,
        policy=policy_store,
        rules=rule_store,
        admin_tags=AdminTagStore(),
        monitor=ProcessingMonitor(),
    )
    edge.start()
    yield edge
    edge.stop()


@pytest.fixture
def edge_settings():
    """Testing environment with the sample trucks attached."""
    config = Settings.from_file(CONFIG_DIR / "environments" / "testing.json")
    return config.model_copy(update={"devices_file": str(CONFIG_DIR / "devices.json")})


@pytest.fixture
def http_client(edge_settings):
    """TestClient with the lifespan running, so the runtime and its devices are started."""
    with TestClient(create_app(config=edge_settings)) as client:
        yield client
