"""Integration tests for the HTTP surface over the sample configuration"""
import asyncio

import pytest

from app.main import reap_forever

pytestmark = pytest.mark.integration

ADMIN = ("admin", "twinmesh-admin")
DASHBOARD = ("dashboard", "dashboard-pass")
FLEET = ("fleet-tracker", "fleet-pass")


def test_health(http_client):
    """Test the health endpoint after the sample trucks reported"""
    response = http_client.get("/health")
    assert response.status_code == 200
    assert response.json() == {"status": "healthy", "environment": "testing", "devices": 2, "mqtt_enabled": False}


def test_authentication(http_client):
    """Test that bad credentials get 401"""
    response = http_client.get("/things/truck-1/shadow", auth=("admin", "wrong"))
    assert response.status_code == 401
    assert http_client.get("/things/truck-1/shadow").status_code == 401


def test_psk_device_authenticates_with_hex_key(http_client):
    """Test that a PSK principal reads its own base shadow over HTTP"""
    truck = ("truck-2-device", "5f4dcc3b5aa765d61d8327deb882cf99")
    response = http_client.get("/things/truck-2/shadow", auth=truck)
    assert response.status_code == 200
    assert "battery_v" in response.json()["state"]["reported"]
    assert http_client.get("/things/truck-1/shadow", auth=truck).status_code == 403
    assert http_client.get("/things/truck-2/shadow", auth=("truck-2-device", "truck-pass")).status_code == 401


def test_tag_scoped_reads(http_client):
    """Test that a principal reads exactly the twins it holds grants for"""
    base = http_client.get("/things/truck-1/shadow", auth=ADMIN).json()
    assert base["state"]["reported"]["tp_front_right"] == [28, ["pressure", "tire", "critical"]]
    assert base["version"] >= 1

    pressure = http_client.get("/things/truck-1/shadow", params={"name": "pressure"}, auth=DASHBOARD).json()
    assert set(pressure["state"]["reported"]) == {"tp_front_left", "tp_front_right"}
    critical = http_client.get("/things/truck-1/shadow", params={"name": "critical"}, auth=DASHBOARD).json()
    assert set(critical["state"]["reported"]) == {"tp_front_right"}

    denied = http_client.get("/things/truck-1/shadow", params={"name": "location"}, auth=DASHBOARD)
    assert denied.status_code == 403 and denied.json()["code"] == 403
    assert http_client.get("/things/truck-1/shadow", auth=DASHBOARD).status_code == 403

    assert http_client.get("/things/truck-1/shadow", auth=FLEET).status_code == 200
    assert http_client.get("/things/truck-2/shadow", auth=FLEET).status_code == 403
    assert http_client.get("/things/truck-9/shadow", auth=ADMIN).status_code == 404


def test_desired_update_through_a_twin(http_client):
    """Test a desired value written on the pressure twin, conformed by the simulated truck"""
    response = http_client.post(
        "/things/truck-1/shadow",
        params={"name": "pressure"},
        json={"state": {"desired": {"tp_front_left": 35}}},
        auth=DASHBOARD,
    )
    assert response.status_code == 202
    assert response.json()["topic"] == "things/truck-1/shadow/name/pressure/update"

    twin = http_client.get("/things/truck-1/shadow", params={"name": "pressure"}, auth=DASHBOARD).json()
    assert twin["state"]["reported"]["tp_front_left"] == [35, ["pressure", "tire"]]
    assert twin["state"]["forwarded"] == {}
    base = http_client.get("/things/truck-1/shadow", auth=ADMIN).json()
    assert base["state"]["desired"] == {} and base["state"]["delta"] == {}

    denied = http_client.post(
        "/things/truck-1/shadow", params={"name": "location"}, json={"state": {"desired": {"gps": "0,0"}}}, auth=DASHBOARD
    )
    assert denied.status_code == 403


def test_grant_administration(http_client):
    """Test granting and revoking a base-shadow read at runtime"""
    grant = {"principal": "fleet-tracker", "device": "truck-2", "tag": "#base", "action": "read"}
    assert http_client.post("/admin/grants", json=grant, auth=DASHBOARD).status_code == 403

    added = http_client.post("/admin/grants", json=grant, auth=ADMIN)
    assert added.json() == {"grants": 6}
    assert grant in http_client.get("/admin/grants", auth=ADMIN).json()["grants"]
    assert http_client.get("/things/truck-2/shadow", auth=FLEET).status_code == 200

    assert http_client.post("/admin/grants/revoke", json=grant, auth=ADMIN).json() == {"grants": 5}
    assert http_client.get("/things/truck-2/shadow", auth=FLEET).status_code == 403

    bad = http_client.post("/admin/grants", json={**grant, "action": "own"}, auth=ADMIN)
    assert bad.status_code == 422


def test_acl_export(http_client):
    """Test the Mosquitto ACL rendering"""
    response = http_client.get("/admin/acl", auth=ADMIN)
    assert response.status_code == 200
    assert "user truck-1-device" in response.text
    assert "topic read things/truck-1/shadow/update/delta" in response.text
    assert "# not expressible as MQTT filter: truck-* pressure read" in response.text


def test_admin_tag_push(http_client):
    """Test admin tags over HTTP"""
    response = http_client.post("/admin/things/truck-1/tags", json={"tags": ["Fleet", "leased"]}, auth=ADMIN)
    assert response.status_code == 200
    assert response.json()["tags"] == ["fleet", "leased"]

    assert http_client.post("/admin/things/truck-1/tags", json={"tags": ["x"]}, auth=DASHBOARD).status_code == 403
    assert http_client.post("/admin/things/truck-1/tags", json={"tags": ["not ok"]}, auth=ADMIN).status_code == 400
    assert http_client.post("/admin/things/truck-1/tags", json={"tags": []}, auth=ADMIN).status_code == 422


def test_twin_listing_and_reap(http_client):
    """Test the admin twin overview and a manual reap"""
    body = http_client.get("/admin/things/truck-1/twins", auth=ADMIN).json()
    assert body["base"]["pairs"] == 5
    tags = {twin["tag"] for twin in body["twins"]}
    assert {"pressure", "tire", "warning", "critical", "location", "engine", "actuator"} <= tags
    assert http_client.get("/admin/things/truck-1/twins", auth=FLEET).status_code == 403

    assert "reaped" in http_client.post("/admin/reap", auth=ADMIN).json()


def test_rule_administration(http_client):
    """Test reading and replacing the rule set"""
    assert len(http_client.get("/admin/rules", auth=ADMIN).json()["rules"]) == 6

    invalid = http_client.put("/admin/rules", json={"rules": [{"key": "x"}]}, auth=ADMIN)
    assert invalid.status_code == 400
    replaced = http_client.put(
        "/admin/rules", json={"rules": [{"key": "engine_temp", "when": {"gt": 90}, "tag": "hot"}]}, auth=ADMIN
    )
    assert replaced.json() == {"rules": 1}


def test_metrics(http_client):
    """Test the processing summary"""
    body = http_client.get("/admin/metrics", auth=ADMIN).json()
    assert body["processing"]["messages"] >= 2
    assert body["denials"] >= 0


class _StubService:
    def __init__(self):
        self.sweeps = 0

    def reap_idle(self):
        self.sweeps += 1
        if self.sweeps == 1:
            raise RuntimeError("first sweep fails")
        return {"car1": ["pressure"]}


class _StubRuntime:
    def __init__(self):
        self.service = _StubService()
        self.polls = 0

    def poll_devices(self):
        self.polls += 1
        return 0


@pytest.mark.asyncio
async def test_reaper_keeps_running_after_errors():
    """Test the background sweep: a failing sweep is logged and the loop continues"""
    runtime = _StubRuntime()
    task = asyncio.create_task(reap_forever(runtime, 0.01))
    await asyncio.sleep(0.1)
    task.cancel()
    with pytest.raises(asyncio.CancelledError):
        await task
    assert runtime.service.sweeps >= 2
    assert runtime.polls >= 1
