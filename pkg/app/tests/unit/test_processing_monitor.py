"""Unit tests for the processing monitor"""
import json

from app.monitoring import ProcessingMonitor


def test_stages_accumulate():
    """Test that repeated stages add up and the total sums them"""
    monitor = ProcessingMonitor()
    sample = monitor.begin("car1")
    with sample.stage("update"):
        pass
    first = sample.stages_ns["update"]
    with sample.stage("update"):
        pass
    assert sample.stages_ns["update"] >= first
    assert sample.total_ns == sum(sample.stages_ns.values())


def test_record_listeners_and_history():
    """Test bounded history, counters and listener notification"""
    monitor = ProcessingMonitor(history=2)
    seen = []
    monitor.add_listener(seen.append)
    for device in ("car1", "car2", "car1"):
        sample = monitor.begin(device)
        sample.rejected = device == "car2"
        monitor.record(sample)
    assert len(seen) == 3
    assert len(monitor.samples()) == 2
    assert [s.device_id for s in monitor.samples("car1")] == ["car1"]
    assert monitor.last.device_id == "car1"

    monitor.remove_listener(seen.append)
    monitor.record(monitor.begin("car3"))
    assert len(seen) == 3

    summary = monitor.summary()
    assert summary["messages"] == 4 and summary["rejected"] == 1
    monitor.clear()
    assert monitor.last is None and monitor.summary()["avg_total_us"] == 0.0


def test_dump_writes_json(tmp_path):
    """Test the JSON processing log"""
    monitor = ProcessingMonitor()
    sample = monitor.begin("car1")
    with sample.stage("delta"):
        pass
    monitor.record(sample)
    path = monitor.dump(str(tmp_path / "logs" / "processing.json"))
    data = json.loads(open(path).read())
    assert data["summary"]["retained_samples"] == 1
    assert data["samples"][0]["device_id"] == "car1"
    assert "delta" in data["samples"][0]["stages_ns"]
