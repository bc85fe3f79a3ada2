"""Tag-scaling benchmark runs: small functional runs and the full-size timing checks"""
import numpy as np
import pytest

from app.core.errors import DeviceTimeout
from app.evaluation import BenchmarkHarness, Experiment, run_dynamic_scaling, run_static_scaling, summarize

pytestmark = pytest.mark.integration


@pytest.fixture
def harness():
    bench = BenchmarkHarness(verify_invariants=True)
    yield bench
    bench.close()


def test_dynamic_trial_reaches_k_squared_attachments(harness):
    """Test that step k holds k pairs with k tags each"""
    records = harness.dynamic_trial(max_pairs=6, trial=0)
    assert [r.pair_count for r in records] == list(range(7))
    assert harness.service.document("bench-device").tag_attachments == 36
    assert all(r.experiment is Experiment.DYNAMIC and r.tags_per_pair is None for r in records)
    assert all(r.processing_time_ns > 0 for r in records)


def test_static_trial_keeps_tag_count(harness):
    """Test that every pair carries the fixed number of tags"""
    records = harness.static_trial(tags_per_pair=3, max_pairs=5, trial=1)
    assert [r.pair_count for r in records] == list(range(6))
    assert harness.service.document("bench-device").tag_attachments == 15
    assert {entry.tag for entry in harness.service.twins("bench-device")} == {"t000", "t001", "t002"}


def test_trials_start_from_an_empty_system(harness):
    """Test the untimed reset between trials"""
    harness.dynamic_trial(max_pairs=3, trial=0)
    records = harness.dynamic_trial(max_pairs=1, trial=1)
    assert [r.pair_count for r in records] == [0, 1]
    assert harness.service.document("bench-device").tag_attachments == 1


def test_slow_device_is_awaited(harness):
    """Test that a conform latency below the timeout still completes"""
    harness.conform_latency_ms = 5
    records = harness.static_trial(tags_per_pair=1, max_pairs=2, trial=0)
    assert len(records) == 3


def test_device_timeout_aborts_trial():
    """Test that a device slower than the timeout aborts the trial and the run counts it"""
    bench = BenchmarkHarness(device_timeout_ms=10, conform_latency_ms=1000)
    try:
        with pytest.raises(DeviceTimeout) as info:
            bench.static_trial(tags_per_pair=1, max_pairs=1, trial=0)
        assert info.value.step == 1
        run = run_static_scaling(tags_per_pair=[1], max_pairs=1, trials=2, harness=bench)
        assert run.all_aborted and run.completed == 0
    finally:
        bench.close()


def test_runner_argument_checks():
    """Test rejected run parameters"""
    with pytest.raises(ValueError):
        run_dynamic_scaling(max_pairs=-1)
    with pytest.raises(ValueError):
        run_static_scaling(tags_per_pair=[0])


def _overlaps_or_not_below(higher, lower) -> bool:
    return higher.mean_ms >= lower.mean_ms or higher.ci99_high_ms >= lower.ci99_low_ms


@pytest.mark.benchmark
def test_dynamic_scaling_full():
    """Test max_pairs 40 over 50 trials: k squared attachments, a non-decreasing trend and the 36 ms bound"""
    harness = BenchmarkHarness(verify_invariants=True)
    try:
        run = run_dynamic_scaling(max_pairs=40, trials=50, harness=harness)
    finally:
        harness.close()
    assert run.aborted == 0
    points = summarize(run.records)
    assert [p.pair_count for p in points] == list(range(41))
    for earlier, later in zip(points, points[5:]):
        assert _overlaps_or_not_below(later, earlier)
    assert points[-1].mean_ms <= 36.0


@pytest.mark.benchmark
def test_static_scaling_full():
    """Test series 1, 3 and 5 up to 100 pairs: more tags cost more, and growth is roughly linear in pairs"""
    run = run_static_scaling(tags_per_pair=(1, 3, 5), max_pairs=100, trials=50)
    assert run.aborted == 0
    points = summarize(run.records)
    series = {s: {p.pair_count: p for p in points if p.tags_per_pair == s} for s in (1, 3, 5)}
    for k in range(1, 101):
        assert _overlaps_or_not_below(series[5][k], series[3][k])
        assert _overlaps_or_not_below(series[3][k], series[1][k])

    for s in (1, 3, 5):
        counts = np.arange(1, 101)
        means = np.array([series[s][k].mean_ms for k in counts])
        slope, intercept = np.polyfit(counts, means, 1)
        residual = means - (slope * counts + intercept)
        ss_res = float(np.sum(residual**2))
        ss_tot = float(np.sum((means - means.mean()) ** 2))
        assert 1 - ss_res / ss_tot > 0.8
