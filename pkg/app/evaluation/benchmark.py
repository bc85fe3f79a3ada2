"""
Tag-scaling benchmarks.

Both experiments drive one simulated device through the edge service on a
deferred in-process bus, single-threaded, and time only the service's
processing of each reported message (update + delta + parse_tags).

Dynamic: at step k the device reports k pairs carrying k tags each. Between
steps the driver adds a new tag to every existing pair plus a new pair with
k+1 tags, pushes a desired value for the new key and waits for the device to
conform and report its full state.

Static: at step k the device reports k pairs with a fixed number of tags each.

The per-trial reset that empties service and device is not timed.
"""

import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import structlog

from app.core.errors import DeviceTimeout, InvariantViolation
from app.devices import SensorConfig, SimulatedDevice
from app.edge.service import EdgeTwinService
from app.evaluation.statistics import Experiment, TrialRecord
from app.monitoring import ProcessingMonitor, ProcessingSample
from app.routing import parse_tags
from app.security.policy import PolicyStore
from app.security.principals import Principal, Role
from app.transport.bus import InProcessBus
from app.transport.codec import encode_payload
from app.transport.messages import WireMessage
from app.transport.topics import Channel, make_topic

logger = structlog.get_logger(__name__)

BENCH_DEVICE = "bench-device"
DEFAULT_DYNAMIC_MAX_PAIRS = 40
DEFAULT_STATIC_MAX_PAIRS = 100
DEFAULT_TRIALS = 500
DEFAULT_DEVICE_TIMEOUT_MS = 5_000


def pair_key(index: int) -> str:
    return f"p{index:03d}"


def tag_name(index: int) -> str:
    return f"t{index:03d}"


@dataclass
class BenchmarkRun:
    experiment: Experiment
    records: List[TrialRecord] = field(default_factory=list)
    trials: int = 0
    aborted: int = 0

    @property
    def completed(self) -> int:
        return self.trials - self.aborted

    @property
    def all_aborted(self) -> bool:
        return self.trials > 0 and self.aborted == self.trials


class BenchmarkHarness:
    """One service, one device and a stepped bus, reused across trials."""

    def __init__(
        self,
        device_timeout_ms: int = DEFAULT_DEVICE_TIMEOUT_MS,
        verify_invariants: bool = False,
        conform_latency_ms: int = 0,
    ):
        self.device_timeout_ms = device_timeout_ms
        self.verify_invariants = verify_invariants
        self.conform_latency_ms = conform_latency_ms

        self.bus = InProcessBus(PolicyStore(), deferred=True, max_redeliveries=0)
        self.monitor = ProcessingMonitor(history=1)
        self.service = EdgeTwinService(self.bus, monitor=self.monitor, max_twins_per_device=None, qos=0)
        self.driver = Principal("bench-driver", frozenset({Role.ADMIN}))
        device_principal = Principal(f"{BENCH_DEVICE}-principal", frozenset({Role.DEVICE}), device_id=BENCH_DEVICE)
        self.device = SimulatedDevice(BENCH_DEVICE, self.bus, device_principal, full_state_reports=True, qos=0)
        self._update_topic = make_topic(BENCH_DEVICE, None, Channel.UPDATE)
        self._captured: List[ProcessingSample] = []
        self.monitor.add_listener(self._capture)

        self.service.start()
        self.device.connect()
        self.bus.drain()

    def _capture(self, sample: ProcessingSample) -> None:
        if sample.reported and sample.device_id == BENCH_DEVICE:
            self._captured.append(sample)

    def close(self) -> None:
        self.monitor.remove_listener(self._capture)
        self.device.disconnect()
        self.service.stop()

    def reset(self) -> None:
        self.bus.drain()
        self.service.reset(BENCH_DEVICE)
        self.device.reset()
        self._captured.clear()

    # --- stepping -------------------------------------------------------------------

    def _await_report(self, step: int) -> ProcessingSample:
        """Drive the bus (and any conform latency) until the service processed a report."""
        deadline = time.monotonic() + self.device_timeout_ms / 1000.0
        while True:
            self.bus.drain()
            if self._captured:
                return self._captured.pop()
            if self.device.poll():
                continue
            if time.monotonic() >= deadline:
                raise DeviceTimeout(BENCH_DEVICE, step, f"no report within {self.device_timeout_ms} ms")
            if self.device.pending_reports:
                time.sleep(0.0005)
            else:
                raise DeviceTimeout(BENCH_DEVICE, step, "device published nothing")

    def _initial_report(self) -> ProcessingSample:
        self._captured.clear()
        self.device.emit_reported()
        return self._await_report(0)

    def _push_desired(self, key: str, value: int, step: int) -> ProcessingSample:
        self._captured.clear()
        body = encode_payload({"state": {"desired": {key: value}}})
        result = self.bus.publish(self.driver, WireMessage(self._update_topic, body, qos=0))
        if not result:
            raise DeviceTimeout(BENCH_DEVICE, step, f"desired push denied: {result.reason}")
        return self._await_report(step)

    def _check(self, step: int, expected_attachments: int) -> None:
        document = self.service.document(BENCH_DEVICE)
        if document.tag_attachments != expected_attachments:
            raise InvariantViolation(
                f"step {step}: {document.tag_attachments} tag attachments, expected {expected_attachments}"
            )
        if document.desired or document.delta:
            raise InvariantViolation(f"step {step}: desired/delta not resolved: {dict(document.delta)}")
        expected = parse_tags(document.reported)
        twins = {entry.tag: entry for entry in self.service.twins(BENCH_DEVICE) if entry.shadow.reported}
        if set(twins) != set(expected):
            raise InvariantViolation(f"step {step}: twins {sorted(twins)} != tags {sorted(expected)}")
        for tag, sub in expected.items():
            if dict(twins[tag].shadow.reported) != dict(sub.pairs):
                raise InvariantViolation(f"step {step}: twin {tag!r} is not the projection of its tag")

    def _record(self, experiment: Experiment, tags_per_pair: Optional[int], sample: ProcessingSample, trial: int) -> TrialRecord:
        return TrialRecord(
            experiment=experiment,
            tags_per_pair=tags_per_pair,
            pair_count=sample.pair_count,
            processing_time_ns=sample.total_ns,
            trial_index=trial,
        )

    # --- experiments ----------------------------------------------------------------

    def dynamic_trial(self, max_pairs: int, trial: int) -> List[TrialRecord]:
        self.reset()
        records = [self._record(Experiment.DYNAMIC, None, self._initial_report(), trial)]
        if self.verify_invariants:
            self._check(0, 0)

        for k in range(max_pairs):
            new_tag = tag_name(k)
            for key, sensor in self.device.sensors.items():
                self.device.configure_sensor(
                    SensorConfig(key, sensor.value, sensor.device_tags + (new_tag,), self.conform_latency_ms)
                )
            new_key = pair_key(k)
            tags = tuple(tag_name(i) for i in range(k + 1))
            self.device.configure_sensor(SensorConfig(new_key, 0, tags, self.conform_latency_ms))

            sample = self._push_desired(new_key, k + 1, k + 1)
            records.append(self._record(Experiment.DYNAMIC, None, sample, trial))
            if self.verify_invariants:
                self._check(k + 1, (k + 1) ** 2)
        return records

    def static_trial(self, tags_per_pair: int, max_pairs: int, trial: int) -> List[TrialRecord]:
        self.reset()
        records = [self._record(Experiment.STATIC, tags_per_pair, self._initial_report(), trial)]
        tags = tuple(tag_name(i) for i in range(tags_per_pair))
        for k in range(max_pairs):
            new_key = pair_key(k)
            self.device.configure_sensor(SensorConfig(new_key, 0, tags, self.conform_latency_ms))
            sample = self._push_desired(new_key, k + 1, k + 1)
            records.append(self._record(Experiment.STATIC, tags_per_pair, sample, trial))
            if self.verify_invariants:
                self._check(k + 1, (k + 1) * tags_per_pair)
        return records


def _run_trials(
    experiment: Experiment,
    trials: int,
    run_trial: Callable[[int], List[TrialRecord]],
    **context,
) -> BenchmarkRun:
    run = BenchmarkRun(experiment=experiment, trials=trials)
    for trial in range(trials):
        try:
            run.records.extend(run_trial(trial))
        except DeviceTimeout as e:
            run.aborted += 1
            logger.warning("trial_aborted", experiment=experiment.value, trial=trial, step=e.step, reason=str(e), **context)
        if (trial + 1) % 50 == 0:
            logger.info("trials_progress", experiment=experiment.value, done=trial + 1, of=trials, **context)
    return run


def run_dynamic_scaling(
    max_pairs: int = DEFAULT_DYNAMIC_MAX_PAIRS,
    trials: int = DEFAULT_TRIALS,
    harness: Optional[BenchmarkHarness] = None,
) -> BenchmarkRun:
    if max_pairs < 0 or trials < 1:
        raise ValueError("max_pairs must be >= 0 and trials >= 1")
    harness = harness or BenchmarkHarness()
    logger.info("benchmark_started", experiment="dynamic", max_pairs=max_pairs, trials=trials)
    return _run_trials(Experiment.DYNAMIC, trials, lambda t: harness.dynamic_trial(max_pairs, t))


def run_static_scaling(
    tags_per_pair: Sequence[int] = (1, 3, 5),
    max_pairs: int = DEFAULT_STATIC_MAX_PAIRS,
    trials: int = DEFAULT_TRIALS,
    harness: Optional[BenchmarkHarness] = None,
) -> BenchmarkRun:
    if max_pairs < 0 or trials < 1 or not tags_per_pair or min(tags_per_pair) < 1:
        raise ValueError("max_pairs must be >= 0, trials >= 1 and every series needs >= 1 tag")
    harness = harness or BenchmarkHarness()
    logger.info("benchmark_started", experiment="static", series=list(tags_per_pair), max_pairs=max_pairs, trials=trials)
    combined = BenchmarkRun(experiment=Experiment.STATIC)
    for series in tags_per_pair:
        run = _run_trials(
            Experiment.STATIC,
            trials,
            lambda t, series=series: harness.static_trial(series, max_pairs, t),
            tags_per_pair=series,
        )
        combined.records.extend(run.records)
        combined.trials += run.trials
        combined.aborted += run.aborted
    return combined
