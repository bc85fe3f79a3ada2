"""
Shadow processing monitor.

Times the three stages the edge service runs for every reported message:

- update:     decode, tag enrichment and the base shadow merge
- delta:      publishing the base shadow's accepted / delta / documents events
- parse_tags: partitioning into tag sub-documents, twin merges and their events

Only work between `stage()` entry and exit is counted, on the monotonic
nanosecond clock, so bus hand-off and device time stay outside the sample.
"""

import json
import time
from collections import deque
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Deque, Dict, Iterator, List, Optional

import structlog

logger = structlog.get_logger(__name__)

STAGES = ("update", "delta", "parse_tags")


@dataclass
class ProcessingSample:
    device_id: str
    started_at: int
    stages_ns: Dict[str, int] = field(default_factory=dict)
    pair_count: int = 0
    tag_attachments: int = 0
    twins_touched: int = 0
    reported: bool = False
    rejected: bool = False

    @property
    def total_ns(self) -> int:
        return sum(self.stages_ns.values())

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter_ns()
        try:
            yield
        finally:
            self.stages_ns[name] = self.stages_ns.get(name, 0) + time.perf_counter_ns() - start


class ProcessingMonitor:
    """Keeps recent processing samples and per-stage statistics."""

    def __init__(self, history: int = 10_000):
        self._samples: Deque[ProcessingSample] = deque(maxlen=history)
        self._listeners: List[Callable[[ProcessingSample], None]] = []
        self.total_messages = 0
        self.total_rejected = 0

    def begin(self, device_id: str) -> ProcessingSample:
        return ProcessingSample(device_id=device_id, started_at=int(time.time() * 1000))

    def record(self, sample: ProcessingSample) -> None:
        self._samples.append(sample)
        self.total_messages += 1
        if sample.rejected:
            self.total_rejected += 1
        for listener in self._listeners:
            listener(sample)
        logger.debug(
            "shadow_processed",
            device=sample.device_id,
            pairs=sample.pair_count,
            attachments=sample.tag_attachments,
            total_us=sample.total_ns // 1000,
        )

    def add_listener(self, listener: Callable[[ProcessingSample], None]) -> None:
        self._listeners.append(listener)

    def remove_listener(self, listener: Callable[[ProcessingSample], None]) -> None:
        if listener in self._listeners:
            self._listeners.remove(listener)

    @property
    def last(self) -> Optional[ProcessingSample]:
        return self._samples[-1] if self._samples else None

    def samples(self, device_id: Optional[str] = None) -> List[ProcessingSample]:
        if device_id is None:
            return list(self._samples)
        return [s for s in self._samples if s.device_id == device_id]

    def clear(self) -> None:
        self._samples.clear()

    def summary(self) -> Dict[str, object]:
        """Average time per stage (microseconds) over the retained samples."""
        per_stage: Dict[str, List[int]] = {}
        for sample in self._samples:
            for name, ns in sample.stages_ns.items():
                per_stage.setdefault(name, []).append(ns)
        return {
            "messages": self.total_messages,
            "rejected": self.total_rejected,
            "retained_samples": len(self._samples),
            "avg_stage_us": {name: sum(v) / len(v) / 1000.0 for name, v in per_stage.items()},
            "avg_total_us": (
                sum(s.total_ns for s in self._samples) / len(self._samples) / 1000.0 if self._samples else 0.0
            ),
        }

    def dump(self, path: str) -> str:
        """Write retained samples and the summary as JSON."""
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w") as f:
            json.dump({"summary": self.summary(), "samples": [asdict(s) for s in self._samples]}, f, indent=2)
        logger.info("processing_log_saved", path=str(target), samples=len(self._samples))
        return str(target)
