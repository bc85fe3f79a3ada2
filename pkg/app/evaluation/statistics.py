"""
Summary statistics and CSV output for benchmark trials.

Each (experiment, tags_per_pair, pair_count) point is summarized by its mean
and a 99% confidence interval from Student's t with n-1 degrees of freedom.
"""

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
import structlog
from scipy import stats

logger = structlog.get_logger(__name__)

CSV_COLUMNS = ["experiment", "tags_per_pair", "pair_count", "mean_ms", "ci99_low_ms", "ci99_high_ms", "n"]
CONFIDENCE = 0.99
NS_PER_MS = 1_000_000


class Experiment(str, Enum):
    DYNAMIC = "dynamic"
    STATIC = "static"


@dataclass(frozen=True)
class TrialRecord:
    experiment: Experiment
    tags_per_pair: Optional[int]
    pair_count: int
    processing_time_ns: int
    trial_index: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "experiment", Experiment(self.experiment))
        if self.processing_time_ns < 0:
            raise ValueError("processing_time_ns cannot be negative")
        if self.pair_count < 0:
            raise ValueError("pair_count cannot be negative")


@dataclass(frozen=True)
class SummaryPoint:
    experiment: Experiment
    tags_per_pair: Optional[int]
    pair_count: int
    mean_ms: float
    ci99_low_ms: float
    ci99_high_ms: float
    n: int

    @property
    def ci_half_width_ms(self) -> float:
        return (self.ci99_high_ms - self.ci99_low_ms) / 2


def _point_key(experiment: Experiment, tags_per_pair: Optional[int], pair_count: int) -> Tuple[str, int, int]:
    return (experiment.value, -1 if tags_per_pair is None else tags_per_pair, pair_count)


def confidence_interval(samples_ms: np.ndarray, confidence: float = CONFIDENCE) -> Tuple[float, float, float]:
    """(mean, low, high) for at least two samples."""
    n = len(samples_ms)
    mean = float(np.mean(samples_ms))
    if np.all(samples_ms == samples_ms[0]):
        return mean, mean, mean
    sd = float(np.std(samples_ms, ddof=1))
    half = float(stats.t.ppf((1 + confidence) / 2, df=n - 1)) * sd / np.sqrt(n)
    return mean, mean - half, mean + half


def summarize(records: Iterable[TrialRecord]) -> List[SummaryPoint]:
    groups: Dict[Tuple[Experiment, Optional[int], int], List[int]] = {}
    for record in records:
        groups.setdefault((record.experiment, record.tags_per_pair, record.pair_count), []).append(
            record.processing_time_ns
        )

    points = []
    for (experiment, tags_per_pair, pair_count), times in sorted(groups.items(), key=lambda kv: _point_key(*kv[0])):
        if len(times) < 2:
            logger.warning(
                "summary_point_omitted",
                experiment=experiment.value,
                tags_per_pair=tags_per_pair,
                pair_count=pair_count,
                reason="fewer than 2 trials",
            )
            continue
        mean, low, high = confidence_interval(np.asarray(times, dtype=np.float64) / NS_PER_MS)
        points.append(SummaryPoint(experiment, tags_per_pair, pair_count, mean, low, high, len(times)))
    return points


def summaries_frame(summaries: Iterable[SummaryPoint]) -> pd.DataFrame:
    ordered = sorted(summaries, key=lambda p: _point_key(p.experiment, p.tags_per_pair, p.pair_count))
    frame = pd.DataFrame(
        [
            [p.experiment.value, p.tags_per_pair, p.pair_count, p.mean_ms, p.ci99_low_ms, p.ci99_high_ms, p.n]
            for p in ordered
        ],
        columns=CSV_COLUMNS,
    )
    return frame.astype({"tags_per_pair": "Int64", "pair_count": "int64", "n": "int64"})


def emit_csv(summaries: Iterable[SummaryPoint], path: Union[str, Path]) -> Path:
    """Write one row per summary point; dynamic rows leave tags_per_pair empty."""
    target = Path(path)
    if target.parent and not target.parent.exists():
        target.parent.mkdir(parents=True, exist_ok=True)
    frame = summaries_frame(summaries)
    frame.to_csv(target, index=False)
    logger.info("summary_csv_written", path=str(target), rows=len(frame))
    return target


def read_csv(path: Union[str, Path]) -> List[SummaryPoint]:
    frame = pd.read_csv(
        path,
        dtype={"experiment": str, "tags_per_pair": "Int64", "pair_count": "int64", "n": "int64"},
        float_precision="round_trip",
    )
    missing = [c for c in CSV_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"CSV {path} lacks columns {missing}")
    return [
        SummaryPoint(
            experiment=Experiment(row.experiment),
            tags_per_pair=None if pd.isna(row.tags_per_pair) else int(row.tags_per_pair),
            pair_count=int(row.pair_count),
            mean_ms=float(row.mean_ms),
            ci99_low_ms=float(row.ci99_low_ms),
            ci99_high_ms=float(row.ci99_high_ms),
            n=int(row.n),
        )
        for row in frame.itertuples(index=False)
    ]
