"""Tag-scaling benchmarks and their statistics"""
from .benchmark import BenchmarkHarness, BenchmarkRun, run_dynamic_scaling, run_static_scaling
from .statistics import (
    CSV_COLUMNS,
    Experiment,
    SummaryPoint,
    TrialRecord,
    confidence_interval,
    emit_csv,
    read_csv,
    summarize,
)

__all__ = [
    "CSV_COLUMNS",
    "BenchmarkHarness",
    "BenchmarkRun",
    "Experiment",
    "SummaryPoint",
    "TrialRecord",
    "confidence_interval",
    "emit_csv",
    "read_csv",
    "run_dynamic_scaling",
    "run_static_scaling",
    "summarize",
]
