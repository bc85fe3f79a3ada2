"""Monitoring module initialization"""
from .processing_monitor import STAGES, ProcessingMonitor, ProcessingSample

__all__ = ["STAGES", "ProcessingMonitor", "ProcessingSample"]
