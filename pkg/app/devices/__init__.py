"""Simulated devices for tests, demos and benchmarks"""
from .simulator import DeviceSpec, SensorConfig, SimulatedDevice, load_devices, parse_devices

__all__ = ["DeviceSpec", "SensorConfig", "SimulatedDevice", "load_devices", "parse_devices"]
