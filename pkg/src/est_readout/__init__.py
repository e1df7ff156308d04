"""Simulation and estimation toolkit for energy-selective-tunneling single-shot readout."""

from .dsp import CdsConfig, PeakHistogram
from .model import DetectionFidelity, FieldParams, ReadoutConfig, ThermalParams
from .tracegen import ShotRecord, SignalModel, Trace

__version__ = "0.1.0"

__all__ = [
    "CdsConfig",
    "DetectionFidelity",
    "FieldParams",
    "PeakHistogram",
    "ReadoutConfig",
    "ShotRecord",
    "SignalModel",
    "ThermalParams",
    "Trace",
]
