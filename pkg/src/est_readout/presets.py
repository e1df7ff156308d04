"""Parameter sets of the two qubits (left: ``QL``, right: ``QR``)."""
from __future__ import annotations

from dataclasses import dataclass

from .dsp import CdsConfig
from .model import DetectionFidelity, FieldParams, ReadoutConfig, ThermalParams
from .tracegen import SignalModel


@dataclass(frozen=True)
class QubitPreset:
    name: str
    readout: ReadoutConfig
    thermal: ThermalParams
    field: FieldParams
    detection: DetectionFidelity
    signal: SignalModel
    cds: CdsConfig
    # reference infidelities and fidelity, for comparison only
    r_s: float
    r_t0: float
    f_meas: float
    visibility: float


QL = QubitPreset(
    name="QL",
    readout=ReadoutConfig(tau_out=16.0, tau_in=117.0, t1=337.0, meas_window=150.0,
                          sample_rate=14.0, cds_rate=200.0, cds_gate_width=0.1),
    thermal=ThermalParams(alpha1=0.081, alpha2=0.08, beta=0.12),
    field=FieldParams(delta_b=500.0, sigma=15.71),
    detection=DetectionFidelity(e_t=0.05, e_n=0.055),
    # noise calibrated with scripts/calibrate_noise.py
    signal=SignalModel(noise_sigma=0.315, lowpass_cutoff=1.0),
    cds=CdsConfig.tiled(rate=200.0, gate_width=0.1),
    r_s=0.128,
    r_t0=0.077,
    f_meas=0.90,
    visibility=0.81,
)

QR = QubitPreset(
    name="QR",
    readout=ReadoutConfig(tau_out=25.5, tau_in=130.5, t1=192.0, meas_window=200.0,
                          sample_rate=14.0, cds_rate=50.0, cds_gate_width=4.0),
    thermal=ThermalParams(alpha1=0.092, alpha2=0.089, beta=0.069),
    field=FieldParams(delta_b=400.0, sigma=15.73),
    detection=DetectionFidelity(e_t=0.19, e_n=0.092),
    # noise calibrated with scripts/calibrate_noise.py --qubit QR
    signal=SignalModel(noise_sigma=1.344, lowpass_cutoff=1.0),
    cds=CdsConfig.tiled(rate=50.0, gate_width=4.0),
    r_s=0.162,
    r_t0=0.232,
    f_meas=0.803,
    visibility=0.64,
)

PRESETS = {"QL": QL, "QR": QR}


def larmor_times(t_max: float = 10.0, n: int = 21):
    """Evolution-time grid in ns of the oscillation sweep."""
    return [t_max * k / (n - 1) for k in range(n)]
