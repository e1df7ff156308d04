"""Measurement infidelities of S and T0, total fidelity and the detection-scheme comparison."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from . import pipeline
from .dsp import CdsConfig
from .model import DetectionFidelity, ReadoutConfig, ThermalParams, survival_fraction
from .tracegen import SignalModel


@dataclass(frozen=True)
class FidelityReport:
    r_s: float
    r_t0: float
    f_meas: float
    visibility: float
    scheme: str = "cds"
    detection: DetectionFidelity | None = None

    def as_dict(self) -> dict:
        d = {"scheme": self.scheme, "r_s": self.r_s, "r_t0": self.r_t0, "f_meas": self.f_meas,
             "visibility": self.visibility}
        if self.detection is not None:
            d.update(e_t=self.detection.e_t, e_n=self.detection.e_n, threshold=self.detection.threshold)
        return d


def singlet_infidelity(th: ThermalParams, det: DetectionFidelity) -> float:
    """Probability that a prepared singlet is read as a triplet."""
    a1, p2 = th.alpha1, th.p2
    e_t, e_n = det.e_t, det.e_n
    return ((1 - a1) * e_n + a1 * (1 - e_t) + a1 * e_t * e_n
            + a1 * p2 * e_t * (1 - e_t) + a1 * p2 * e_t**2 * e_n)


def triplet_infidelity(r: float, r_s: float, th: ThermalParams, det: DetectionFidelity) -> float:
    """Probability that a prepared T0 is read as a singlet.

    A relaxed T0 (probability ``1 - r``) behaves as a singlet; one that tunnels
    is lost when its peak is missed and no other count makes up for it.
    """
    p2 = th.p2
    e_t, e_n = det.e_t, det.e_n
    return (1 - r) * (1 - r_s) + r * e_t * (1 - p2) * (1 - e_n) + r * e_t**2 * p2


def total_fidelity(r_s: float, r_t0: float, scheme: str = "cds", detection: DetectionFidelity | None = None) -> FidelityReport:
    for name, v in (("r_s", r_s), ("r_t0", r_t0)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1]")
    return FidelityReport(r_s=r_s, r_t0=r_t0, f_meas=1.0 - 0.5 * (r_s + r_t0), visibility=1.0 - r_s - r_t0,
                          scheme=scheme, detection=detection)


def fidelity_report(cfg: ReadoutConfig | float, th: ThermalParams, det: DetectionFidelity, scheme: str = "cds") -> FidelityReport:
    """Report from the readout timing (or the survival fraction), thermal errors and detection errors."""
    r = survival_fraction(cfg) if isinstance(cfg, ReadoutConfig) else float(cfg)
    r_s = singlet_infidelity(th, det)
    return total_fidelity(r_s, triplet_infidelity(r, r_s, th, det), scheme, det)


def compare_detection_schemes(cfg: ReadoutConfig, th: ThermalParams, sig: SignalModel, cds: CdsConfig,
                              n_traces: int = 15000, seed: int = 0) -> tuple[FidelityReport, FidelityReport]:
    """CDS counting and direct peak detection evaluated on the same ideal ensembles.

    The two detection-error estimates run in separate threads; both use the
    same seed so that they see identical ground-truth events.
    """

    def run(scheme):
        det, _ = pipeline.detection_fidelity(scheme, n_traces, cfg, sig, cds, seed)
        return fidelity_report(cfg, th, det, scheme)

    with ThreadPoolExecutor(max_workers=2) as pool:
        cds_report, direct_report = pool.map(run, ("cds", "direct_peak"))
    return cds_report, direct_report
