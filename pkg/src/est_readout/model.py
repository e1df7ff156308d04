"""Closed-form probability model of energy-selective-tunneling readout.

Times are in microseconds unless a name says otherwise; evolution times are in
nanoseconds and field differences are expressed as frequencies in MHz.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import constants

# GaAs effective g-factor; only its magnitude enters the frequency conversion.
G_FACTOR_GAAS = -0.44
MHZ_PER_MT = abs(G_FACTOR_GAAS) * constants.physical_constants["Bohr magneton"][0] / constants.h * 1e-3 / 1e6

GAUSS_GRID_POINTS = 201
GAUSS_GRID_SPAN = 5.0


def mt_to_mhz(delta_b_mt: float) -> float:
    """Convert a field difference in mT to the S-T0 precession frequency in MHz."""
    return delta_b_mt * MHZ_PER_MT


def mhz_to_mt(delta_b_mhz: float) -> float:
    return delta_b_mhz / MHZ_PER_MT


def _check_probability(value: float, name: str) -> float:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
    return float(value)


@dataclass(frozen=True)
class ReadoutConfig:
    """Timing inputs of one qubit's readout.

    Attributes
    ----------
    tau_out : float
        Mean tunnel-out dwell time of the triplet, us.
    tau_in : float
        Mean tunnel-in dwell time that reloads the singlet, us.
    t1 : float
        Triplet relaxation time at the readout point, us (``math.inf`` allowed).
    meas_window : float
        Measurement window length, us.
    sample_rate : float
        Digitizer rate of the demodulated signal, MHz.
    cds_rate : float
        Boxcar resampling rate, kHz.
    cds_gate_width : float
        Boxcar gate width, us.
    """

    tau_out: float
    tau_in: float
    t1: float
    meas_window: float
    sample_rate: float = 14.0
    cds_rate: float = 200.0
    cds_gate_width: float = 0.1

    def __post_init__(self):
        for name in ("tau_out", "tau_in", "t1", "meas_window", "sample_rate", "cds_rate", "cds_gate_width"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be strictly positive, got {value!r}")
        if self.meas_window < self.cds_gate_width:
            raise ValueError("meas_window must be at least cds_gate_width")
        if self.sample_rate * self.meas_window < 2:
            raise ValueError("measurement window must hold at least two samples")

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def n_samples(self) -> int:
        return int(round(self.meas_window * self.sample_rate))


@dataclass(frozen=True)
class ThermalParams:
    """Per-window thermal error probabilities.

    ``alpha1`` is the chance that a singlet tunnels out within a window,
    ``alpha2`` the chance that a reloaded singlet tunnels a second time and
    ``beta`` the chance that a reload lands in one of the three triplets.
    """

    alpha1: float = 0.0
    alpha2: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "beta"):
            _check_probability(getattr(self, name), name)

    @property
    def p2(self) -> float:
        """Total probability of a second tunnel-out after a first one."""
        return self.beta + (1.0 - self.beta) * self.alpha2


@dataclass(frozen=True)
class FieldParams:
    """Mean S-T0 precession frequency and its Gaussian spread, both MHz."""

    delta_b: float
    sigma: float = 0.0

    def __post_init__(self):
        if self.delta_b < 0 or self.sigma < 0:
            raise ValueError("delta_b and sigma must be non-negative")


@dataclass(frozen=True)
class DetectionFidelity:
    """Tunneling-detection errors at a discrimination threshold."""

    e_t: float
    e_n: float
    threshold: float = math.nan

    def __post_init__(self):
        _check_probability(self.e_t, "e_t")
        _check_probability(self.e_n, "e_n")

    @property
    def t_t(self) -> float:
        return 1.0 - self.e_t

    @property
    def t_n(self) -> float:
        return 1.0 - self.e_n

    @property
    def total_error(self) -> float:
        return self.e_t + self.e_n


def relaxation_survival(meas_window: float, t1: float, tau_out: float) -> float:
    """Probability that a triplet tunnels out before relaxing, inside the window.

    Evaluates the closed form of the ratio of the relaxation-weighted tunnel-out
    integral over ``[0, meas_window]`` to the unweighted integral over
    ``[0, inf)``.
    """
    if meas_window < 0 or t1 <= 0 or tau_out <= 0:
        raise ValueError("meas_window must be >= 0 and t1, tau_out > 0")
    rate = 1.0 / t1 + 1.0 / tau_out
    tau_eff = 1.0 / rate
    if math.isinf(meas_window):
        return tau_eff / tau_out
    return tau_eff / tau_out * -math.expm1(-meas_window / tau_eff)


def survival_fraction(cfg: ReadoutConfig) -> float:
    """Triplet survival fraction ``r`` for a readout configuration."""
    return relaxation_survival(cfg.meas_window, cfg.t1, cfg.tau_out)


def ideal_t0_probability(t, delta_b):
    """T0 population after free evolution ``t`` (ns) at precession ``delta_b`` (MHz)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("evolution time must be non-negative")
    return np.sin(np.pi * np.asarray(delta_b, dtype=float) * t * 1e-3) ** 2


def _branch_terms(f, r: float, th: ThermalParams):
    """Probabilities of at least one tunnel-out for the shot after/without a reload."""
    a1, beta = th.alpha1, th.beta
    # evolved singlet: T0 with prob f; T0 tunnels (r) or relaxes and false-tunnels
    fresh = f * r + (1.0 - f) * a1 + f * (1.0 - r) * a1
    # falsely loaded T0: rotates to S with prob f
    from_t0 = f * a1 + (1.0 - f) * r + (1.0 - f) * (1.0 - r) * a1
    # falsely loaded T+/T-: do not precess
    from_tpm = r + (1.0 - r) * a1
    reloaded = (1.0 - beta) * fresh + beta / 3.0 * from_t0 + 2.0 * beta / 3.0 * from_tpm
    return reloaded, fresh


def detection_prob_recursion(times, cfg: ReadoutConfig | float, th: ThermalParams, delta_b, initial: float = 1.0):
    """Shot-to-shot probability of at least one tunnel-out per window.

    Parameters
    ----------
    times : array_like
        Evolution times in ns, in the order they are swept (must be ascending).
    cfg : ReadoutConfig or float
        Readout configuration, or the survival fraction ``r`` directly.
    th : ThermalParams
    delta_b : float or array_like
        Precession frequency in MHz. An array evaluates every value at once and
        adds a leading axis to the result.
    initial : float
        Probability that the shot preceding the first one tunneled. The default
        of 1 treats the sweep as starting from a fresh reload.

    Returns
    -------
    ndarray
        ``P(t_j)`` with shape ``times.shape`` (or ``delta_b.shape + times.shape``).
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1:
        raise ValueError("times must be one-dimensional")
    if np.any(np.diff(times) < 0):
        raise ValueError("times must be sorted ascending")
    r = survival_fraction(cfg) if isinstance(cfg, ReadoutConfig) else float(cfg)
    b = np.asarray(delta_b, dtype=float)
    f = ideal_t0_probability(times, b[..., None])
    reloaded, fresh = _branch_terms(f, r, th)
    out = np.empty(np.broadcast_shapes(b.shape + (1,), times.shape))
    prev = np.full(b.shape, float(initial))
    for j in range(times.size):
        prev = prev * reloaded[..., j] + (1.0 - prev) * fresh[..., j]
        out[..., j] = prev
    return out


def expected_counts(p, th: ThermalParams, det: DetectionFidelity):
    """Mean number of counted tunnel-out events per window, not clipped to 1."""
    p = np.asarray(p, dtype=float)
    return p * (1.0 + th.p2) * det.t_t + (1.0 - p) * det.e_n


def gaussian_weights(delta_b: float, sigma: float, n_points: int = GAUSS_GRID_POINTS, span: float = GAUSS_GRID_SPAN):
    """Grid over +-``span`` sigma and normalized Gaussian weights on it."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return np.array([float(delta_b)]), np.array([1.0])
    z = np.linspace(-span, span, n_points)
    w = np.exp(-0.5 * z**2)
    return delta_b + sigma * z, w / w.sum()


def gaussian_average(curve: Callable, delta_b: float, sigma: float, times, n_points: int = GAUSS_GRID_POINTS):
    """Average ``curve(times, b)`` over a Gaussian spread of ``b``.

    ``curve`` must accept an array of ``b`` values of shape ``(n,)`` and return
    an array of shape ``(n, len(times))``. With ``sigma == 0`` the curve is
    evaluated at ``delta_b`` alone.
    """
    grid, weights = gaussian_weights(delta_b, sigma, n_points)
    values = np.asarray(curve(np.asarray(times, dtype=float), grid))
    return weights @ values


def larmor_curve(times, cfg: ReadoutConfig | float, th: ThermalParams, field: FieldParams, det: DetectionFidelity, initial: float = 1.0):
    """Gaussian-averaged mean count per shot along a swept evolution-time grid."""

    def curve(t, b):
        return expected_counts(detection_prob_recursion(t, cfg, th, b, initial), th, det)

    return gaussian_average(curve, field.delta_b, field.sigma, times)


def t2_star(sigma: float) -> float:
    """Inhomogeneous dephasing time in ns for a Gaussian spread ``sigma`` in MHz."""
    if sigma <= 0:
        return math.inf
    return 1e3 / (math.sqrt(2.0) * math.pi * sigma)
