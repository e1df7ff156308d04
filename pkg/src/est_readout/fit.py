"""Parameter estimation: Larmor-curve fitting, the iterative calibration loop and Fermi-Dirac fits."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import constants
from scipy.optimize import curve_fit, minimize, minimize_scalar

from . import dsp, pipeline
from .dsp import CdsConfig
from .fidelity import fidelity_report
from .model import (DetectionFidelity, FieldParams, ReadoutConfig, ThermalParams, larmor_curve,
                    survival_fraction, t2_star)
from .pipeline import LarmorDataset
from .tracegen import SignalModel

SIGMA_MAX = 200.0  # MHz, upper bound of the fitted spread


class FitError(RuntimeError):
    """Raised when an optimizer fails; ``best`` carries the best iterate found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class CalibrationError(RuntimeError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


@dataclass(frozen=True)
class LarmorFit:
    alpha1: float
    alpha2: float
    beta: float
    sigma: float
    delta_b: float
    residual: float = math.nan

    @property
    def t2_star(self) -> float:
        return t2_star(self.sigma)

    @property
    def thermal(self) -> ThermalParams:
        return ThermalParams(self.alpha1, self.alpha2, self.beta)

    @property
    def field(self) -> FieldParams:
        return FieldParams(self.delta_b, self.sigma)

    def as_vector(self) -> np.ndarray:
        return np.array([self.alpha1, self.alpha2, self.beta, self.sigma, self.delta_b])

    @classmethod
    def from_vector(cls, x, residual=math.nan) -> "LarmorFit":
        return cls(*(float(v) for v in x), residual=float(residual))

    def as_dict(self) -> dict:
        return {"alpha1": self.alpha1, "alpha2": self.alpha2, "beta": self.beta, "sigma": self.sigma,
                "delta_b": self.delta_b, "residual": self.residual, "t2_star": self.t2_star}


def _bounds():
    return [(0.0, 1.0), (0.0, 1.0), (0.0, 1.0), (0.0, SIGMA_MAX), (0.0, None)]


def _model(x, times, r, det):
    a1, a2, b, s, db = x
    return larmor_curve(times, r, ThermalParams(a1, a2, b), FieldParams(db, s), det)


def _clip(x):
    lo = np.array([0, 0, 0, 0, 0.0])
    hi = np.array([1, 1, 1, SIGMA_MAX, np.inf])
    return np.clip(x, lo, hi)


def fft_frequency(times, values, pad: int = 64) -> float:
    """Dominant oscillation frequency (MHz) of samples on a uniform ns grid, from a zero-padded DFT."""
    times = np.asarray(times, dtype=float)
    step = np.diff(times)
    if times.size < 3 or not np.allclose(step, step[0]):
        raise ValueError("a uniform grid of at least three points is required")
    y = np.asarray(values, dtype=float) - np.mean(values)
    n = pad * times.size
    amp = np.abs(np.fft.rfft(y, n))
    freqs = np.fft.rfftfreq(n, step[0]) * 1e3
    amp[0] = 0.0
    return float(freqs[np.argmax(amp)])


def start_points(data: LarmorDataset, init: LarmorFit | None = None) -> list[np.ndarray]:
    """Deterministic multi-start grid plus ``init`` when given."""
    db0 = fft_frequency(data.evolve_times, data.mean_counts)
    starts = [np.array([0.05, a2, b, s, db0])
              for b, s, a2 in itertools.product((0.0, 0.1), (5.0, 20.0), (0.0, 0.1))]
    if init is not None:
        starts.append(_clip(init.as_vector()))
    return starts


def _simplex(x0, db_scale):
    steps = np.array([0.05, 0.05, 0.05, 5.0, 0.01 * max(db_scale, 1.0)])
    simplex = [x0]
    for k in range(5):
        v = x0.copy()
        v[k] = v[k] + steps[k] if v[k] + steps[k] <= (_bounds()[k][1] or np.inf) else v[k] - steps[k]
        simplex.append(v)
    return np.array(simplex)


def fit_larmor(data: LarmorDataset, cfg: ReadoutConfig | float, det: DetectionFidelity,
               init: LarmorFit | None = None, maxiter: int = 4000, return_starts: bool = False):
    """Least-squares fit of the Gaussian-averaged count curve.

    Each start runs a bounded Nelder-Mead search; the best result is polished
    by one more search restarted from it. Raises :class:`FitError` when no
    start converges within ``maxiter``.
    """
    r = survival_fraction(cfg) if isinstance(cfg, ReadoutConfig) else float(cfg)
    times, y = data.evolve_times, data.mean_counts
    if times.size < 5:
        raise ValueError("at least five evolution times are required")

    def objective(x):
        return float(np.sum((_model(x, times, r, det) - y) ** 2))

    starts = start_points(data, init)
    results = []
    for x0 in starts:
        res = minimize(objective, x0, method="Nelder-Mead", bounds=_bounds(),
                       options={"maxiter": maxiter, "xatol": 1e-10, "fatol": 1e-14,
                                "initial_simplex": _simplex(x0, x0[4])})
        results.append(res)
    best = min(results, key=lambda res: res.fun)
    polish = minimize(objective, best.x, method="Nelder-Mead", bounds=_bounds(),
                      options={"maxiter": maxiter, "xatol": 1e-12, "fatol": 1e-16,
                               "initial_simplex": _simplex(best.x, best.x[4])})
    if polish.fun <= best.fun:
        best = polish
    fit = LarmorFit.from_vector(_clip(best.x), objective(_clip(best.x)))
    if not any(res.success for res in results + [polish]):
        raise FitError("Larmor fit did not converge", best=fit)
    if return_starts:
        return fit, [objective(x0) for x0 in starts]
    return fit


def fitted_curve(fit: LarmorFit, times, cfg: ReadoutConfig | float, det: DetectionFidelity) -> np.ndarray:
    r = survival_fraction(cfg) if isinstance(cfg, ReadoutConfig) else float(cfg)
    return _model(fit.as_vector(), np.asarray(times, dtype=float), r, det)


def dense_curve(fit: LarmorFit, times, cfg, det: DetectionFidelity, oversample: int = 20):
    """The fitted curve between the measured points.

    The recursion only defines the count at the swept times, so every
    intermediate point is obtained by sweeping a grid shifted by a fraction of
    the step. Returns ``(t, counts)`` sorted by time.
    """
    times = np.asarray(times, dtype=float)
    step = float(times[1] - times[0])
    ts, ys = [], []
    for k in range(oversample):
        shifted = times + step * k / oversample
        ts.append(shifted)
        ys.append(fitted_curve(fit, shifted, cfg, det))
    t, y = np.concatenate(ts), np.concatenate(ys)
    order = np.argsort(t, kind="stable")
    return t[order], y[order]


def visibility(fit: LarmorFit, times, cfg, det: DetectionFidelity) -> float:
    """Initial oscillation amplitude: first-period maximum of the fitted curve minus its starting value."""
    t, y = dense_curve(fit, times, cfg, det)
    period = 1e3 / fit.delta_b if fit.delta_b > 0 else np.inf
    first = t <= t[0] + period
    return float(y[first].max() - y[0])


# ---------------------------------------------------------------------------
# iterative calibration


@dataclass
class CalibrationStep:
    iteration: int
    fit: LarmorFit
    detection: DetectionFidelity
    noise_sigma: float
    f_meas: float


@dataclass
class CalibrationResult:
    fit: LarmorFit
    detection: DetectionFidelity
    noise_sigma: float
    history: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.history)


def histogram_distance(a: np.ndarray, b: np.ndarray, edges: np.ndarray) -> float:
    """L2 distance between two normalized histograms on common ``edges``."""
    ha, _ = np.histogram(a, edges, density=True)
    hb, _ = np.histogram(b, edges, density=True)
    return float(np.sqrt(np.sum((ha - hb) ** 2 * np.diff(edges))))


def match_noise(measured: np.ndarray, cfg: ReadoutConfig, th: ThermalParams, fld: FieldParams, sig: SignalModel,
                n_traces: int = 1000, seed: int = 0, bounds=(1e-3, 5.0), bins: int = 100) -> float:
    """Noise amplitude whose simulated rf histogram is closest to ``measured``.

    Every trial uses the same seed so the objective changes smoothly with the
    noise amplitude alone.
    """
    edges = np.linspace(np.min(measured), np.max(measured), bins + 1)

    def objective(s):
        sim = pipeline.rf_histogram_samples(n_traces, cfg, th, fld, replace(sig, noise_sigma=float(s)), seed)
        return histogram_distance(sim, measured, edges)

    res = minimize_scalar(objective, bounds=bounds, method="bounded", options={"xatol": 1e-3})
    return float(res.x)


def calibrate_iteratively(data: LarmorDataset, cfg: ReadoutConfig, sig: SignalModel, init: LarmorFit,
                          rf_samples: np.ndarray, cds: CdsConfig, scheme: str = "cds", n_ideal: int = 15000,
                          n_rf: int = 1000, seed: int = 0, tol: float = 1e-3, max_iter: int = 20,
                          det: DetectionFidelity | None = None) -> CalibrationResult:
    """Alternate between the Larmor fit and the detection-error estimate.

    One iteration: fit the count curve with the current detection errors, match
    the rf histogram to find the noise amplitude, recompute the detection
    errors from ideal traces at that noise, then refit. Stops when the
    measurement fidelity changes by less than ``tol``.
    """
    if det is None:
        det, _ = pipeline.detection_fidelity(scheme, n_ideal, cfg, sig, cds, seed)
    fit = fit_larmor(data, cfg, det, init)
    noise = sig.noise_sigma
    history: list[CalibrationStep] = []
    f_prev = fidelity_report(cfg, fit.thermal, det, scheme).f_meas
    for it in range(1, max_iter + 1):
        noise = match_noise(rf_samples, cfg, fit.thermal, fit.field, sig, n_rf, seed)
        det, _ = pipeline.detection_fidelity(scheme, n_ideal, cfg, replace(sig, noise_sigma=noise), cds, seed)
        fit = fit_larmor(data, cfg, det, fit)
        f_now = fidelity_report(cfg, fit.thermal, det, scheme).f_meas
        history.append(CalibrationStep(it, fit, det, noise, f_now))
        if abs(f_now - f_prev) < tol:
            return CalibrationResult(fit, det, noise, history)
        f_prev = f_now
    raise CalibrationError(f"no convergence after {max_iter} iterations", history)


# ---------------------------------------------------------------------------
# Fermi-Dirac derivative fits

K_B_EV = constants.k / constants.e  # eV per K
H_EV = constants.h / constants.e  # eV s


@dataclass(frozen=True)
class ThermalFitParams:
    a_offset: float
    amplitude: float
    lever_arm: float
    v_offset: float
    temperature_or_coupling: float  # broadening energy in eV
    mode: str = "temperature"

    def __post_init__(self):
        if not self.temperature_or_coupling > 0:
            raise ValueError("temperature_or_coupling must be positive")

    @property
    def temperature_mk(self) -> float:
        return self.temperature_or_coupling / K_B_EV * 1e3

    @property
    def coupling_ghz(self) -> float:
        """``2 t_c / h`` in GHz."""
        return self.temperature_or_coupling / H_EV * 1e-9


def fermi_dirac_derivative(v, a_offset, amplitude, v_offset, width, lever_arm):
    x = lever_arm * (np.asarray(v, dtype=float) - v_offset) / width
    # e^x / (1 + e^x)^2 written symmetrically to avoid overflow
    return a_offset - amplitude * lever_arm / width * 0.25 / np.cosh(0.5 * x) ** 2


_FWHM_X = 4.0 * math.acosh(math.sqrt(2.0))


def fit_fermi_dirac(v, y, mode: str = "temperature", lever_arm: float = 0.035) -> ThermalFitParams:
    """Fit the derivative of a Fermi-Dirac step to a transition-line sweep.

    The broadening ``width`` is reported as ``k_B T_e`` in ``temperature``
    mode and as ``2 t_c`` in ``coupling`` mode, both in eV.
    """
    if mode not in ("temperature", "coupling"):
        raise ValueError("mode must be 'temperature' or 'coupling'")
    v = np.asarray(v, dtype=float)
    y = np.asarray(y, dtype=float)
    order = np.argsort(v)
    v, y = v[order], y[order]
    edge = max(3, v.size // 20)
    a0 = float(np.median(np.concatenate([y[:edge], y[-edge:]])))
    dev = y - a0
    k = int(np.argmax(np.abs(dev)))
    if k < edge or k >= v.size - edge:
        raise FitError("peak not bracketed")
    height = dev[k]
    half = np.abs(dev) >= 0.5 * abs(height)
    fwhm = max(float(v[half].max() - v[half].min()), float(np.min(np.diff(v))))
    w0 = lever_arm * fwhm / _FWHM_X
    amp0 = -4.0 * w0 * height / lever_arm

    def f(vv, a_off, amp, v0, w):
        return fermi_dirac_derivative(vv, a_off, amp, v0, w, lever_arm)

    try:
        popt, _ = curve_fit(f, v, y, p0=(a0, amp0, v[k], w0), maxfev=20000)
    except RuntimeError as exc:
        raise FitError(f"Fermi-Dirac fit failed: {exc}") from exc
    a_off, amp, v0, w = popt
    # the model is even in the width; report its magnitude
    if w < 0:
        w, amp = -w, -amp
    return ThermalFitParams(float(a_off), float(amp), lever_arm, float(v0), float(w), mode)
