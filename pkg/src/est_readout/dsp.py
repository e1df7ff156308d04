"""Detection electronics: boxcar CDS resampling, peak counting and thresholds."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from .model import DetectionFidelity
from .tracegen import Trace

HIST_BINS = 200


class DetectionError(ValueError):
    pass


@dataclass(frozen=True)
class CdsConfig:
    """Boxcar settings: resampling rate (kHz), gate width and gate-to-baseline spacing (us).

    The gate window opens first and the baseline window follows
    ``gate_baseline_separation`` later, so a falling edge between them gives a
    positive output.
    """

    rate: float
    gate_width: float
    gate_baseline_separation: float

    def __post_init__(self):
        period = 1e3 / self.rate
        if not 0 < self.gate_width < period:
            raise ValueError("gate_width must be positive and shorter than one CDS period")
        if not 0 < self.gate_baseline_separation <= period:
            raise ValueError("gate_baseline_separation must lie in (0, 1/rate]")

    @property
    def period(self) -> float:
        return 1e3 / self.rate

    @classmethod
    def tiled(cls, rate: float, gate_width: float) -> "CdsConfig":
        """Baseline window one full period after the gate."""
        return cls(rate, gate_width, 1e3 / rate)


@dataclass(frozen=True)
class CdsLayout:
    gate_idx: np.ndarray  # (K, w) sample indices
    base_idx: np.ndarray

    @property
    def n_out(self) -> int:
        return self.gate_idx.shape[0]

    @property
    def sample_indices(self) -> np.ndarray:
        return np.union1d(self.gate_idx.ravel(), self.base_idx.ravel())

    def event_times(self, dt: float) -> np.ndarray:
        """Nominal time of each output sample: the start of its baseline window."""
        return self.base_idx[:, 0] * dt


def cds_layout(cds: CdsConfig, sample_rate: float, n_samples: int) -> CdsLayout:
    period = int(round(sample_rate * cds.period))
    width = max(1, int(round(sample_rate * cds.gate_width)))
    sep = int(round(sample_rate * cds.gate_baseline_separation))
    n_out = (n_samples - sep - width) // period + 1
    if n_out < 1 or period < 1:
        raise DetectionError("trace shorter than one CDS period")
    starts = np.arange(n_out) * period
    gate = starts[:, None] + np.arange(width)[None, :]
    return CdsLayout(gate_idx=gate, base_idx=gate + sep)


def cds_filter(trace, cds: CdsConfig, sample_rate: float | None = None) -> np.ndarray:
    """Pseudo-derivative: mean over each gate window minus the following baseline window.

    ``trace`` may be a :class:`Trace` or an array whose last axis is time; in
    the latter case ``sample_rate`` (MHz) is required.
    """
    if isinstance(trace, Trace):
        x, sample_rate = trace.samples, 1.0 / trace.dt
    else:
        x = np.asarray(trace, dtype=float)
        if sample_rate is None:
            raise ValueError("sample_rate is required for bare arrays")
    layout = cds_layout(cds, sample_rate, x.shape[-1])
    return cds_apply(x, layout)


def cds_apply(x: np.ndarray, layout: CdsLayout) -> np.ndarray:
    return x[..., layout.gate_idx].mean(axis=-1) - x[..., layout.base_idx].mean(axis=-1)


def cds_from_sparse(values: np.ndarray, indices: np.ndarray, layout: CdsLayout) -> np.ndarray:
    """CDS output from samples known only at ``indices`` (as produced by ``render_sparse``)."""
    g = np.searchsorted(indices, layout.gate_idx)
    b = np.searchsorted(indices, layout.base_idx)
    return values[..., g].mean(axis=-1) - values[..., b].mean(axis=-1)


def _count_runs(mask: np.ndarray) -> np.ndarray:
    starts = mask.copy()
    starts[..., 1:] &= ~mask[..., :-1]
    return starts.sum(axis=-1)


def count_events_cds(resampled, threshold_pos: float, threshold_neg: float | None = None):
    """Count tunnel-out (positive) and tunnel-in (negative) peaks.

    A run of consecutive samples at or beyond a threshold is one event.
    ``threshold_neg`` is the (negative) level for tunnel-in peaks and defaults
    to ``-threshold_pos``. Works along the last axis of a batch as well.
    """
    if threshold_neg is None:
        threshold_neg = -threshold_pos
    if not (np.isfinite(threshold_pos) and np.isfinite(threshold_neg)):
        raise ValueError("thresholds must be finite")
    x = np.asarray(resampled, dtype=float)
    n_out = _count_runs(x >= threshold_pos)
    n_in = _count_runs(x <= threshold_neg)
    if x.ndim == 1:
        return int(n_out), int(n_in)
    return n_out, n_in


def moving_average(x: np.ndarray, width: int) -> np.ndarray:
    c = np.cumsum(x, axis=-1)
    c = np.concatenate([np.zeros(x.shape[:-1] + (1,)), c], axis=-1)
    return (c[..., width:] - c[..., :-width]) / width


def direct_peak_extract(trace, integration: float = 1.0, sample_rate: float | None = None):
    """Minimum of the trace after a moving average over ``integration`` us."""
    if isinstance(trace, Trace):
        x, sample_rate = trace.samples, 1.0 / trace.dt
    else:
        x = np.asarray(trace, dtype=float)
        if sample_rate is None:
            raise ValueError("sample_rate is required for bare arrays")
    if x.shape[-1] == 0:
        raise DetectionError("empty trace")
    width = min(max(1, int(round(integration * sample_rate))), x.shape[-1])
    return moving_average(x, width).min(axis=-1)


def integrated_samples(x: np.ndarray, sample_rate: float, integration: float = 1.0) -> np.ndarray:
    """Non-overlapping ``integration``-us means of each trace, flattened."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    width = max(1, int(round(integration * sample_rate)))
    n = x.shape[-1] // width
    return x[:, : n * width].reshape(x.shape[0], n, width).mean(axis=-1).ravel()


@dataclass(frozen=True)
class PeakHistogram:
    """Per-trace peak values of the excited and ground ideal ensembles, binned.

    ``event_above`` is True when a tunneling event pushes the value up (CDS
    peaks) and False when it pulls it down (direct minimum).
    """

    bin_edges: np.ndarray
    counts_excited: np.ndarray
    counts_ground: np.ndarray
    event_above: bool = True

    def __post_init__(self):
        n = len(self.bin_edges) - 1
        if len(self.counts_excited) != n or len(self.counts_ground) != n:
            raise ValueError("counts must have len(bin_edges) - 1 entries")
        if np.any(self.counts_excited < 0) or np.any(self.counts_ground < 0):
            raise ValueError("counts must be non-negative")

    def merge(self, other: "PeakHistogram") -> "PeakHistogram":
        if not np.array_equal(self.bin_edges, other.bin_edges) or self.event_above != other.event_above:
            raise ValueError("histograms are not compatible")
        return PeakHistogram(self.bin_edges, self.counts_excited + other.counts_excited,
                             self.counts_ground + other.counts_ground, self.event_above)


def _bin(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(edges, values, side="right") - 1
    return np.bincount(idx, minlength=len(edges) - 1)[: len(edges) - 1]


def histogram_edges(values, bins: int = HIST_BINS) -> np.ndarray:
    lo, hi = float(np.min(values)), float(np.max(values))
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    # top edge strictly above the maximum so every value falls inside a bin
    edges[-1] = np.nextafter(hi, np.inf)
    return edges


def build_histogram(excited, ground, bins: int = HIST_BINS, event_above: bool = True, edges=None) -> PeakHistogram:
    excited = np.asarray(excited, dtype=float).ravel()
    ground = np.asarray(ground, dtype=float).ravel()
    if edges is None:
        edges = histogram_edges(np.concatenate([excited, ground]), bins)
    return PeakHistogram(np.asarray(edges), _bin(excited, edges), _bin(ground, edges), event_above)


def optimize_threshold(hist: PeakHistogram) -> DetectionFidelity:
    """Threshold at a bin edge minimizing ``E_T + E_N``; ties go to the smaller ``E_N``.

    For ``event_above`` histograms a value at or above the threshold reads as a
    tunneling event, otherwise a value strictly below it does.
    """
    n_exc, n_gnd = hist.counts_excited.sum(), hist.counts_ground.sum()
    if n_exc == 0 or n_gnd == 0:
        raise DetectionError("both classes need at least one entry")
    # mass at or above each edge
    above_exc = np.concatenate([np.cumsum(hist.counts_excited[::-1])[::-1], [0]])
    above_gnd = np.concatenate([np.cumsum(hist.counts_ground[::-1])[::-1], [0]])
    if hist.event_above:
        e_t = 1.0 - above_exc / n_exc
        e_n = above_gnd / n_gnd
    else:
        e_t = above_exc / n_exc
        e_n = 1.0 - above_gnd / n_gnd
    total = e_t + e_n
    best = np.flatnonzero(np.isclose(total, total.min(), rtol=0, atol=1e-12))
    k = best[np.argmin(e_n[best])]
    return DetectionFidelity(e_t=float(e_t[k]), e_n=float(e_n[k]), threshold=float(hist.bin_edges[k]))


def classify(values, threshold: float, event_above: bool = True) -> np.ndarray:
    values = np.asarray(values)
    return values >= threshold if event_above else values < threshold


def _exp_decay(t, n0, tau):
    return n0 * np.exp(-t / tau)


def tunnel_time_histogram(times, bin_width: float, t_max: float | None = None, min_events: int = 100):
    """Histogram of first tunnel-out times with an exponential fit.

    Returns ``(bin_centers, counts, tau, tau_err)``.
    """
    times = np.asarray(times, dtype=float)
    times = times[np.isfinite(times)]
    if times.size == 0:
        raise DetectionError("no tunnel-out events found")
    if times.size < min_events:
        raise DetectionError(f"need at least {min_events} events, got {times.size}")
    if t_max is None:
        t_max = float(times.max())
    edges = np.arange(0.0, t_max + bin_width, bin_width)
    counts, _ = np.histogram(times, edges)
    centers = 0.5 * (edges[1:] + edges[:-1])
    keep = counts > 0
    tau0 = max(float(np.mean(times)), bin_width)
    popt, pcov = curve_fit(_exp_decay, centers[keep], counts[keep], p0=(counts.max(), tau0),
                           sigma=np.sqrt(counts[keep]), absolute_sigma=True, maxfev=10000)
    return centers, counts, float(popt[1]), float(np.sqrt(pcov[1, 1]))


def first_out_times(traces) -> np.ndarray:
    """Ground-truth time of the first tunnel-out of each trace; NaN when none."""
    out = np.full(len(traces), np.nan)
    for i, tr in enumerate(traces):
        if tr.meta is not None and tr.meta.out_times:
            out[i] = tr.meta.out_times[0]
    return out


def detected_first_out_times(resampled: np.ndarray, threshold: float, layout: CdsLayout, dt: float) -> np.ndarray:
    """Time of the first CDS sample at or above ``threshold`` in each row; NaN when none."""
    resampled = np.atleast_2d(resampled)
    hit = resampled >= threshold
    first = np.argmax(hit, axis=-1)
    times = layout.event_times(dt)[first]
    return np.where(hit.any(axis=-1), times, np.nan)
