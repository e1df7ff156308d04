"""Monte-Carlo experiments built from the trace generator and the detection chain."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsp
from .dsp import CdsConfig, PeakHistogram
from .model import DetectionFidelity, FieldParams, ReadoutConfig, ThermalParams
from .tracegen import (Prepared, SignalModel, block_rng, block_sizes, render_sparse, render_traces,
                       sample_batch, sweep_block)

SCHEMES = ("cds", "direct_peak")
IDEAL = ThermalParams()


@dataclass
class LarmorDataset:
    """Mean counts per shot along the swept evolution times (ns)."""

    evolve_times: np.ndarray
    mean_counts: np.ndarray
    n_shots_per_point: int
    stderr: np.ndarray | None = None

    def __post_init__(self):
        self.evolve_times = np.asarray(self.evolve_times, dtype=float)
        self.mean_counts = np.asarray(self.mean_counts, dtype=float)
        if self.evolve_times.shape != self.mean_counts.shape:
            raise ValueError("evolve_times and mean_counts must have equal lengths")
        if self.n_shots_per_point < 1:
            raise ValueError("n_shots_per_point must be >= 1")
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)


def _check_scheme(scheme: str):
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def peak_values(events: np.ndarray, scheme: str, cfg: ReadoutConfig, sig: SignalModel, cds: CdsConfig,
                rng: np.random.Generator, integration: float = 1.0) -> np.ndarray:
    """Per-trace peak statistic: largest CDS output, or minimum of the integrated trace."""
    _check_scheme(scheme)
    if scheme == "cds":
        layout = dsp.cds_layout(cds, cfg.sample_rate, cfg.n_samples)
        idx = layout.sample_indices
        values = render_sparse(events, sig, cfg, rng, idx)
        return dsp.cds_from_sparse(values, idx, layout).max(axis=-1)
    samples = render_traces(events, sig, cfg, rng)
    return dsp.direct_peak_extract(samples, integration, cfg.sample_rate)


def ideal_peaks(scheme: str, n: int, cfg: ReadoutConfig, sig: SignalModel, cds: CdsConfig, seed: int,
                block_size: int = 5000):
    """Peak values of ideal triplet and singlet windows (no thermal events, no relaxation)."""
    _check_scheme(scheme)
    excited, ground = [], []
    for b, size in enumerate(block_sizes(n, block_size)):
        rng = block_rng(seed, b)
        for prepared, sink in ((Prepared.FORCED_T0, excited), (Prepared.FORCED_S, ground)):
            _, events = sample_batch(rng, size, prepared, cfg, IDEAL, 0.0, 0.0, relax=False)
            sink.append(peak_values(events, scheme, cfg, sig, cds, rng))
    return np.concatenate(excited), np.concatenate(ground)


def detection_fidelity(scheme: str, n: int, cfg: ReadoutConfig, sig: SignalModel, cds: CdsConfig,
                       seed: int) -> tuple[DetectionFidelity, PeakHistogram]:
    """Threshold-optimized tunneling-detection errors of one detection scheme."""
    excited, ground = ideal_peaks(scheme, n, cfg, sig, cds, seed)
    hist = dsp.build_histogram(excited, ground, event_above=(scheme == "cds"))
    return dsp.optimize_threshold(hist), hist


def count_windows(events: np.ndarray, scheme: str, threshold: float, cfg: ReadoutConfig, sig: SignalModel,
                  cds: CdsConfig, rng: np.random.Generator) -> np.ndarray:
    """Counted tunnel-out events per window for a batch of event rows."""
    _check_scheme(scheme)
    if scheme == "cds":
        layout = dsp.cds_layout(cds, cfg.sample_rate, cfg.n_samples)
        idx = layout.sample_indices
        values = render_sparse(events, sig, cfg, rng, idx)
        n_out, _ = dsp.count_events_cds(dsp.cds_from_sparse(values, idx, layout), threshold)
        return n_out
    # a direct minimum only tells whether the window held an event
    samples = render_traces(events, sig, cfg, rng)
    return (dsp.direct_peak_extract(samples, 1.0, cfg.sample_rate) < threshold).astype(int)


def larmor_experiment(cfg: ReadoutConfig, th: ThermalParams, field: FieldParams, sig: SignalModel,
                      cds: CdsConfig, threshold: float, evolve_times, n_shots: int = 2000, n_repeats: int = 50,
                      seed: int = 0, scheme: str = "cds") -> LarmorDataset:
    """Simulated oscillation measurement: ``n_repeats`` blocks of ``n_shots`` sweeps.

    Returns the mean count per shot at each evolution time, with the standard
    error taken from the spread of the per-repeat means.
    """
    evolve_times = list(evolve_times)
    per_repeat = np.empty((n_repeats, len(evolve_times)))
    for rep in range(n_repeats):
        sb = sweep_block(seed, rep, n_shots, evolve_times, cfg, th, field)
        for j in range(len(evolve_times)):
            per_repeat[rep, j] = count_windows(sb.events[j], scheme, threshold, cfg, sig, cds, sb.rng).mean()
    stderr = per_repeat.std(axis=0, ddof=1) / np.sqrt(n_repeats) if n_repeats > 1 else None
    return LarmorDataset(np.asarray(evolve_times), per_repeat.mean(axis=0), n_shots * n_repeats, stderr)


def pi_pulse_traces(n: int, cfg: ReadoutConfig, th: ThermalParams, field: FieldParams, sig: SignalModel,
                    seed: int) -> np.ndarray:
    """Traces after a nominal pi rotation, each from a fresh reload."""
    t_pi = 1e3 / (2.0 * field.delta_b) if field.delta_b > 0 else 0.0
    rng = block_rng(seed, 0)
    _, events = sample_batch(rng, n, Prepared.EVOLVED, cfg, th, field.delta_b, t_pi)
    return render_traces(events, sig, cfg, rng)


def rf_histogram_samples(n: int, cfg: ReadoutConfig, th: ThermalParams, field: FieldParams, sig: SignalModel,
                         seed: int, integration: float = 1.0) -> np.ndarray:
    """1 us-integrated samples of a pi-pulse ensemble (the single-shot signal histogram)."""
    return dsp.integrated_samples(pi_pulse_traces(n, cfg, th, field, sig, seed), cfg.sample_rate, integration)


def mode_separation(samples: np.ndarray, sig: SignalModel) -> float:
    """Distance between the two signal modes in units of their combined standard deviation.

    The combined deviation is the root sum of squares of the two mode spreads.
    Samples are split at the midpoint of the two levels; each mode's spread is
    a median-absolute-deviation estimate so that the few samples caught on a
    filtered edge do not inflate it.
    """
    mid = 0.5 * (sig.level_occupied + sig.level_empty)
    hi, lo = samples[samples >= mid], samples[samples < mid]
    if hi.size < 2 or lo.size < 2:
        raise ValueError("both signal modes need samples")

    def robust_std(x):
        return 1.4826 * np.median(np.abs(x - np.median(x)))

    combined = np.hypot(robust_std(hi), robust_std(lo))
    return float(abs(np.median(hi) - np.median(lo)) / combined)
