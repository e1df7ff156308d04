"""Monte-Carlo synthesis of single-shot readout windows and their rf traces.

Every shot consumes a fixed block of uniform variates, so a batch of shots is
reproducible from its generator state regardless of which branches fire. The
ensemble is split into fixed-size blocks, each seeded from ``(seed, block)``,
which makes the output independent of how blocks are scheduled.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Sequence

import numpy as np
from scipy.signal import lfilter

from .model import FieldParams, ReadoutConfig, ThermalParams, ideal_t0_probability

DEFAULT_BLOCK_SIZE = 1000
# columns of the per-shot uniform draw matrix
_N_DRAWS = 11
(_U_INIT, _U_EVOLVE, _U_TOUT, _U_TREL, _U_FALSE, _U_TFALSE,
 _U_DOUBLE, _U_KIND, _U_TIN1, _U_TOUT2, _U_TIN2) = range(_N_DRAWS)
# event columns alternate out/in
EVENT_SIGNS = np.array([1.0, -1.0, 1.0, -1.0])


class State(str, Enum):
    S = "S"
    T0 = "T0"
    TPLUS = "Tplus"
    TMINUS = "Tminus"


_STATE_CODES = [State.S, State.T0, State.TPLUS, State.TMINUS]


class Prepared(str, Enum):
    EVOLVED = "evolved"  # reload, then free S-T0 precession
    FORCED_S = "forced_s"
    FORCED_T0 = "forced_t0"


@dataclass(frozen=True)
class SignalModel:
    """Sensor levels, white noise before filtering and the single-pole cutoff (MHz)."""

    level_occupied: float = 1.0
    level_empty: float = 0.0
    noise_sigma: float = 0.0
    lowpass_cutoff: float = 1.0

    def __post_init__(self):
        if self.level_occupied == self.level_empty:
            raise ValueError("level_occupied and level_empty must differ")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.lowpass_cutoff <= 0:
            raise ValueError("lowpass_cutoff must be positive")

    def pole(self, sample_rate: float) -> float:
        if self.lowpass_cutoff > sample_rate / 2:
            raise ValueError("lowpass_cutoff exceeds the Nyquist frequency")
        return math.exp(-2.0 * math.pi * self.lowpass_cutoff / sample_rate)

    @property
    def contrast(self) -> float:
        return self.level_occupied - self.level_empty


@dataclass(frozen=True)
class ShotRecord:
    """Ground truth of one measurement window."""

    initial_state: State
    events: tuple = ()
    label: str = "ground"
    evolve_time: float = math.nan
    delta_b: float = math.nan

    def __post_init__(self):
        times = [t for t, _ in self.events]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("events must be time-ordered")
        for k, (_, direction) in enumerate(self.events):
            if direction != ("out" if k % 2 == 0 else "in"):
                raise ValueError("event directions must alternate starting with 'out'")

    @property
    def tunneled(self) -> bool:
        return len(self.events) > 0

    @property
    def out_times(self) -> list[float]:
        return [t for t, d in self.events if d == "out"]

    def event_row(self) -> np.ndarray:
        row = np.full(4, np.nan)
        for k, (t, _) in enumerate(self.events[:4]):
            row[k] = t
        return row

    def to_dict(self) -> dict:
        return {
            "initial_state": self.initial_state.value,
            "events": [[t, d] for t, d in self.events],
            "label": self.label,
            "evolve_time": self.evolve_time,
            "delta_b": self.delta_b,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ShotRecord":
        return cls(
            initial_state=State(d["initial_state"]),
            events=tuple((float(t), str(k)) for t, k in d["events"]),
            label=d["label"],
            evolve_time=float(d["evolve_time"]),
            delta_b=float(d["delta_b"]),
        )


@dataclass
class Trace:
    samples: np.ndarray
    dt: float
    meta: ShotRecord | None = None

    def __len__(self):
        return len(self.samples)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.samples)) * self.dt


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Generator for ensemble block ``block`` of master seed ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(block),)))


def _exp(u, tau):
    if math.isinf(tau):
        return np.full(np.shape(u), np.inf)
    return -tau * np.log1p(-u)


def _trunc_exp(u, rate, lo, hi):
    """Inverse-CDF draw of an exponential with ``rate`` truncated to ``[lo, hi]``."""
    span = np.maximum(hi - lo, 0.0)
    if rate == 0:
        return lo + u * span
    if math.isinf(rate):
        return np.asarray(lo, dtype=float) + 0.0 * u
    return lo - np.log1p(u * np.expm1(-rate * span)) / rate


def _window_rate(p: float, meas_window: float) -> float:
    """Constant rate whose first arrival falls in the window with probability ``p``."""
    if p >= 1.0:
        return math.inf
    return -math.log1p(-p) / meas_window


def _initial_states(u_init, u_evolve, prepared: Prepared, reloaded, f, beta):
    n = u_init.shape[0]
    if prepared is Prepared.FORCED_S:
        return np.zeros(n, dtype=np.int8)
    if prepared is Prepared.FORCED_T0:
        return np.ones(n, dtype=np.int8)
    state = np.zeros(n, dtype=np.int8)
    if beta > 0:
        false_load = np.asarray(reloaded, dtype=bool) & (u_init < beta)
        # equal thirds over T0, T+, T-
        which = np.minimum((u_init / beta * 3.0).astype(np.int8), 2)
        state = np.where(false_load, 1 + which, state).astype(np.int8)
    flip = (u_evolve < f) & (state <= 1)
    return np.where(flip, 1 - state, state).astype(np.int8)


def simulate_windows(u: np.ndarray, states: np.ndarray, cfg: ReadoutConfig, th: ThermalParams, relax: bool = True) -> np.ndarray:
    """Event times of a batch of windows given each shot's starting state.

    Parameters
    ----------
    u : ndarray, shape (n, 11)
        Uniform variates, one row per shot.
    states : ndarray of int
        0 for S, 1 for T0, 2/3 for T+/T-.

    Returns
    -------
    ndarray, shape (n, 4)
        Times of out, in, out, in events; NaN where absent.
    """
    m = cfg.meas_window
    n = states.shape[0]
    t_out = _exp(u[:, _U_TOUT], cfg.tau_out)
    t_rel = _exp(u[:, _U_TREL], cfg.t1 if relax else math.inf)
    is_triplet = states > 0
    tunnel = is_triplet & (t_out < t_rel) & (t_out < m)
    false = ~tunnel & (u[:, _U_FALSE] < th.alpha1)
    t_false = _trunc_exp(u[:, _U_TFALSE], _window_rate(th.alpha1, m), 0.0, m)
    t1 = np.where(tunnel, t_out, np.where(false, t_false, np.nan))
    first = tunnel | false

    p2 = th.p2
    double = first & (u[:, _U_DOUBLE] < p2)
    triplet_reload = u[:, _U_KIND] * p2 < th.beta
    rate_in = 1.0 / cfg.tau_in
    t_in_free = t1 + _exp(u[:, _U_TIN1], cfg.tau_in)
    t_in_forced = _trunc_exp(u[:, _U_TIN1], rate_in, t1, m)
    t_in1 = np.where(double, t_in_forced, t_in_free)
    t_in1 = np.where(t_in1 < m, t_in1, np.nan)

    t_out2_triplet = _trunc_exp(u[:, _U_TOUT2], 1.0 / cfg.tau_out, t_in1, m)
    t_out2_singlet = _trunc_exp(u[:, _U_TOUT2], _window_rate(th.alpha2, m), t_in1, m)
    t_out2 = np.where(double, np.where(triplet_reload, t_out2_triplet, t_out2_singlet), np.nan)
    t_in2 = t_out2 + _exp(u[:, _U_TIN2], cfg.tau_in)
    t_in2 = np.where(t_in2 < m, t_in2, np.nan)

    events = np.full((n, 4), np.nan)
    events[:, 0] = t1
    events[:, 1] = t_in1
    events[:, 2] = t_out2
    events[:, 3] = t_in2
    return events


def sample_batch(rng: np.random.Generator, n: int, prepared: Prepared, cfg: ReadoutConfig, th: ThermalParams,
                 delta_b, evolve_time: float, reloaded=True, relax: bool = True):
    """Draw ``n`` shots at once; returns ``(states, events)``."""
    u = rng.random((n, _N_DRAWS))
    f = ideal_t0_probability(evolve_time, delta_b) if prepared is Prepared.EVOLVED else 0.0
    reloaded = np.broadcast_to(np.asarray(reloaded, dtype=bool), (n,))
    states = _initial_states(u[:, _U_INIT], u[:, _U_EVOLVE], prepared, reloaded, f, th.beta)
    return states, simulate_windows(u, states, cfg, th, relax=relax)


def _label(prepared: Prepared, f: float) -> str:
    if prepared is Prepared.FORCED_T0:
        return "excited"
    if prepared is Prepared.FORCED_S:
        return "ground"
    return "excited" if f >= 0.5 else "ground"


def _record(state_code, events_row, prepared, evolve_time, delta_b) -> ShotRecord:
    ev = tuple((float(t), "out" if k % 2 == 0 else "in") for k, t in enumerate(events_row) if not np.isnan(t))
    f = float(ideal_t0_probability(evolve_time, delta_b)) if prepared is Prepared.EVOLVED else math.nan
    return ShotRecord(
        initial_state=_STATE_CODES[int(state_code)],
        events=ev,
        label=_label(prepared, f),
        evolve_time=float(evolve_time),
        delta_b=float(delta_b),
    )


def sample_shot_events(prepared: Prepared | str, rng, cfg: ReadoutConfig, th: ThermalParams,
                       delta_b_draw: float, evolve_time: float, reloaded: bool = True, relax: bool = True) -> ShotRecord:
    """Ground-truth events of one measurement window.

    ``reloaded`` says whether the previous window tunneled, in which case the
    starting singlet is loaded from the reservoir and may be a triplet.
    ``relax=False`` switches triplet relaxation off.
    """
    rng = np.random.default_rng(rng)
    prepared = Prepared(prepared)
    states, events = sample_batch(rng, 1, prepared, cfg, th, delta_b_draw, evolve_time, reloaded, relax)
    return _record(states[0], events[0], prepared, evolve_time, delta_b_draw)


def event_sample_indices(events: np.ndarray, sample_rate: float) -> np.ndarray:
    """First sample index at or after each event; -1 where absent."""
    idx = np.ceil(np.nan_to_num(events, nan=-1.0) * sample_rate)
    return np.where(np.isnan(events), -1, idx).astype(np.int64)


def render_traces(events: np.ndarray, sig: SignalModel, cfg: ReadoutConfig, rng: np.random.Generator) -> np.ndarray:
    """Noisy, low-pass-filtered traces for a batch of event rows, shape (n, n_samples)."""
    n, length = events.shape[0], cfg.n_samples
    idx = event_sample_indices(events, cfg.sample_rate)
    steps = np.zeros((n, length + 1))
    rows = np.arange(n)
    for k in range(events.shape[1]):
        ok = (idx[:, k] >= 0) & (idx[:, k] < length)
        np.add.at(steps, (rows[ok], idx[ok, k]), EVENT_SIGNS[k])
    wave = sig.level_occupied - sig.contrast * np.cumsum(steps[:, :length], axis=1)
    a = sig.pole(cfg.sample_rate)
    y_prev = np.full(n, sig.level_occupied)
    if sig.noise_sigma > 0:
        stationary = sig.noise_sigma * math.sqrt((1 - a) / (1 + a))
        y_prev = y_prev + stationary * rng.standard_normal(n)
        wave = wave + sig.noise_sigma * rng.standard_normal((n, length))
    return lfilter([1.0 - a], [1.0, -a], wave, axis=1, zi=(a * y_prev)[:, None])[0]


def render_sparse(events: np.ndarray, sig: SignalModel, cfg: ReadoutConfig, rng: np.random.Generator,
                  indices: np.ndarray) -> np.ndarray:
    """Filtered traces evaluated only at sorted sample ``indices``.

    The result has the same joint distribution at those indices as
    :func:`render_traces`: the noiseless part is the exact filter step
    response and the filtered noise is advanced as an AR(1) process between
    the requested samples.
    """
    indices = np.asarray(indices, dtype=np.int64)
    if np.any(np.diff(indices) <= 0):
        raise ValueError("indices must be strictly increasing")
    a = sig.pole(cfg.sample_rate)
    n = events.shape[0]
    eidx = event_sample_indices(events, cfg.sample_rate)
    out = np.full((n, indices.size), sig.level_occupied)
    # step response 1 - a**(lag + 1) by table lookup; zero before the event
    table = np.concatenate([[0.0], 1.0 - a ** (np.arange(int(indices[-1]) + 1) + 1.0)]) if indices.size else np.zeros(1)
    idx32 = indices.astype(np.int32) + 1
    for k in range(events.shape[1]):
        rows = np.flatnonzero(eidx[:, k] >= 0)
        if rows.size == 0:
            continue
        lag = np.maximum(idx32[None, :] - eidx[rows, k:k + 1].astype(np.int32), 0)
        out[rows] -= sig.contrast * EVENT_SIGNS[k] * table[lag]
    if sig.noise_sigma > 0:
        var = sig.noise_sigma**2 * (1 - a) / (1 + a)
        z = rng.standard_normal((n, indices.size))
        gaps = np.diff(indices)
        decay = a ** gaps
        kick = np.sqrt(var * (1.0 - decay**2))
        noise = math.sqrt(var) * z[:, 0]
        out[:, 0] += noise
        for j in range(1, indices.size):
            noise = decay[j - 1] * noise + kick[j - 1] * z[:, j]
            out[:, j] += noise
    return out


def synthesize_trace(rec: ShotRecord, sig: SignalModel, cfg: ReadoutConfig, rng) -> Trace:
    rng = np.random.default_rng(rng)
    samples = render_traces(rec.event_row()[None, :], sig, cfg, rng)[0]
    return Trace(samples=samples, dt=cfg.dt, meta=rec)


def draw_fields(rng: np.random.Generator, n: int, field: FieldParams) -> np.ndarray:
    if field.sigma == 0:
        return np.full(n, field.delta_b)
    return field.delta_b + field.sigma * rng.standard_normal(n)


@dataclass
class SweepBlock:
    """One block of sweeps: states and events indexed ``[time_index, sweep]``."""

    block: int
    delta_b: np.ndarray
    states: np.ndarray
    events: np.ndarray
    rng: np.random.Generator = field(repr=False)


def sweep_block(seed: int, block: int, n_sweeps: int, evolve_times: Sequence[float], cfg: ReadoutConfig,
                th: ThermalParams, field_params: FieldParams, prepared: Prepared = Prepared.EVOLVED,
                relax: bool = True) -> SweepBlock:
    """Simulate ``n_sweeps`` sequential sweeps over ``evolve_times``.

    Each sweep keeps one field draw (quasi-static bath) and starts from a
    reload. A window with at least one tunnel-out makes the next shot reload.
    """
    rng = block_rng(seed, block)
    delta_b = draw_fields(rng, n_sweeps, field_params)
    n_t = len(evolve_times)
    states = np.empty((n_t, n_sweeps), dtype=np.int8)
    events = np.empty((n_t, n_sweeps, 4))
    reloaded = np.ones(n_sweeps, dtype=bool)
    for j, t in enumerate(evolve_times):
        states[j], events[j] = sample_batch(rng, n_sweeps, prepared, cfg, th, delta_b, t, reloaded, relax)
        reloaded = ~np.isnan(events[j, :, 0])
    return SweepBlock(block=block, delta_b=delta_b, states=states, events=events, rng=rng)


def block_sizes(n: int, block_size: int = DEFAULT_BLOCK_SIZE) -> list[int]:
    if n < 1:
        raise ValueError("empty ensemble")
    full, rest = divmod(n, block_size)
    return [block_size] * full + ([rest] if rest else [])


def _ensemble_block(args):
    seed, block, size, evolve_times, cfg, th, field_params, sig, prepared, relax = args
    sb = sweep_block(seed, block, size, evolve_times, cfg, th, field_params, prepared, relax)
    traces = []
    for j, t in enumerate(evolve_times):
        samples = render_traces(sb.events[j], sig, cfg, sb.rng)
        for i in range(size):
            rec = _record(sb.states[j, i], sb.events[j, i], prepared, t, sb.delta_b[i])
            traces.append((i, j, Trace(samples=samples[i], dt=cfg.dt, meta=rec)))
    # sweep-major order: every evolve time of sweep 0, then sweep 1, ...
    traces.sort(key=lambda x: (x[0], x[1]))
    return [tr for _, _, tr in traces]


def iter_ensemble(n: int, evolve_times, cfg, th, field_params, sig, seed: int, prepared=Prepared.EVOLVED,
                  relax: bool = True, block_size: int = DEFAULT_BLOCK_SIZE, workers: int = 1) -> Iterator[list[Trace]]:
    """Yield the ensemble block by block, in block order."""
    jobs = [(seed, b, size, list(evolve_times), cfg, th, field_params, sig, Prepared(prepared), relax)
            for b, size in enumerate(block_sizes(n, block_size))]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            yield from pool.map(_ensemble_block, jobs)
    else:
        for job in jobs:
            yield _ensemble_block(job)


def synthesize_ensemble(n: int, evolve_times, cfg: ReadoutConfig, th: ThermalParams, field_params: FieldParams,
                        sig: SignalModel, seed: int, prepared=Prepared.EVOLVED, relax: bool = True,
                        block_size: int = DEFAULT_BLOCK_SIZE, workers: int = 1) -> list[Trace]:
    """``n`` sweeps over ``evolve_times``; traces are returned sweep-major."""
    out: list[Trace] = []
    for chunk in iter_ensemble(n, evolve_times, cfg, th, field_params, sig, seed, prepared, relax, block_size, workers):
        out.extend(chunk)
    return out
