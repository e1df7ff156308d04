"""Landau-Zener leakage into (2,0)S during a fast detuning pulse.

The three-level model spans {(2,0)S, (1,1)S, (1,1)T0}. Energies are
frequencies in GHz (``h = 1``) and times are in ns, so a state evolves as
``exp(-2j*pi*H*t)``. Negative detuning is the (2,0) side.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

BASIS = ("(2,0)S", "(1,1)S", "(1,1)T0")


class StepSizeError(ValueError):
    pass


@dataclass(frozen=True)
class LzConfig:
    """Pulse and Hamiltonian inputs.

    Attributes
    ----------
    tunnel_coupling : float
        ``t_c/h`` in GHz.
    delta_b : float
        S-T0 precession frequency in MHz.
    rise_time : float
        Linear ramp duration, ps.
    detuning_start, detuning_end : float
        Detuning before and after the ramp, GHz.
    max_evolve : float
        Longest hold, ns.
    dt : float
        Ramp integration step, ps.
    coupling_factor : float
        Multiplier of ``t_c`` in the singlet matrix element.
    """

    tunnel_coupling: float = 8.0
    delta_b: float = 500.0
    rise_time: float = 200.0
    detuning_start: float = -80.0
    detuning_end: float = 80.0
    max_evolve: float = 10.0
    dt: float = 1.0
    coupling_factor: float = 1.0

    def __post_init__(self):
        if self.rise_time <= 0:
            raise ValueError("rise_time must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.dt > self.rise_time / 50:
            raise StepSizeError("dt must not exceed rise_time / 50")
        if self.tunnel_coupling < 0 or self.delta_b < 0 or self.max_evolve < 0:
            raise ValueError("tunnel_coupling, delta_b and max_evolve must be non-negative")


def hamiltonian_at(eps: float, cfg: LzConfig) -> np.ndarray:
    """Hermitian 3x3 Hamiltonian in GHz at detuning ``eps`` (GHz)."""
    tc = cfg.coupling_factor * cfg.tunnel_coupling
    half = 0.5 * cfg.delta_b * 1e-3
    return np.array([[eps, tc, 0.0], [tc, 0.0, half], [0.0, half, 0.0]], dtype=complex)


def _propagators(hs: np.ndarray, dt_ns: float) -> np.ndarray:
    """``exp(-2j*pi*H*dt)`` for a stack of Hermitian matrices."""
    w, v = np.linalg.eigh(hs)
    phase = np.exp(-2j * np.pi * w * dt_ns)
    return np.einsum("...ij,...j,...kj->...ik", v, phase, v.conj())


def ramp(psi: np.ndarray, eps_from: float, eps_to: float, cfg: LzConfig) -> np.ndarray:
    """Evolve ``psi`` through a linear detuning ramp with midpoint piecewise-constant steps."""
    n_steps = max(1, int(math.ceil(cfg.rise_time / cfg.dt - 1e-9)))
    h_ns = cfg.rise_time * 1e-3 / n_steps
    mids = eps_from + (eps_to - eps_from) * (np.arange(n_steps) + 0.5) / n_steps
    hs = np.stack([hamiltonian_at(e, cfg) for e in mids])
    for u in _propagators(hs, h_ns):
        psi = u @ psi
    return psi


def ground_state(eps: float, cfg: LzConfig) -> np.ndarray:
    w, v = np.linalg.eigh(hamiltonian_at(eps, cfg))
    return v[:, np.argmin(w)]


@dataclass
class PulseResult:
    hold_times: np.ndarray  # ns
    occupation: np.ndarray  # (2,0)S population along the hold
    return_probability: float  # (2,0)S population after the ramp back
    norm_drift: float
    energy_drift: float


def hold_evolution(psi: np.ndarray, cfg: LzConfig, times: np.ndarray):
    """Exact states at ``times`` (ns) under the time-independent hold Hamiltonian."""
    w, v = np.linalg.eigh(hamiltonian_at(cfg.detuning_end, cfg))
    coeff = v.conj().T @ psi
    return (v[None, :, :] * (coeff[None, :] * np.exp(-2j * np.pi * np.outer(times, w)))[:, None, :]).sum(-1)


def evolve_pulse(cfg: LzConfig, evolve_time: float, n_samples: int | None = None) -> PulseResult:
    """Ramp in, hold for ``evolve_time`` ns, ramp back.

    The hold is sampled every picosecond unless ``n_samples`` is given.
    """
    if evolve_time < 0:
        raise ValueError("evolve_time must be non-negative")
    psi0 = ground_state(cfg.detuning_start, cfg)
    psi = ramp(psi0, cfg.detuning_start, cfg.detuning_end, cfg)
    if n_samples is None:
        n_samples = max(2, int(round(evolve_time * 1e3)) + 1)
    times = np.linspace(0.0, evolve_time, n_samples)
    states = hold_evolution(psi, cfg, times)
    occupation = np.abs(states[:, 0]) ** 2
    h_hold = hamiltonian_at(cfg.detuning_end, cfg)
    energy = np.einsum("ti,ij,tj->t", states.conj(), h_hold, states).real
    back = ramp(states[-1], cfg.detuning_end, cfg.detuning_start, cfg)
    norms = np.linalg.norm(states, axis=1)
    drift = max(float(np.max(np.abs(norms - 1.0))), abs(float(np.linalg.norm(back)) - 1.0))
    return PulseResult(
        hold_times=times,
        occupation=occupation,
        return_probability=float(abs(back[0]) ** 2),
        norm_drift=drift,
        energy_drift=float(np.ptp(energy)),
    )


def average_leakage(cfg: LzConfig, n_evolve: int = 101) -> float:
    """Mean (2,0)S occupation over the hold, averaged over holds of 0..``max_evolve`` ns.

    Every hold is a prefix of the longest one, so a single hold trace sampled
    every picosecond serves all evolve times; a zero-length hold contributes
    its starting occupation.
    """
    res = evolve_pulse(cfg, cfg.max_evolve)
    occ, t = res.occupation, res.hold_times
    # running mean of the trace up to each time (trapezoidal)
    if t.size > 1:
        area = np.concatenate([[0.0], np.cumsum(0.5 * (occ[1:] + occ[:-1]) * np.diff(t))])
    else:
        area = np.zeros(1)
    grid = np.linspace(0.0, cfg.max_evolve, n_evolve)
    means = []
    for T in grid:
        k = int(np.searchsorted(t, T, side="right")) - 1
        means.append(occ[0] if T == 0 else area[k] / t[k])
    return float(np.mean(means))
