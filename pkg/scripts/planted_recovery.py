"""Recover randomly planted thermal and field parameters through the full trace pipeline."""
from __future__ import annotations

import argparse
import time

import numpy as np

from est_readout import fit, pipeline
from est_readout.model import FieldParams, ThermalParams
from est_readout.presets import QL, larmor_times

BOUNDS = {"alpha1": (0.0, 0.15), "alpha2": (0.0, 0.15), "beta": (0.0, 0.2), "sigma": (8.0, 30.0),
          "delta_b": (300.0, 700.0)}


def draw(rng: np.random.Generator) -> dict:
    return {k: float(rng.uniform(lo, hi)) for k, (lo, hi) in BOUNDS.items()}


def recover(planted: dict, seed: int, n_shots: int = 2000, n_repeats: int = 50, preset=QL):
    """Simulate the oscillation experiment at ``planted`` and fit it back."""
    th = ThermalParams(planted["alpha1"], planted["alpha2"], planted["beta"])
    fld = FieldParams(planted["delta_b"], planted["sigma"])
    det, _ = pipeline.detection_fidelity("cds", 15000, preset.readout, preset.signal, preset.cds, seed)
    times = larmor_times()
    data = pipeline.larmor_experiment(preset.readout, th, fld, preset.signal, preset.cds, det.threshold, times,
                                      n_shots, n_repeats, seed=seed)
    return fit.fit_larmor(data, preset.readout, det)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--draws", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--repeats", type=int, default=50)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    print("draw alpha1 alpha2 beta sigma delta_b | fitted ...")
    for k in range(args.draws):
        planted = draw(rng)
        t0 = time.time()
        f = recover(planted, args.seed * 1000 + k, n_repeats=args.repeats)
        got = [f.alpha1, f.alpha2, f.beta, f.sigma, f.delta_b]
        print(k, " ".join(f"{v:.4f}" for v in planted.values()), "|", " ".join(f"{v:.4f}" for v in got),
              f"({time.time() - t0:.1f}s)")


if __name__ == "__main__":
    main()
