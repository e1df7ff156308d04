"""Choose the trace noise amplitude that reproduces a target CDS total error.

The total error E_T + E_N of the ideal-trace ensembles grows monotonically with
the noise amplitude, so a bracketing root finder on a fixed seed is enough.
"""
import argparse
from dataclasses import replace

from scipy.optimize import brentq

from est_readout import pipeline
from est_readout.presets import PRESETS

TARGETS = {"QL": 0.105, "QR": 0.282}


def total_error(noise, preset, n, seed):
    sig = replace(preset.signal, noise_sigma=noise)
    det, _ = pipeline.detection_fidelity("cds", n, preset.readout, sig, preset.cds, seed)
    return det.e_t + det.e_n


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--qubit", choices=sorted(PRESETS), default="QL")
    ap.add_argument("--target", type=float, help="total error to match (default: the preset reference value)")
    ap.add_argument("--traces", type=int, default=15000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--bracket", type=float, nargs=2, default=(0.05, 3.0))
    args = ap.parse_args(argv)
    preset = PRESETS[args.qubit]
    target = TARGETS[args.qubit] if args.target is None else args.target
    noise = brentq(lambda s: total_error(s, preset, args.traces, args.seed) - target, *args.bracket, xtol=1e-3)
    print(f"{args.qubit}: noise_sigma {noise:.3f} gives E_T+E_N {total_error(noise, preset, args.traces, args.seed):.4f}"
          f" (target {target})")


if __name__ == "__main__":
    main()
