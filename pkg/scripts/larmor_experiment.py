"""Simulate the singlet-triplet oscillation experiment and calibrate it end to end."""
import argparse
import csv
from dataclasses import replace

from est_readout import fit, pipeline
from est_readout.presets import PRESETS, larmor_times


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--qubit", choices=sorted(PRESETS), default="QL")
    ap.add_argument("--shots", type=int, default=2000)
    ap.add_argument("--repeats", type=int, default=50)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", help="CSV with measured and fitted curves")
    args = ap.parse_args(argv)
    q = PRESETS[args.qubit]
    times = larmor_times()

    det, _ = pipeline.detection_fidelity("cds", 15000, q.readout, q.signal, q.cds, 0)
    data = pipeline.larmor_experiment(q.readout, q.thermal, q.field, q.signal, q.cds, det.threshold, times,
                                      args.shots, args.repeats, seed=args.seed)
    rf = pipeline.rf_histogram_samples(1000, q.readout, q.thermal, q.field, q.signal, seed=99)
    init = fit.LarmorFit(0.05, 0.05, 0.05, 10.0, fit.fft_frequency(data.evolve_times, data.mean_counts))
    # start the noise search away from the value used to simulate
    start = replace(q.signal, noise_sigma=0.7 * q.signal.noise_sigma)
    res = fit.calibrate_iteratively(data, q.readout, start, init, rf, q.cds, seed=5)
    vis = fit.visibility(res.fit, times, q.readout, res.detection)

    f = res.fit
    print(f"{q.name}: {res.iterations} iterations, noise {res.noise_sigma:.3f}")
    print(f"  alpha1 {f.alpha1:.4f}  alpha2 {f.alpha2:.4f}  beta {f.beta:.4f}  sigma {f.sigma:.2f} MHz"
          f"  delta_b {f.delta_b:.2f} MHz  T2* {f.t2_star:.2f} ns")
    print(f"  E_T {res.detection.e_t:.4f}  E_N {res.detection.e_n:.4f}  visibility {vis:.3f}")
    if args.out:
        fitted = fit.fitted_curve(f, times, q.readout, res.detection)
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["evolve_time_ns", "mean_counts", "fitted"])
            w.writerows(zip(data.evolve_times, data.mean_counts, fitted))


if __name__ == "__main__":
    main()
