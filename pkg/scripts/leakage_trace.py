"""Write the (2,0) singlet occupation during the hold after a detuning ramp."""
import argparse
import csv
import math

from est_readout import leakage
from est_readout.leakage import LzConfig


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--hold", type=float, default=10.0, help="longest hold time in ns")
    ap.add_argument("--coupling-factor", type=float, default=math.sqrt(2.0))
    ap.add_argument("--out", default="leakage_trace.csv")
    args = ap.parse_args(argv)
    cfg = LzConfig(coupling_factor=args.coupling_factor, max_evolve=args.hold)
    res = leakage.evolve_pulse(cfg, args.hold)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hold_time_ns", "occupation_20S"])
        w.writerows(zip(res.hold_times, res.occupation))
    print(f"average leakage {leakage.average_leakage(cfg):.4f}, trace range "
          f"[{res.occupation.min():.4f}, {res.occupation.max():.4f}], norm drift {res.norm_drift:.1e}")


if __name__ == "__main__":
    main()
