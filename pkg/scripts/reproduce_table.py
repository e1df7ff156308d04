"""Print the readout fidelity table for both qubits.

Closed-form rows use the preset reference detection errors; the simulated rows
threshold ideal trace ensembles with the CDS and direct-peak detectors.
"""
import argparse

from est_readout.fidelity import compare_detection_schemes, fidelity_report
from est_readout.presets import QL, QR


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--traces", type=int, default=15000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    print(f"{'qubit':<6}{'source':<14}{'E_T':>8}{'E_N':>8}{'R_S':>8}{'R_T0':>8}{'F':>8}{'vis':>8}")
    for q in (QL, QR):
        rows = [("closed form", fidelity_report(q.readout, q.thermal, q.detection))]
        cds, direct = compare_detection_schemes(q.readout, q.thermal, q.signal, q.cds, args.traces, args.seed)
        rows += [("sim CDS", cds), ("sim direct", direct)]
        for name, rep in rows:
            det = rep.detection or q.detection
            print(f"{q.name:<6}{name:<14}{det.e_t:8.4f}{det.e_n:8.4f}{rep.r_s:8.4f}{rep.r_t0:8.4f}"
                  f"{rep.f_meas:8.4f}{rep.visibility:8.4f}")


if __name__ == "__main__":
    main()
