"""Command-line front end.

Every command reads an experiment configuration (``--config`` file and/or
``--qubit`` preset), is deterministic for a given seed and writes its result
to ``--out``. Failures print one JSON object to stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import bundle as bundle_io
from . import dsp, fit, leakage, pipeline
from .config import ConfigError, ExperimentConfig, build_config, load_config
from .fidelity import compare_detection_schemes, fidelity_report
from .presets import PRESETS
from .tracegen import Prepared, iter_ensemble

EXIT_CODES = {"usage": 2, "config": 3, "io": 4, "data": 5, "fit": 6}


class CliError(Exception):
    def __init__(self, category, message, **extra):
        super().__init__(message)
        self.category = category
        self.extra = extra


# ---------------------------------------------------------------------------
# helpers


def _load(args) -> ExperimentConfig:
    overrides = {"qubit": args.qubit, "seed": args.seed, "shots": args.shots, "scheme": args.scheme}
    try:
        if args.config:
            pairs_path = Path(args.config)
            if not pairs_path.exists():
                raise CliError("io", f"config file not found: {args.config}")
            return load_config(pairs_path, overrides)
        return build_config({}, overrides)
    except ConfigError as exc:
        raise CliError("config", str(exc), line=exc.line, key=exc.key) from None


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _write_json(path, doc) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True, indent=2, default=_json_default)
            fh.write("\n")
    except OSError as exc:
        raise CliError("io", f"cannot write {path}: {exc.strerror}") from None


def _write_csv(path, header, rows) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    except OSError as exc:
        raise CliError("io", f"cannot write {path}: {exc.strerror}") from None


def _sibling(out, suffix) -> Path:
    out = Path(out)
    return out.with_name(out.stem + suffix)


def read_larmor_csv(path) -> pipeline.LarmorDataset:
    try:
        with open(path, encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise CliError("io", f"cannot read {path}: {exc.strerror}") from None
    if not rows:
        raise CliError("data", f"{path}: no data rows")
    try:
        t = [float(r["evolve_time_ns"]) for r in rows]
        y = [float(r["mean_counts"]) for r in rows]
        se = [float(r["stderr"]) for r in rows] if "stderr" in rows[0] else None
        n = int(float(rows[0].get("n_shots", 1)))
    except (KeyError, ValueError) as exc:
        raise CliError("data", f"{path}: malformed Larmor table ({exc})") from None
    return pipeline.LarmorDataset(np.array(t), np.array(y), n, None if se is None else np.array(se))


def _detection(cfg: ExperimentConfig):
    """Detection errors from the config, or estimated from ideal ensembles at its noise."""
    if cfg.detection is not None:
        return cfg.detection, None
    det, hist = pipeline.detection_fidelity(cfg.scheme, cfg.n_ideal, cfg.readout, cfg.signal, cfg.cds, cfg.seed)
    return det, hist


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args, cfg: ExperimentConfig):
    chunks, records = [], []
    for block in iter_ensemble(cfg.shots, cfg.evolve_times, cfg.readout, cfg.thermal, cfg.field, cfg.signal,
                               cfg.seed, Prepared.EVOLVED, workers=cfg.workers):
        chunks.append(np.stack([tr.samples for tr in block]).astype(np.float32))
        records.extend(tr.meta for tr in block)
    meta = {"qubit": cfg.qubit, "scheme": cfg.scheme, "evolve_times_ns": list(cfg.evolve_times),
            "shots": cfg.shots}
    b = bundle_io.TraceBundle(np.concatenate(chunks), cfg.readout.sample_rate, cfg.seed, records, meta)
    try:
        bundle_io.write_bundle(args.out, b)
    except OSError as exc:
        raise CliError("io", f"cannot write {args.out}: {exc.strerror}") from None
    return {"traces": b.n_traces, "samples_per_trace": int(b.samples.shape[1])}


def _read_bundle(path):
    try:
        return bundle_io.read_bundle(path)
    except OSError as exc:
        raise CliError("io", f"cannot read {path}: {exc.strerror}") from None
    except bundle_io.BundleError as exc:
        raise CliError("data", str(exc)) from None


def cmd_analyze(args, cfg: ExperimentConfig):
    if not args.traces:
        raise CliError("usage", "analyze needs --traces")
    b = _read_bundle(args.traces)
    scheme_in_bundle = b.meta.get("scheme")
    if scheme_in_bundle is not None and scheme_in_bundle != cfg.scheme:
        raise CliError("data", f"scheme mismatch: bundle was made for {scheme_in_bundle!r}, config asks {cfg.scheme!r}")
    if abs(b.sample_rate - cfg.readout.sample_rate) > 1e-9:
        raise CliError("data", "sample rate of the bundle differs from the config")
    det, hist = pipeline.detection_fidelity(cfg.scheme, cfg.n_ideal, cfg.readout, cfg.signal, cfg.cds, cfg.seed)
    x = b.samples.astype(float)
    if cfg.scheme == "cds":
        resampled = dsp.cds_filter(x, cfg.cds, b.sample_rate)
        counts, _ = dsp.count_events_cds(resampled, det.threshold)
        counts = np.atleast_1d(counts)
    else:
        counts = (dsp.direct_peak_extract(x, 1.0, b.sample_rate) < det.threshold).astype(int)
    times = b.meta.get("evolve_times_ns") or sorted({r.evolve_time for r in b.records})
    n_t = len(times)
    if b.n_traces % n_t:
        raise CliError("data", "trace count is not a multiple of the evolve-time grid")
    per = counts.reshape(-1, n_t)
    mean = per.mean(axis=0)
    se = per.std(axis=0, ddof=1) / np.sqrt(per.shape[0]) if per.shape[0] > 1 else np.zeros(n_t)
    _write_csv(_sibling(args.out, "_larmor.csv"), ["evolve_time_ns", "mean_counts", "stderr", "n_shots"],
               [(t, m, s, per.shape[0]) for t, m, s in zip(times, mean, se)])
    centers = 0.5 * (hist.bin_edges[1:] + hist.bin_edges[:-1])
    _write_csv(_sibling(args.out, "_histogram.csv"), ["bin_low", "bin_high", "bin_center", "count_excited", "count_ground"],
               [(lo, hi, c, int(e), int(g)) for lo, hi, c, e, g in
                zip(hist.bin_edges[:-1], hist.bin_edges[1:], centers, hist.counts_excited, hist.counts_ground)])
    return {"scheme": cfg.scheme, "detection": {"e_t": det.e_t, "e_n": det.e_n, "threshold": det.threshold,
                                                "total_error": det.total_error},
            "larmor": {"evolve_time_ns": list(times), "mean_counts": mean, "stderr": se, "n_shots": per.shape[0]}}


def _fit_doc(f: fit.LarmorFit, data, cfg, det):
    rep = fidelity_report(cfg.readout, f.thermal, det, cfg.scheme)
    return {"fit": f.as_dict(), "visibility_fitted": fit.visibility(f, data.evolve_times, cfg.readout, det),
            "detection": {"e_t": det.e_t, "e_n": det.e_n, "threshold": det.threshold},
            "fidelity": rep.as_dict()}


def _init_fit(cfg: ExperimentConfig) -> fit.LarmorFit:
    return fit.LarmorFit(cfg.thermal.alpha1, cfg.thermal.alpha2, cfg.thermal.beta, cfg.field.sigma, cfg.field.delta_b)


def cmd_fit(args, cfg: ExperimentConfig):
    if not args.data:
        raise CliError("usage", "fit needs --data (a Larmor CSV)")
    data = read_larmor_csv(args.data)
    det, _ = _detection(cfg)
    try:
        f = fit.fit_larmor(data, cfg.readout, det, _init_fit(cfg))
    except fit.FitError as exc:
        raise CliError("fit", str(exc)) from None
    except ValueError as exc:
        raise CliError("data", str(exc)) from None
    return _fit_doc(f, data, cfg, det)


def cmd_calibrate(args, cfg: ExperimentConfig):
    if not args.data:
        raise CliError("usage", "calibrate needs --data (a Larmor CSV)")
    data = read_larmor_csv(args.data)
    if args.traces:
        b = _read_bundle(args.traces)
        rf = dsp.integrated_samples(b.samples.astype(float), b.sample_rate)
    else:
        # stand-in measurement: pi-pulse traces at the configured noise
        rf = pipeline.rf_histogram_samples(1000, cfg.readout, cfg.thermal, cfg.field, cfg.signal, cfg.seed + 1)
    try:
        res = fit.calibrate_iteratively(data, cfg.readout, cfg.signal, _init_fit(cfg), rf, cfg.cds, cfg.scheme,
                                        cfg.n_ideal, seed=cfg.seed)
    except fit.CalibrationError as exc:
        raise CliError("fit", str(exc), iterations=[h.f_meas for h in exc.history]) from None
    except fit.FitError as exc:
        raise CliError("fit", str(exc)) from None
    doc = _fit_doc(res.fit, data, cfg, res.detection)
    doc["noise_sigma"] = res.noise_sigma
    doc["history"] = [{"iteration": h.iteration, "f_meas": h.f_meas, "noise_sigma": h.noise_sigma,
                       "e_t": h.detection.e_t, "e_n": h.detection.e_n} for h in res.history]
    return doc


def cmd_fidelity(args, cfg: ExperimentConfig):
    det, _ = _detection(cfg)
    return fidelity_report(cfg.readout, cfg.thermal, det, cfg.scheme).as_dict()


def cmd_compare(args, cfg: ExperimentConfig):
    c, d = compare_detection_schemes(cfg.readout, cfg.thermal, cfg.signal, cfg.cds, cfg.n_ideal, cfg.seed)
    return {"cds": c.as_dict(), "direct_peak": d.as_dict()}


def cmd_leakage(args, cfg: ExperimentConfig):
    lz = cfg.leakage
    res = leakage.evolve_pulse(lz, lz.max_evolve)
    step = max(1, res.hold_times.size // 1000)
    _write_csv(_sibling(args.out, "_trace.csv"), ["hold_time_ns", "occupation_20S"],
               list(zip(res.hold_times[::step], res.occupation[::step])))
    return {"average_leakage": leakage.average_leakage(lz), "trace_mean": float(res.occupation.mean()),
            "trace_max": float(res.occupation.max()), "trace_min": float(res.occupation.min()),
            "norm_drift": res.norm_drift, "return_probability": res.return_probability}


REPORT_ROWS = ("alpha1", "alpha2", "beta", "sigma", "e_t", "e_n", "r_t0", "r_s", "f_meas")


def cmd_report(args, cfg: ExperimentConfig):
    if not args.fit:
        raise CliError("usage", "report needs --fit (output of the fit or calibrate command)")
    try:
        doc = json.loads(Path(args.fit).read_text(encoding="utf-8"))
        values = {**doc["fit"], **doc["detection"], **doc["fidelity"]}
    except OSError as exc:
        raise CliError("io", f"cannot read {args.fit}: {exc.strerror}") from None
    except (KeyError, json.JSONDecodeError) as exc:
        raise CliError("data", f"{args.fit}: not a fit result ({exc})") from None
    preset = PRESETS[cfg.qubit]
    reference = {"alpha1": preset.thermal.alpha1, "alpha2": preset.thermal.alpha2, "beta": preset.thermal.beta,
                 "sigma": preset.field.sigma, "e_t": preset.detection.e_t, "e_n": preset.detection.e_n,
                 "r_t0": preset.r_t0, "r_s": preset.r_s, "f_meas": preset.f_meas}
    rows = [(k, values[k], reference[k]) for k in REPORT_ROWS]
    _write_csv(_sibling(args.out, "_table.csv"), ["parameter", "value", "reference"], rows)
    width = max(len(k) for k in REPORT_ROWS)
    table = [f"{'parameter':<{width}}  {'value':>10}  {'reference':>10}"]
    table += [f"{k:<{width}}  {v:>10.4f}  {r:>10.4f}" for k, v, r in rows]
    return {"qubit": cfg.qubit, "rows": {k: {"value": v, "reference": r} for k, v, r in rows}, "table": table}


COMMANDS = {
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "fit": cmd_fit,
    "calibrate": cmd_calibrate,
    "fidelity": cmd_fidelity,
    "leakage": cmd_leakage,
    "compare-schemes": cmd_compare,
    "report": cmd_report,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="est-readout", description="Single-shot EST readout simulator and estimator.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--qubit", choices=sorted(PRESETS), help="preset used for keys the config omits")
        p.add_argument("--seed", type=int)
        p.add_argument("--shots", type=int)
        p.add_argument("--scheme", choices=pipeline.SCHEMES)
        p.add_argument("--out", required=True, help="output file")
        if name in ("analyze", "calibrate"):
            p.add_argument("--traces", help="trace bundle")
        if name in ("fit", "calibrate"):
            p.add_argument("--data", help="Larmor CSV (evolve_time_ns, mean_counts, stderr)")
        if name == "report":
            p.add_argument("--fit", help="JSON written by fit or calibrate")
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = _load(args)
        result = COMMANDS[args.command](args, cfg)
        if args.command != "simulate":
            _write_json(args.out, result)
        return 0
    except CliError as exc:
        err = {"category": exc.category, "message": str(exc), **{k: v for k, v in exc.extra.items() if v is not None}}
        print(json.dumps({"error": err}, sort_keys=True, default=_json_default), file=sys.stderr)
        return EXIT_CODES[exc.category]


if __name__ == "__main__":
    sys.exit(main())
