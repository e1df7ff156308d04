"""Flat ``key = value`` experiment configuration.

Keys follow the readout-parameter table names with their units, e.g.::

    qubit = "QL"
    tau_out_us = 16
    t1_us = 337
    alpha1 = 0.081
    evolve_times_ns = [0.0, 0.5, 1.0]

Values are Python literals; bare words are read as strings. ``#`` starts a
comment. Every key is optional: missing values come from the preset named by
``qubit`` (``QL`` when absent).
"""
from __future__ import annotations

import ast
import math
import re
from dataclasses import dataclass, field as dc_field, replace

from .dsp import CdsConfig
from .leakage import LzConfig
from .model import DetectionFidelity, FieldParams, ReadoutConfig, ThermalParams
from .pipeline import SCHEMES
from .presets import PRESETS, larmor_times
from .tracegen import SignalModel


class ConfigError(ValueError):
    def __init__(self, message, line: int | None = None, key: str | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line
        self.key = key


# key -> (section, attribute)
_FIELDS = {
    "tau_out_us": ("readout", "tau_out"),
    "tau_in_us": ("readout", "tau_in"),
    "t1_us": ("readout", "t1"),
    "meas_window_us": ("readout", "meas_window"),
    "sampling_rate_mhz": ("readout", "sample_rate"),
    "cds_rate_khz": ("readout", "cds_rate"),
    "cds_gate_width_us": ("readout", "cds_gate_width"),
    "cds_separation_us": ("cds", "gate_baseline_separation"),
    "alpha1": ("thermal", "alpha1"),
    "alpha2": ("thermal", "alpha2"),
    "beta": ("thermal", "beta"),
    "delta_b_mhz": ("field", "delta_b"),
    "sigma_mhz": ("field", "sigma"),
    "level_occupied": ("signal", "level_occupied"),
    "level_empty": ("signal", "level_empty"),
    "noise_sigma": ("signal", "noise_sigma"),
    "lowpass_cutoff_mhz": ("signal", "lowpass_cutoff"),
    "e_t": ("detection", "e_t"),
    "e_n": ("detection", "e_n"),
    "lz_tunnel_coupling_ghz": ("leakage", "tunnel_coupling"),
    "lz_delta_b_mhz": ("leakage", "delta_b"),
    "lz_rise_time_ps": ("leakage", "rise_time"),
    "lz_detuning_start_ghz": ("leakage", "detuning_start"),
    "lz_detuning_end_ghz": ("leakage", "detuning_end"),
    "lz_max_evolve_ns": ("leakage", "max_evolve"),
    "lz_dt_ps": ("leakage", "dt"),
    "lz_coupling_factor": ("leakage", "coupling_factor"),
}
_TOP = {"qubit": str, "scheme": str, "seed": int, "shots": int, "repeats": int, "n_ideal": int,
        "evolve_times_ns": list, "workers": int}
_LINE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*?)\s*$")

# leakage preset: coupling enhanced by sqrt(2), detuning +-80 GHz
LEAKAGE_DEFAULT = LzConfig(coupling_factor=math.sqrt(2.0))


@dataclass(frozen=True)
class ExperimentConfig:
    qubit: str
    readout: ReadoutConfig
    thermal: ThermalParams
    field: FieldParams
    signal: SignalModel
    cds: CdsConfig
    scheme: str = "cds"
    seed: int = 0
    shots: int = 2000
    repeats: int = 1
    n_ideal: int = 15000
    workers: int = 1
    evolve_times: tuple = dc_field(default_factory=lambda: tuple(larmor_times()))
    detection: DetectionFidelity | None = None
    leakage: LzConfig = LEAKAGE_DEFAULT

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}", key="scheme")
        if self.shots < 1:
            raise ConfigError("empty ensemble", key="shots")
        if self.repeats < 1 or self.n_ideal < 1 or self.workers < 1:
            raise ConfigError("repeats, n_ideal and workers must be >= 1")
        times = list(self.evolve_times)
        if not times or any(t < 0 for t in times) or times != sorted(times):
            raise ConfigError("evolve_times_ns must be a non-empty ascending list of non-negative times",
                              key="evolve_times_ns")


def _parse_value(raw: str, lineno: int, key: str):
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_\-]*", raw):
            return raw
        raise ConfigError(f"cannot parse value {raw!r} for {key!r}", lineno, key) from None


def parse_lines(text: str) -> dict:
    """Key/value pairs with their line numbers: ``{key: (value, line)}``."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        m = _LINE.match(body)
        if not m:
            raise ConfigError(f"expected 'key = value', got {line.strip()!r}", lineno)
        key, raw = m.group(1), m.group(2)
        if key in out:
            raise ConfigError(f"duplicate key {key!r}", lineno, key)
        if key not in _FIELDS and key not in _TOP:
            raise ConfigError(f"unknown key {key!r}", lineno, key)
        out[key] = (_parse_value(raw, lineno, key), lineno)
    return out


def _number(value, key, lineno):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key!r} must be a number", lineno, key)
    return float(value)


def build_config(pairs: dict, overrides: dict | None = None) -> ExperimentConfig:
    """Assemble an :class:`ExperimentConfig` from parsed pairs on top of a preset."""
    pairs = dict(pairs)
    for k, v in (overrides or {}).items():
        if v is not None:
            pairs[k] = (v, None)
    qubit = str(pairs.get("qubit", ("QL", None))[0])
    if qubit not in PRESETS:
        raise ConfigError(f"unknown qubit {qubit!r}; expected one of {sorted(PRESETS)}", pairs.get("qubit", (0, None))[1], "qubit")
    preset = PRESETS[qubit]
    sections = {
        "readout": dict(preset.readout.__dict__),
        "thermal": dict(preset.thermal.__dict__),
        "field": dict(preset.field.__dict__),
        "signal": dict(preset.signal.__dict__),
        "cds": {},
        "detection": {},
        "leakage": dict(LEAKAGE_DEFAULT.__dict__),
    }
    for key, (value, lineno) in pairs.items():
        if key in _FIELDS:
            section, attr = _FIELDS[key]
            sections[section][attr] = _number(value, key, lineno)
    top = {}
    for key, kind in _TOP.items():
        if key in pairs and key != "qubit":
            value, lineno = pairs[key]
            if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
                raise ConfigError(f"{key!r} must be an integer", lineno, key)
            if kind is str and not isinstance(value, str):
                raise ConfigError(f"{key!r} must be a string", lineno, key)
            if kind is list:
                if not isinstance(value, (list, tuple)):
                    raise ConfigError(f"{key!r} must be a list", lineno, key)
                value = tuple(_number(v, key, lineno) for v in value)
            top[key] = value

    def make(cls, section, key_hint):
        try:
            return cls(**sections[section])
        except (TypeError, ValueError) as exc:
            # point at the offending key when the message names its attribute
            key, line = key_hint, None
            for k, (sec, attr) in _FIELDS.items():
                if sec == section and attr in str(exc) and k in pairs:
                    key, line = k, pairs[k][1]
                    break
            raise ConfigError(f"invalid {section} settings: {exc}", line, key) from None

    readout = make(ReadoutConfig, "readout", "tau_out_us")
    cds_sep = sections["cds"].get("gate_baseline_separation", 1e3 / readout.cds_rate)
    try:
        cds = CdsConfig(readout.cds_rate, readout.cds_gate_width, cds_sep)
    except ValueError as exc:
        raise ConfigError(f"invalid CDS settings: {exc}", key="cds_separation_us") from None
    det = None
    if sections["detection"]:
        if set(sections["detection"]) != {"e_t", "e_n"}:
            raise ConfigError("e_t and e_n must be given together", key="e_t")
        det = make(DetectionFidelity, "detection", "e_t")
    if "evolve_times_ns" in top:
        top["evolve_times"] = top.pop("evolve_times_ns")
    try:
        return ExperimentConfig(qubit=qubit, readout=readout, thermal=make(ThermalParams, "thermal", "alpha1"),
                                field=make(FieldParams, "field", "delta_b_mhz"),
                                signal=make(SignalModel, "signal", "noise_sigma"), cds=cds, detection=det,
                                leakage=make(LzConfig, "leakage", "lz_dt_ps"), **top)
    except ConfigError as exc:
        key = exc.key
        line = pairs.get("evolve_times_ns" if key == "evolve_times_ns" else key or "", (None, None))[1]
        raise ConfigError(str(exc), line, key) from None


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    return build_config(parse_lines(text), overrides)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), overrides)


def dump_config(cfg: ExperimentConfig) -> str:
    """Text form that :func:`parse_config` reads back to an equal configuration."""
    values = {"qubit": cfg.qubit, "scheme": cfg.scheme, "seed": cfg.seed, "shots": cfg.shots,
              "repeats": cfg.repeats, "n_ideal": cfg.n_ideal, "workers": cfg.workers,
              "evolve_times_ns": list(cfg.evolve_times)}
    objects = {"readout": cfg.readout, "thermal": cfg.thermal, "field": cfg.field, "signal": cfg.signal,
               "cds": cfg.cds, "leakage": cfg.leakage}
    if cfg.detection is not None:
        objects["detection"] = cfg.detection
    for key, (section, attr) in _FIELDS.items():
        if section in objects:
            values[key] = getattr(objects[section], attr)
    return "".join(f"{k} = {v!r}\n" for k, v in values.items())


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
