"""Trace bundle files: a binary sample block plus a JSON sidecar of ground truth.

Layout of the binary file (little endian)::

    magic      8 bytes   b"ESTTRACE"
    version    uint16
    sample_rate float64  MHz
    n_traces   uint64
    n_samples  uint64    per trace
    seed       int64
    samples    float32[n_traces * n_samples]

The sidecar ``<path>.json`` holds the shot records, evolve times and scheme.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tracegen import ShotRecord

MAGIC = b"ESTTRACE"
VERSION = 1
_HEADER = struct.Struct("<8sHdQQq")


class BundleError(ValueError):
    pass


@dataclass
class TraceBundle:
    samples: np.ndarray  # (n_traces, n_samples) float32
    sample_rate: float
    seed: int
    records: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def n_traces(self) -> int:
        return int(self.samples.shape[0])


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_bundle(path, bundle: TraceBundle) -> None:
    samples = np.ascontiguousarray(bundle.samples, dtype="<f4")
    if samples.ndim != 2:
        raise BundleError("samples must be two-dimensional")
    if bundle.records and len(bundle.records) != samples.shape[0]:
        raise BundleError("one record per trace is required")
    header = _HEADER.pack(MAGIC, VERSION, float(bundle.sample_rate), samples.shape[0], samples.shape[1],
                          int(bundle.seed))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(samples.tobytes())
    side = {"version": VERSION, "meta": bundle.meta, "records": [r.to_dict() for r in bundle.records]}
    with open(sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(side, fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_bundle(path) -> TraceBundle:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise BundleError(f"{path}: file too short for a bundle header")
    magic, version, rate, n, m, seed = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BundleError(f"{path}: not a trace bundle")
    if version != VERSION:
        raise BundleError(f"{path}: unsupported bundle version {version}")
    body = raw[_HEADER.size:]
    if len(body) != 4 * n * m:
        raise BundleError(f"{path}: expected {n}x{m} samples, found {len(body) // 4} values")
    if n == 0 or m == 0:
        raise BundleError(f"{path}: bundle holds no samples")
    samples = np.frombuffer(body, dtype="<f4").reshape(n, m).copy()
    records, meta = [], {}
    side = sidecar_path(path)
    if side.exists():
        doc = json.loads(side.read_text(encoding="utf-8"))
        meta = doc.get("meta", {})
        records = [ShotRecord.from_dict(d) for d in doc.get("records", [])]
    return TraceBundle(samples=samples, sample_rate=rate, seed=seed, records=records, meta=meta)
