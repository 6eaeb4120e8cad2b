"""File formats: CSV matrices and labels, JSON-lines traces and run manifests."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import threading
from pathlib import Path

import numpy as np

from ..errors import ParameterError
from ..gibbs.sampler import TraceRecord

TRACE_SCHEMA_VERSION = 1


class DataFileError(OSError):
    """Unreadable or malformed input file; the message names the path."""


def _fmt(v: float) -> str:
    return repr(float(v))


def write_matrix_csv(path, data, header=None) -> None:
    """``T x d`` array with a header row naming the components."""
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    header = header or [f"y{i + 1}" for i in range(data.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in data:
            w.writerow([_fmt(v) for v in row])


def read_matrix_csv(path) -> tuple[np.ndarray, list]:
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataFileError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if len(rows) < 2:
        raise DataFileError(f"{path}: expected a header row and at least one data row")
    header = rows[0]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise DataFileError(f"{path}: non-numeric entry ({exc})") from exc
    if data.ndim != 2 or data.shape[1] != len(header):
        raise DataFileError(f"{path}: rows do not match the {len(header)}-column header")
    return data, header


def write_labels_csv(path, z, header: str = "mode") -> None:
    """0-based labels written as 1-based integers in a single column."""
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for k in np.asarray(z, dtype=np.int64):
            fh.write(f"{int(k) + 1}\n")


def read_labels_csv(path) -> np.ndarray:
    """Read 1-based labels; returns 0-based labels. Entries ``0`` or empty mean "unlabelled" (-1)."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataFileError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if len(rows) < 2:
        raise DataFileError(f"{path}: expected a header row and labels")
    try:
        vals = [int(r[0]) if r and r[0].strip() else 0 for r in rows[1:]]
    except ValueError as exc:
        raise DataFileError(f"{path}: labels must be integers ({exc})") from exc
    z = np.array(vals, dtype=np.int64) - 1
    if np.any(z < -1):
        raise DataFileError(f"{path}: labels must be positive")
    return z


def write_rows_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


def read_rows_csv(path) -> tuple[list, list]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# ---------------------------------------------------------------------------
# traces

def _array(v):
    return None if v is None else np.asarray(v, dtype=float).tolist()


def _float(v):
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else float(v)


def record_to_dict(rec: TraceRecord, parameters: bool = True) -> dict:
    out = {
        "schema_version": TRACE_SCHEMA_VERSION,
        "chain": rec.chain,
        "iteration": rec.iteration,
        "z": [(np.asarray(z) + 1).tolist() for z in rec.z],
        "active_modes": rec.active_modes,
        "log_joint": _float(rec.log_joint),
        "hyper": {k: float(v) for k, v in rec.hyper.items()},
    }
    if parameters:
        out.update(beta=_array(rec.beta), pi=_array(rec.pi), A=_array(rec.A), Sigma=_array(rec.Sigma),
                   mu=_array(rec.mu), R=_array(rec.R), ard_precisions=_array(rec.ard_precisions),
                   mixture_weights=_array(rec.mixture_weights),
                   mixture_covs=_array(rec.mixture_covs))
    return out


def dict_to_record(d: dict) -> TraceRecord:
    version = d.get("schema_version")
    if version != TRACE_SCHEMA_VERSION:
        raise ParameterError(f"unsupported trace schema version {version!r}")

    def arr(key):
        v = d.get(key)
        return None if v is None else np.asarray(v, dtype=float)

    lj = d.get("log_joint")
    return TraceRecord(
        iteration=int(d["iteration"]), chain=int(d["chain"]),
        z=[np.asarray(z, dtype=np.int64) - 1 for z in d["z"]],
        active_modes=int(d["active_modes"]),
        log_joint=float("nan") if lj is None else float(lj),
        hyper=dict(d["hyper"]), beta=arr("beta"), pi=arr("pi"), A=arr("A"), Sigma=arr("Sigma"),
        mu=arr("mu"), R=arr("R"), ard_precisions=arr("ard_precisions"),
        mixture_weights=arr("mixture_weights"), mixture_covs=arr("mixture_covs"))


class TraceWriter:
    """One JSON-lines file per chain; appends to each file are serialized by a lock."""

    def __init__(self, directory, parameters: bool = True):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.parameters = parameters
        self._locks: dict = {}
        self._guard = threading.Lock()

    def path(self, chain: int) -> Path:
        return self.directory / f"chain_{chain:03d}.jsonl"

    def reset(self, chain: int) -> None:
        self.path(chain).write_text("")

    def append(self, rec: TraceRecord) -> None:
        with self._guard:
            lock = self._locks.setdefault(rec.chain, threading.Lock())
        line = json.dumps(record_to_dict(rec, self.parameters), separators=(",", ":"))
        with lock, open(self.path(rec.chain), "a") as fh:
            fh.write(line + "\n")


def read_trace_file(path) -> list:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DataFileError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        return [dict_to_record(json.loads(s)) for s in lines if s.strip()]
    except (json.JSONDecodeError, KeyError) as exc:
        raise DataFileError(f"{path}: malformed trace record ({exc})") from exc


def read_traces(directory) -> dict:
    """All chain traces in a directory, keyed by chain id."""
    directory = Path(directory)
    files = sorted(directory.glob("chain_*.jsonl"))
    if not files:
        raise DataFileError(f"no trace files (chain_*.jsonl) in {directory}")
    out = {}
    for f in files:
        recs = read_trace_file(f)
        if recs:
            out[recs[0].chain] = recs
    return out


# ---------------------------------------------------------------------------
# manifest

def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config_dict: dict) -> str:
    return hashlib.sha256(canonical_json(config_dict).encode()).hexdigest()


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise DataFileError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParameterError(f"{path}: invalid JSON ({exc})") from exc
