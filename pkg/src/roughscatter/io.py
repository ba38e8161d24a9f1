"""Persistence: CSV tables, JSON reports and binary grid files.

Binary grid layout (little endian)::

    8 bytes   magic b"RSGRID1\\0"
    4 bytes   uint32 header length L
    L bytes   UTF-8 JSON header: shape, dtype ('<f8' or '<c8'), spacing,
              plus free keys (seed, frame, omegas, ...)
    payload   row-major array of the declared dtype and shape
"""
from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"RSGRID1\0"
FLOAT_FMT = "%.17g"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path, obj) -> Path:
    """Deterministic JSON (sorted keys, non-finite floats as null)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def write_csv(path, columns: dict) -> Path:
    """Comma-separated table with a header row and 17-significant-digit floats."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    cols = [np.ravel(np.asarray(columns[n])) for n in names]
    n = {c.size for c in cols}
    if len(n) > 1:
        raise ValueError("all CSV columns must have the same length")

    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return FLOAT_FMT % v
        return str(v)

    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path) -> dict:
    """Read a table written by :func:`write_csv` into float arrays where possible."""
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    names, body = rows[0], rows[1:]
    out = {}
    for j, n in enumerate(names):
        col = [r[j] for r in body]
        try:
            out[n] = np.array([float(v) for v in col])
        except ValueError:
            out[n] = np.array(col)
    return out


def write_grid(path, array: np.ndarray, header: dict | None = None) -> Path:
    """Binary grid file; complex data are stored as ``<c8`` (complex64), real data as ``<f8``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    a = np.asarray(array)
    dtype = np.dtype("<c8") if np.iscomplexobj(a) else np.dtype("<f8")
    a = np.ascontiguousarray(a, dtype=dtype)
    head = dict(header or {})
    head.update(shape=list(a.shape), dtype=dtype.str)
    blob = json.dumps(_jsonable(head), sort_keys=True).encode()
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(a.tobytes(order="C"))
    return path


def read_grid(path):
    """Return ``(array, header)`` from a binary grid file."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a grid file")
    (n,) = struct.unpack("<I", data[8:12])
    head = json.loads(data[12:12 + n])
    a = np.frombuffer(data[12 + n:], dtype=np.dtype(head["dtype"])).reshape(head["shape"])
    return a, head


def write_realization(path, realization) -> Path:
    g = realization.grid
    return write_grid(path, realization.values, {"spacing": [g.d1, g.d2], "seed": _seed_repr(realization.seed),
                                                 "kind": "interface"})


def write_field(path, field) -> Path:
    f = field.to_space()
    g = f.grid
    frame = None if f.frame is None else {"t0": f.frame.t0, "x0": list(f.frame.x0), "k0": list(f.frame.k0),
                                          "eps": f.frame.eps, "tag": f.frame.tag}
    return write_grid(path, f.data, {"spacing": [g.d1, g.d2], "omegas": f.omegas, "dt": f.time.dt,
                                     "nt": f.time.n, "depth": f.depth, "frame": frame, "kind": "field"})


def _seed_repr(seed):
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": str(seed.entropy), "spawn_key": list(seed.spawn_key)}
    if isinstance(seed, tuple) and len(seed) == 2:
        return {"entropy": str(seed[0]), "spawn_key": list(seed[1])}
    return seed if seed is None else str(seed)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
