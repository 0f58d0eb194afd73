"""File formats: binary matrix/tensor files, sketch documents, CSV data.

MatrixFile layout (all little-endian)::

    b"CSKL" | version u8 = 1 | element type u8 = 0 (float64) | rank u8 (1, 2, 4)
    | rank x u64 dims | row-major float64 payload

Sketch documents are JSON.  Float arrays are stored as 16-digit hexadecimal
IEEE-754 bit patterns so that values round-trip exactly.
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .sketch import SketchVector
from .statistics import Whitener

MAGIC = b"CSKL"
VERSION = 1
FLOAT64 = 0
SKETCH_FORMAT_VERSION = 1


def write_matrix(path, arr) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    if arr.ndim not in (1, 2, 4):
        raise FormatError(f"MatrixFile supports rank 1, 2 or 4, got {arr.ndim}")
    header = MAGIC + struct.pack("<BBB", VERSION, FLOAT64, arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.tobytes(order="C"))


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 7 or blob[:4] != MAGIC:
        raise FormatError(f"{path}: not a CSKL matrix file")
    version, etype, rank = struct.unpack_from("<BBB", blob, 4)
    if version != VERSION or etype != FLOAT64:
        raise FormatError(f"{path}: unsupported version {version} / element type {etype}")
    if rank not in (1, 2, 4):
        raise FormatError(f"{path}: invalid rank {rank}")
    off = 7 + 8 * rank
    if len(blob) < off:
        raise FormatError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{rank}Q", blob, 7)
    count = int(np.prod(dims, dtype=np.uint64))
    if len(blob) - off != 8 * count:
        raise FormatError(f"{path}: payload has {len(blob) - off} bytes, expected {8 * count}")
    return np.frombuffer(blob, dtype="<f8", offset=off, count=count).reshape(dims).astype(np.float64)


def to_hex(values) -> list:
    bits = np.ascontiguousarray(values, dtype="<f8").reshape(-1).view("<u8")
    return [f"{int(b):016x}" for b in bits]


def from_hex(items) -> np.ndarray:
    try:
        bits = np.array([int(s, 16) for s in items], dtype="<u8")
    except (TypeError, ValueError) as exc:
        raise FormatError(f"bad hexadecimal float: {exc}") from None
    return bits.view("<f8").astype(np.float64)


def write_sketch(path, sk: SketchVector, config: dict | None = None) -> None:
    kind, seed, m, ambient = sk.fingerprint
    doc = {
        "format_version": SKETCH_FORMAT_VERSION,
        "kind": kind,
        "seed": int(seed),
        "m": int(m),
        "ambient": int(ambient),
        "n_samples": int(sk.n_samples),
        "model": sk.model,
        "degree": sk.degree,
        "values": to_hex(sk.values),
        "meta": sk.meta,
        "config": config or {},
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def read_sketch(path) -> SketchVector:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    required = ("format_version", "kind", "seed", "m", "ambient", "n_samples", "values")
    missing = [k for k in required if k not in doc]
    if missing:
        raise FormatError(f"{path}: missing fields {missing}")
    if doc["format_version"] != SKETCH_FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported sketch format {doc['format_version']}")
    fingerprint = (doc["kind"], int(doc["seed"]), int(doc["m"]), int(doc["ambient"]))
    values = from_hex(doc["values"])
    if values.shape[0] != fingerprint[2]:
        raise FormatError(f"{path}: {values.shape[0]} values for m={fingerprint[2]}")
    return SketchVector(
        values,
        fingerprint,
        n_samples=int(doc["n_samples"]),
        model=doc.get("model"),
        degree=doc.get("degree"),
        meta=doc.get("meta") or {},
    )


def write_whitener(path, w: Whitener) -> None:
    write_matrix(path, np.vstack([w.mean[None, :], w.transform]))


def read_whitener(path) -> Whitener:
    arr = read_matrix(path)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] + 1:
        raise FormatError(f"{path}: whitener file must hold a (d+1) x d matrix")
    return Whitener(mean=arr[0].copy(), transform=arr[1:].copy())


def read_csv(path, header: bool = False) -> np.ndarray:
    try:
        x = np.loadtxt(path, delimiter=",", comments="#", skiprows=1 if header else 0, ndmin=2)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return x


def iter_csv(path, chunk: int, header: bool = False):
    """Yield blocks of at most ``chunk`` rows without loading the whole file."""
    rows = []
    with open(path) as fh:
        if header:
            next(fh, None)
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError as exc:
                raise FormatError(f"{path}: {exc}") from None
            if len(rows) == chunk:
                yield np.array(rows)
                rows = []
    if rows:
        yield np.array(rows)


def write_csv(path, x, config: dict | None = None) -> None:
    with open(path, "w") as fh:
        for k, v in (config or {}).items():
            fh.write(f"# {k}={v}\n")
        np.savetxt(fh, np.asarray(x), delimiter=",", fmt="%.17g")


def read_data(path, header: bool = False) -> np.ndarray:
    """Load samples from CSV or from a rank-2 MatrixFile (by content sniffing)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == MAGIC:
        x = read_matrix(path)
        if x.ndim != 2:
            raise FormatError(f"{path}: data must be a rank-2 matrix")
        return x
    return read_csv(path, header=header)


def load_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    cfg = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        cfg[key.replace("-", "_")] = value
    return cfg


def write_json(path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=1, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, os.PathLike):
        return os.fspath(obj)
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")
