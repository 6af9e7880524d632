"""Flat binary checkpoint container.

Layout: one UTF-8 JSON header line describing metadata and the tensor table
(name, dtype, shape, byte offset), followed by the raw row-major tensor bytes
in the order listed. Writing is fully deterministic, so identical tensors
produce identical files, and round trips are bit-exact.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

MAGIC = "kgt-tensors-v1"


def save_arrays(path: str | Path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    names = sorted(arrays)
    table = []
    offset = 0
    for name in names:
        a = np.ascontiguousarray(arrays[name])
        table.append({"name": name, "dtype": str(a.dtype), "shape": list(a.shape), "offset": offset})
        offset += a.nbytes
    header = {"magic": MAGIC, "meta": meta or {}, "tensors": table}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for name in names:
            fh.write(np.ascontiguousarray(arrays[name]).tobytes())


def load_arrays(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValueError(f"{path}: not a tensor checkpoint ({exc})") from exc
        if header.get("magic") != MAGIC:
            raise ValueError(f"{path}: unexpected checkpoint magic {header.get('magic')!r}")
        blob = fh.read()
    arrays: dict[str, np.ndarray] = {}
    for spec in header["tensors"]:
        dtype = np.dtype(spec["dtype"])
        shape = tuple(spec["shape"])
        n = int(np.prod(shape)) if shape else 1
        start = spec["offset"]
        end = start + n * dtype.itemsize
        arrays[spec["name"]] = np.frombuffer(blob[start:end], dtype=dtype).reshape(shape).copy()
    return arrays, header["meta"]


def arrays_fingerprint(arrays: dict[str, np.ndarray]) -> str:
    """Stable sha256 over names, shapes, dtypes and raw bytes."""
    h = hashlib.sha256()
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name])
        h.update(name.encode("utf-8"))
        h.update(str(a.dtype).encode())
        h.update(repr(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
