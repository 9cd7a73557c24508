"""Flat binary containers with a JSON sidecar header.

A bundle ``name`` is stored as ``name.bin`` (the arrays' little-endian
float64 bytes, concatenated in header order) and ``name.json`` (shapes,
metadata and a sha256 checksum of the binary payload).
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np


def _payload(arrays: dict[str, np.ndarray]) -> bytes:
    return b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays.values())


def checksum(arrays: dict[str, np.ndarray]) -> str:
    return hashlib.sha256(_payload(arrays)).hexdigest()


def save_bundle(path, arrays: dict[str, np.ndarray], meta: dict) -> tuple[Path, Path]:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = _payload(arrays)
        header = {
            "meta": meta,
            "arrays": [[k, list(np.shape(a))] for k, a in arrays.items()],
            "dtype": "<f8",
            "checksum": hashlib.sha256(payload).hexdigest(),
        }
        path.with_suffix(".bin").write_bytes(payload)
        path.with_suffix(".json").write_text(json.dumps(header, indent=2, sort_keys=True))
    except OSError as exc:
        raise OSError(f"cannot write bundle {path}: {exc}") from exc
    return path.with_suffix(".bin"), path.with_suffix(".json")


def load_bundle(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    payload = path.with_suffix(".bin").read_bytes()
    if hashlib.sha256(payload).hexdigest() != header["checksum"]:
        raise ValueError(f"checksum mismatch for {path}")
    raw = np.frombuffer(payload, dtype="<f8")
    arrays, pos = {}, 0
    for name, shape in header["arrays"]:
        count = int(np.prod(shape, dtype=int))
        arrays[name] = raw[pos : pos + count].reshape(shape).copy()
        pos += count
    return arrays, header["meta"]
