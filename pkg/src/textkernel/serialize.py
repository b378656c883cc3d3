"""Canonical on-disk formats: sorted-key JSON with floats fixed to 1e-6
precision, and little-endian C-order NPY maps. Every artifact written
through here is byte-reproducible for identical inputs.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def round_floats(obj, ndigits: int = 6):
    if isinstance(obj, float):
        v = round(obj, ndigits)
        return 0.0 if v == 0 else v  # avoid -0.0 flipping bytes
    if isinstance(obj, dict):
        return {k: round_floats(v, ndigits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v, ndigits) for v in obj]
    if isinstance(obj, (np.floating,)):
        return round_floats(float(obj), ndigits)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def dump_json(obj, path) -> None:
    text = json.dumps(round_floats(obj), sort_keys=True, indent=2)
    Path(path).write_text(text + "\n")


def load_json(path) -> dict:
    return json.loads(Path(path).read_text())


_DTYPES = {"float32": "<f4", "uint8": "u1", "int32": "<i4"}


def save_map(path, array: np.ndarray, dtype: str) -> None:
    if dtype not in _DTYPES:
        raise ValueError(f"unsupported map dtype {dtype}")
    np.save(path, np.ascontiguousarray(array).astype(_DTYPES[dtype]))


def load_map(path) -> np.ndarray:
    return np.load(path)
