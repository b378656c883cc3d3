"""Array-in, array-out bridge to the textkernel toolchain.

Training loops hand over contiguous numpy buffers; this package round-trips
them through the `textkernel` command line (NPY maps in, canonical JSON
out), so results are exactly what the native tool produces, byte for byte.
Because the work happens in a child process, the interpreter lock is free
while an expansion runs and data-prep threads can overlap it.

Inputs are validated strictly: wrong dtype, wrong rank, or a non-contiguous
buffer raises immediately, naming the offending argument. Nothing is copied
or coerced silently.
"""

from __future__ import annotations

import json
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

__all__ = ["expand_py", "distance_label_py", "native_version", "NativeToolError"]


class NativeToolError(RuntimeError):
    """The textkernel CLI failed or is not installed."""


def _cli_command() -> list[str]:
    exe = shutil.which("textkernel")
    if exe:
        return [exe]
    return [sys.executable, "-m", "textkernel.cli"]


def _run_cli(*args: str) -> str:
    cmd = [*_cli_command(), *args]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise NativeToolError(
            f"{' '.join(cmd)} failed with code {proc.returncode}:\n{proc.stderr.strip()}"
        )
    return proc.stdout


_version_cache: str | None = None


def native_version() -> str:
    """Version string of the native tool this package is bridging to."""
    global _version_cache
    if _version_cache is None:
        _version_cache = _run_cli("--version").strip()
    return _version_cache


def _check_array(name: str, arr, dtype: np.dtype, ndim: int = 2) -> np.ndarray:
    if not isinstance(arr, np.ndarray):
        raise TypeError(f"{name}: expected a numpy array, got {type(arr).__name__}")
    if arr.dtype != dtype:
        raise ValueError(f"{name}: expected dtype {np.dtype(dtype).name}, got {arr.dtype.name}")
    if arr.ndim != ndim:
        raise ValueError(f"{name}: expected a {ndim}-D map, got shape {arr.shape}")
    if not arr.flags["C_CONTIGUOUS"]:
        raise ValueError(f"{name}: buffer must be C-contiguous; pass np.ascontiguousarray(...) yourself")
    return arr


_CONFIG_FLAGS = {
    "kernel_threshold": "--kernel-thresh",
    "region_threshold": "--region-thresh",
    "min_kernel_area": "--min-area",
    "score_threshold": "--score-thresh",
    "distance_scale": "--scale",
    "fixed_delta": "--fixed-delta",
    "threads": "--threads",
}


def expand_py(
    kernel: np.ndarray,
    distance: np.ndarray,
    region: np.ndarray,
    config: dict | None = None,
) -> list[tuple[np.ndarray, float]]:
    """Run kernel expansion on float32 maps; returns [(points, score), ...].

    `config` may carry `method` ("bg", "pa", or "fixed") plus any of
    kernel_threshold / region_threshold / min_kernel_area / score_threshold /
    distance_scale / fixed_delta / threads. Points come back as an (N, 2)
    float64 array in x, y pixel order, exactly as the native tool wrote them.
    """
    config = dict(config or {})
    kernel = _check_array("kernel", kernel, np.float32)
    distance = _check_array("distance", distance, np.float32)
    region = _check_array("region", region, np.float32)
    if not (kernel.shape == distance.shape == region.shape):
        raise ValueError(
            f"kernel/distance/region shapes differ: {kernel.shape} vs "
            f"{distance.shape} vs {region.shape}"
        )
    method = str(config.pop("method", "bg"))
    args = ["--method", method]
    for key, flag in _CONFIG_FLAGS.items():
        if key in config:
            args += [flag, str(config.pop(key))]
    if config:
        raise ValueError(f"config: unknown keys {sorted(config)}")

    with tempfile.TemporaryDirectory(prefix="tk_expand_") as tmp:
        tmp_path = Path(tmp)
        np.save(tmp_path / "kernel.npy", kernel)
        np.save(tmp_path / "distance.npy", distance)
        np.save(tmp_path / "region.npy", region)
        _run_cli("expand", "--in-dir", tmp, "--out-dir", tmp, *args)
        doc = json.loads((tmp_path / "detections.json").read_text())
    return [
        (np.asarray(inst["points"], dtype=np.float64), float(inst["score"]))
        for inst in doc["instances"]
    ]


def distance_label_py(ids: np.ndarray) -> np.ndarray:
    """Distance-to-boundary label map for an int32 instance-id map.

    Output is the float32 map the native tool writes: per instance pixel,
    the exact Euclidean distance to the nearest non-instance pixel.
    """
    ids = _check_array("ids", ids, np.int32)
    with tempfile.TemporaryDirectory(prefix="tk_distlabel_") as tmp:
        tmp_path = Path(tmp)
        np.save(tmp_path / "ids.npy", ids)
        _run_cli("labelgen", "--from-ids", str(tmp_path / "ids.npy"), "--out-dir", tmp)
        return np.load(tmp_path / "distance.npy")


__version__ = "0.1.0"
