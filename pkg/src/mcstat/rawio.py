"""
Raw frame files.

* ``.f32``: 32-bit little-endian float planes, row-major, frames back to back,
  with a JSON sidecar (``<file>.json``) holding dims, frame count, model
  parameters, seed and motion path.
* ``.y8``: 8-bit grayscale planes (e.g. the Y plane of a planar YUV file with
  chroma stripped), dims supplied by the caller.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .model import ModelParams
from .synth import FrameSequence, MotionPath


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_sequence(seq: FrameSequence, path) -> None:
    """Write frames as float32 planes plus the JSON sidecar."""
    T1, H, W = seq.frames.shape
    atomic_write_bytes(path, seq.frames.astype("<f4").tobytes())
    meta = {
        "format": "f32le",
        "height": H,
        "width": W,
        "frames": T1,
        "T": T1 - 1,
        "seed": seq.seed,
        "params": seq.params.to_dict() if seq.params is not None else None,
        "path": seq.path.to_dict() if seq.path is not None else None,
        **seq.meta,
    }
    atomic_write_text(sidecar_path(path), json.dumps(meta, indent=2))


def read_sequence(path) -> FrameSequence:
    meta = json.loads(sidecar_path(path).read_text())
    H, W, n = meta["height"], meta["width"], meta["frames"]
    data = np.fromfile(path, dtype="<f4")
    if data.size != n * H * W:
        raise ValueError(f"{path}: expected {n * H * W} samples, found {data.size}")
    frames = data.reshape(n, H, W).astype(float)
    params = ModelParams.from_dict(meta["params"]) if meta.get("params") else None
    path_obj = MotionPath(meta["path"]["increments"]) if meta.get("path") else MotionPath(np.zeros((n - 1, 2)))
    extra = {k: v for k, v in meta.items() if k not in {"format", "height", "width", "frames", "T", "seed", "params", "path"}}
    return FrameSequence(frames, path_obj, params, meta.get("seed"), extra)


def export_y8(frames: np.ndarray, path, offset: float = 128.0) -> None:
    """Quantize to 8 bits (``round(f + offset)`` clamped to 0..255)."""
    q = np.clip(np.rint(np.asarray(frames) + offset), 0, 255).astype(np.uint8)
    atomic_write_bytes(path, q.tobytes())


def read_y8(path, width: int, height: int, frames: int | None = None, offset: float = 0.0) -> np.ndarray:
    """Read 8-bit grayscale planes as a float array of shape ``(n, height, width)``."""
    data = np.fromfile(path, dtype=np.uint8)
    plane = width * height
    if plane <= 0:
        raise ValueError("width and height must be positive")
    available = data.size // plane
    if frames is None:
        frames = available
    if frames > available:
        raise ValueError(f"{path}: requested {frames} frames, file holds {available}")
    return data[: frames * plane].reshape(frames, height, width).astype(float) - offset
