"""On-disk formats: TMRI rasters, PGM previews, deterministic JSON.

TMRI is a minimal little-endian binary raster: magic ``TMRI``, version u16,
dtype tag u8 (1 = float32), channel count u8, width u32, height u32, then
the samples channel by channel in row-major order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

_MAGIC = b"TMRI"
_VERSION = 1
_DTYPE_F32 = 1
_HEADER = struct.Struct("<4sHBBII")


def write_raster(path, array) -> None:
    """Write a (C, H, W) or (H, W) array as float32 TMRI."""
    arr = np.asarray(array, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"expected (C, H, W) or (H, W), got shape {arr.shape}")
    channels, height, width = arr.shape
    if channels > 255:
        raise ValueError(f"too many channels: {channels}")
    header = _HEADER.pack(_MAGIC, _VERSION, _DTYPE_F32, channels, width, height)
    data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    Path(path).write_bytes(header + data)


def read_raster(path) -> np.ndarray:
    """Read a TMRI file; returns float64 with shape (C, H, W)."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, dtype, channels, width, height = _HEADER.unpack_from(blob)
    if magic != _MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    if dtype != _DTYPE_F32:
        raise ValueError(f"{path}: unsupported dtype tag {dtype}")
    count = channels * height * width
    expected = _HEADER.size + 4 * count
    if len(blob) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, got {len(blob)}")
    data = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size, count=count)
    return data.astype(np.float64).reshape(channels, height, width)


def write_pgm(path, img, *, max_value: float | None = None) -> None:
    """Write a nonnegative image as 8-bit binary PGM with a JSON sidecar.

    Values are scaled linearly so ``max_value`` (default: the image maximum)
    maps to 255; the sidecar records that scale for unambiguous readback.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {arr.shape}")
    if arr.min() < 0:
        raise ValueError("PGM export expects nonnegative values")
    peak = float(arr.max()) if max_value is None else float(max_value)
    if peak <= 0:
        scaled = np.zeros_like(arr)
        peak = 0.0
    else:
        scaled = np.clip(arr / peak, 0.0, 1.0)
    quantized = np.rint(scaled * 255.0).astype(np.uint8)
    h, w = arr.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    path = Path(path)
    path.write_bytes(header + quantized.tobytes())
    write_json(path.with_suffix(path.suffix + ".json"), {"max": peak})


def read_pgm(path) -> tuple[np.ndarray, float]:
    """Read a PGM written by :func:`write_pgm`; returns (image, max)."""
    path = Path(path)
    blob = path.read_bytes()
    parts = blob.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h = (int(t) for t in parts[1].split())
    if parts[2] != b"255":
        raise ValueError(f"{path}: expected maxval 255")
    data = np.frombuffer(parts[3][: w * h], dtype=np.uint8).reshape(h, w)
    sidecar = read_json(path.with_suffix(path.suffix + ".json"))
    peak = float(sidecar["max"])
    return data.astype(np.float64) / 255.0 * peak, peak


def write_json(path, obj) -> None:
    """Deterministic JSON: sorted keys, fixed layout, trailing newline."""
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    Path(path).write_text(text)


def read_json(path):
    return json.loads(Path(path).read_text())
