"""Input validation helpers shared across the package.

Conventions used everywhere:

* images are 2-D float arrays indexed ``img[y, x]``; the pixel at row y,
  column x sits at continuous coordinate (x, y), one unit per pixel
* vector fields are ``(2, H, W)`` arrays; channel 0 is the x-displacement,
  channel 1 the y-displacement, both in pixel units
* masks are 2-D boolean arrays
"""
from __future__ import annotations

import numpy as np


def check_image(img, *, name: str = "image", min_size: int = 1) -> np.ndarray:
    """Coerce to a finite 2-D float64 array and validate its shape."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < min_size or arr.shape[1] < min_size:
        raise ValueError(
            f"{name} must be at least {min_size}x{min_size}, got {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_field(field, *, name: str = "field") -> np.ndarray:
    """Coerce to a finite (2, H, W) float64 displacement field."""
    arr = np.asarray(field, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] != 2:
        raise ValueError(f"{name} must have shape (2, H, W), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_mask(mask, *, name: str = "mask") -> np.ndarray:
    """Coerce to a 2-D boolean array."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr.astype(bool)


def check_same_shape(a: np.ndarray, b: np.ndarray, *, names=("first", "second")) -> None:
    if a.shape != b.shape:
        raise ValueError(
            f"{names[0]} and {names[1]} must share a shape, "
            f"got {a.shape} vs {b.shape}"
        )


def check_channels(x, *, name: str = "channels") -> np.ndarray:
    """Coerce a channel stack (C, H, W), or a single image, to (C, H, W)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[0] < 1:
        raise ValueError(f"{name} must have shape (C, H, W), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_positive(value: float, *, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value}")
    return value


def check_odd_window(value: int, *, name: str, minimum: int = 3) -> int:
    value = int(value)
    if value < minimum or value % 2 == 0:
        raise ValueError(f"{name} must be an odd integer >= {minimum}, got {value}")
    return value
