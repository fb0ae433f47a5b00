"""Synthetic tagged-MRI movies: anatomy, motion, noise, and assembly.

A movie is built from a smooth disk-union anatomy, a Gaussian-smoothed random
elastic displacement field ramped linearly over time, and two orthogonal tag
patterns that fade frame by frame. Frame n of each tag direction is the
frame-0 tagged scene resampled through the frame-n field, so the stored
fields are exactly the deformations a registration method should recover.

Frames keep the signed tagged intensity. Additive Gaussian noise models the
high-SNR magnitude regime; :func:`add_rician_noise` is the full magnitude
noise model and is exposed separately for experiments that want it.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np
from scipy.ndimage import gaussian_filter

from .image_ops import warp_image
from .tagging import SpammParams, frame_intensity
from .validation import check_image, check_mask

_MASK64 = (1 << 64) - 1


def derive_seed(master_seed: int, index: int) -> int:
    """Mix a master seed and a task index into an independent 64-bit seed.

    SplitMix64 finalizer over ``master + golden * (index + 1)``; cheap,
    deterministic, and free of correlations between adjacent indices.
    """
    z = (int(master_seed) + 0x9E3779B97F4A7C15 * (int(index) + 1)) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass(frozen=True)
class AnatomyParams:
    """Disk-union anatomy: how many disks, how large, on what grid."""

    size: int = 96
    num_disks: tuple[int, int] = (1, 3)
    radius: tuple[float, float] = (14.0, 26.0)
    smooth_sigma: float = 1.0

    def __post_init__(self) -> None:
        if self.size < 16:
            raise ValueError(f"size must be >= 16, got {self.size}")
        lo, hi = self.num_disks
        if not (1 <= lo <= hi):
            raise ValueError(f"invalid num_disks range {self.num_disks}")
        rlo, rhi = self.radius
        if not (0 < rlo <= rhi):
            raise ValueError(f"invalid radius range {self.radius}")
        if self.size - 1 - 2 * rhi <= 0:
            raise ValueError(
                f"max radius {rhi} leaves no room for centers on a "
                f"{self.size}px grid"
            )
        if self.smooth_sigma < 0:
            raise ValueError("smooth_sigma must be >= 0")


@dataclass(frozen=True)
class MotionParams:
    """Random elastic motion: peak displacement, smoothness, frame count."""

    amplitude: float = 3.0
    smoothness_sigma: float = 12.0
    num_frames: int = 40

    def __post_init__(self) -> None:
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")
        if self.smoothness_sigma <= 0:
            raise ValueError("smoothness_sigma must be positive")
        if self.num_frames < 1:
            raise ValueError("num_frames must be >= 1")


@dataclass
class Movie:
    """One simulated two-direction tagged movie with its ground truth."""

    frames_h: np.ndarray        # (N, H, W) horizontal-tag frames
    frames_v: np.ndarray        # (N, H, W) vertical-tag frames
    fields: np.ndarray          # (N, 2, H, W) ground-truth displacement fields
    mask: np.ndarray            # (H, W) bool anatomy support at frame 0
    anatomy: np.ndarray         # (H, W) smoothed anatomy map in [0, 1]
    params_h: SpammParams
    params_v: SpammParams
    noise_sigma: float = 0.0
    meta: dict = dataclass_field(default_factory=dict)

    @property
    def num_frames(self) -> int:
        return self.frames_h.shape[0]


def make_anatomy(params: AnatomyParams, rng: np.random.Generator):
    """Draw a disk-union anatomy.

    Returns ``(anatomy, mask)``: the binary union of the disks and its
    Gaussian-softened float version in [0, 1].
    """
    size = params.size
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    mask = np.zeros((size, size), dtype=bool)
    count = int(rng.integers(params.num_disks[0], params.num_disks[1] + 1))
    margin = params.radius[1]
    for _ in range(count):
        r = rng.uniform(params.radius[0], params.radius[1])
        cx = rng.uniform(margin, size - 1 - margin)
        cy = rng.uniform(margin, size - 1 - margin)
        mask |= (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r
    anatomy = gaussian_filter(mask.astype(np.float64), params.smooth_sigma)
    return np.clip(anatomy, 0.0, 1.0), mask


def make_motion_fields(params: MotionParams, mask, rng: np.random.Generator) -> np.ndarray:
    """Draw a smooth random field and ramp it linearly over the frames.

    White noise per component is Gaussian-smoothed, then rescaled so the
    largest displacement magnitude over the mask at the final frame equals
    ``amplitude`` exactly; the mask ties the amplitude to the anatomy the
    field will move rather than to some empty corner of the grid. An
    all-false mask falls back to the full grid. Frame 0 is the zero field.
    """
    mask = check_mask(mask)
    h, w = mask.shape
    n = params.num_frames
    base = rng.standard_normal((2, h, w))
    base[0] = gaussian_filter(base[0], params.smoothness_sigma)
    base[1] = gaussian_filter(base[1], params.smoothness_sigma)
    mag = np.sqrt(base[0] ** 2 + base[1] ** 2)
    peak = float(mag[mask].max()) if mask.any() else float(mag.max())
    if params.amplitude == 0.0 or peak == 0.0:
        base[:] = 0.0
    else:
        base *= params.amplitude / peak
    fields = np.zeros((n, 2, h, w), dtype=np.float64)
    if n > 1:
        ramp = np.arange(n, dtype=np.float64) / (n - 1)
        fields[:] = ramp[:, None, None, None] * base[None]
    return fields


def add_rician_noise(img, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Magnitude of the image plus circular complex Gaussian noise.

    ``sigma = 0`` reduces to ``|img|``: this operation is where a signed
    intensity becomes a magnitude image. Pure-noise background comes out
    Rayleigh with mean ``sigma * sqrt(pi / 2)``.
    """
    img = check_image(img, name="img")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0.0:
        return np.abs(img)
    g1 = rng.standard_normal(img.shape)
    g2 = rng.standard_normal(img.shape)
    return np.hypot(img + sigma * g1, sigma * g2)


def _noisy_signed(img: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if sigma == 0.0:
        return img.copy()
    return img + sigma * rng.standard_normal(img.shape)


def make_movie(
    anatomy_params: AnatomyParams,
    motion_params: MotionParams,
    params_h: SpammParams,
    params_v: SpammParams,
    noise_sigma: float,
    rng: np.random.Generator,
) -> Movie:
    """Simulate one movie: anatomy, fields, then both tag directions.

    For each frame n the faded tagged scene is computed in frame-0 geometry
    and resampled through the frame-n field, so ``fields[n]`` maps frame-0
    coordinates onto frame n. Noise draws are independent per frame and per
    tag direction.
    """
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    if params_h.direction != "horizontal" or params_v.direction != "vertical":
        raise ValueError("params_h must be horizontal and params_v vertical")
    anatomy, mask = make_anatomy(anatomy_params, rng)
    fields = make_motion_fields(motion_params, mask, rng)
    n_frames = motion_params.num_frames
    shape = (n_frames,) + anatomy.shape
    frames_h = np.empty(shape, dtype=np.float64)
    frames_v = np.empty(shape, dtype=np.float64)
    for n in range(n_frames):
        for params, frames in ((params_h, frames_h), (params_v, frames_v)):
            tagged = frame_intensity(anatomy, params, n)
            warped = warp_image(tagged, fields[n]) if n > 0 else tagged
            frames[n] = _noisy_signed(warped, noise_sigma, rng)
    return Movie(
        frames_h=frames_h,
        frames_v=frames_v,
        fields=fields,
        mask=mask,
        anatomy=anatomy,
        params_h=params_h,
        params_v=params_v,
        noise_sigma=noise_sigma,
    )


def make_static_phantom(
    params_h: SpammParams,
    params_v: SpammParams,
    num_frames: int,
    noise_sigma: float,
    rng: np.random.Generator,
    size: int = 96,
) -> Movie:
    """A single centered disk with zero motion: fading is the only change."""
    if num_frames < 1:
        raise ValueError("num_frames must be >= 1")
    anatomy_params = AnatomyParams(size=size, num_disks=(1, 1),
                                   radius=(0.33 * size, 0.33 * size))
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    c = (size - 1) / 2.0
    mask = (xs - c) ** 2 + (ys - c) ** 2 <= (0.33 * size) ** 2
    anatomy = np.clip(gaussian_filter(mask.astype(np.float64),
                                      anatomy_params.smooth_sigma), 0.0, 1.0)
    fields = np.zeros((num_frames, 2, size, size), dtype=np.float64)
    shape = (num_frames, size, size)
    frames_h = np.empty(shape, dtype=np.float64)
    frames_v = np.empty(shape, dtype=np.float64)
    for n in range(num_frames):
        for params, frames in ((params_h, frames_h), (params_v, frames_v)):
            frames[n] = _noisy_signed(frame_intensity(anatomy, params, n),
                                      noise_sigma, rng)
    return Movie(
        frames_h=frames_h,
        frames_v=frames_v,
        fields=fields,
        mask=mask,
        anatomy=anatomy,
        params_h=params_h,
        params_v=params_v,
        noise_sigma=noise_sigma,
    )
