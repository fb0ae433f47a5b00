"""Sinusoidal tag preparation and its relaxation over repeated imaging.

A 1:1 tag preparation leaves the longitudinal signal proportional to
``cos(k * s)`` along the tagging axis. Each repetition interval then scales
the tagged component by ``cos(alpha) * exp(-tr / t1)`` and pulls the mean
toward equilibrium, so frame n carries a cosine of shrinking amplitude on a
growing offset. Closed forms for both follow from unrolling that linear
recurrence.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .validation import check_image


@dataclass(frozen=True)
class SpammParams:
    """Tagging and relaxation parameters for one tag direction.

    Args:
        t1: longitudinal relaxation time, ms.
        tr: repetition interval, ms; must be shorter than t1.
        alpha: imaging flip angle, radians, in [0, pi/2).
        tag_period: tag spacing in pixels, at least 4.
        direction: 'vertical' tags modulate along x, 'horizontal' along y.
        m0: equilibrium magnetization scale.
    """

    t1: float
    tr: float
    alpha: float
    tag_period: float
    direction: str = "vertical"
    m0: float = 1.0

    def __post_init__(self) -> None:
        if not (self.t1 > 0 and self.tr > 0):
            raise ValueError("t1 and tr must be positive")
        if self.tr >= self.t1:
            raise ValueError(f"tr ({self.tr}) must be smaller than t1 ({self.t1})")
        if not (0.0 <= self.alpha < math.pi / 2):
            raise ValueError(f"alpha must lie in [0, pi/2), got {self.alpha}")
        if self.tag_period < 4:
            raise ValueError(f"tag_period must be >= 4 px, got {self.tag_period}")
        if self.direction not in ("vertical", "horizontal"):
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.m0 <= 0:
            raise ValueError("m0 must be positive")

    @property
    def k_tag(self) -> float:
        """Angular tag frequency, radians per pixel."""
        return 2.0 * math.pi / self.tag_period


@dataclass(frozen=True)
class FadingCoeffs:
    """Amplitude ``a`` and offset ``b`` of the tagged signal at one frame."""

    a: float
    b: float


def _decay_factors(params: SpammParams) -> tuple[float, float]:
    q = math.exp(-params.tr / params.t1)
    c = math.cos(params.alpha)
    return q, c


def fading_coeffs(params: SpammParams, n: int) -> FadingCoeffs:
    """Closed-form fading coefficients after n repetition intervals.

    ``a_n = m0 * (cos(alpha) * exp(-tr/t1))**n`` and ``b_n`` accumulates the
    recovery toward equilibrium as a geometric sum. ``n = 0`` returns the
    freshly tagged state (a = m0, b = 0).
    """
    n = int(n)
    if n < 0:
        raise ValueError(f"frame index must be >= 0, got {n}")
    q, c = _decay_factors(params)
    r = c * q
    a = params.m0 * r**n
    if r == 1.0:  # only reachable in the q -> 1, alpha -> 0 limit
        b = params.m0 * (1.0 - q) * n
    else:
        b = params.m0 * (1.0 - q) * (1.0 - r**n) / (1.0 - r)
    return FadingCoeffs(a=a, b=b)


def fading_coeffs_iterative(params: SpammParams, n: int) -> FadingCoeffs:
    """Fading coefficients by stepping the recurrence n times.

    Slower than :func:`fading_coeffs` and kept as an independent check of
    the closed form.
    """
    n = int(n)
    if n < 0:
        raise ValueError(f"frame index must be >= 0, got {n}")
    q, c = _decay_factors(params)
    a = params.m0
    b = 0.0
    for _ in range(n):
        a = a * c * q
        b = b * c * q + params.m0 * (1.0 - q)
    return FadingCoeffs(a=a, b=b)


def steady_state(params: SpammParams) -> float:
    """Limit of the offset b_n as n grows: ``m0 (1 - q) / (1 - cq)``."""
    q, c = _decay_factors(params)
    if c * q == 1.0:
        return params.m0
    return params.m0 * (1.0 - q) / (1.0 - c * q)


def tag_pattern(params: SpammParams, width: int, height: int) -> np.ndarray:
    """Unit-amplitude cosine tag pattern over a (height, width) grid."""
    width, height = int(width), int(height)
    if width < 1 or height < 1:
        raise ValueError("width and height must be positive")
    if params.direction == "vertical":
        s = np.arange(width, dtype=np.float64)[None, :]
    else:
        s = np.arange(height, dtype=np.float64)[:, None]
    return np.broadcast_to(np.cos(params.k_tag * s), (height, width)).copy()


def frame_intensity(anatomy, params: SpammParams, n: int) -> np.ndarray:
    """Signed tagged intensity of frame n for a given anatomy map.

    The anatomy must lie in [0, 1]; the output is
    ``anatomy * (a_n * pattern + b_n) / m0``, which stays within [-1, 1].
    """
    anatomy = check_image(anatomy, name="anatomy")
    if anatomy.min() < 0.0 or anatomy.max() > 1.0:
        raise ValueError("anatomy values must lie in [0, 1]")
    coeffs = fading_coeffs(params, n)
    h, w = anatomy.shape
    pattern = tag_pattern(params, w, h)
    return anatomy * (coeffs.a * pattern + coeffs.b) / params.m0
