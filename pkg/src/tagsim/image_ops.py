"""Low-level image operations: sampling, warping, derivatives, pyramids, FFT.

The bilinear interpolant here is the single source of truth for warping.
The optimizer differentiates through it, so the sampler also exposes its
exact spatial derivative; using a library resampler with a subtly different
kernel would break the chain rule at machine precision.

Coordinate convention: pixel ``img[y, x]`` sits at continuous coordinate
(x, y). Samples outside the grid clamp to the nearest edge pixel.
"""
from __future__ import annotations

import numpy as np

from .validation import check_field, check_image, check_mask, check_same_shape


# ---------------------------------------------------------------------------
# bilinear sampling
# ---------------------------------------------------------------------------

def _corner_indices(img: np.ndarray, x: np.ndarray, y: np.ndarray):
    h, w = img.shape
    xc = np.clip(x, 0.0, w - 1.0)
    yc = np.clip(y, 0.0, h - 1.0)
    x0 = np.clip(np.floor(xc).astype(np.int64), 0, max(w - 2, 0))
    y0 = np.clip(np.floor(yc).astype(np.int64), 0, max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = xc - x0
    wy = yc - y0
    return x0, x1, y0, y1, wx, wy


def bilinear_sample(img, x, y) -> np.ndarray:
    """Sample ``img`` at continuous coordinates (x, y), clamping to edges.

    Args:
        img: 2-D array.
        x, y: coordinate arrays (broadcastable to a common shape).

    Returns:
        Array of sampled values with the broadcast shape of x and y.
    """
    img = check_image(img, name="img")
    x, y = np.broadcast_arrays(np.asarray(x, dtype=np.float64),
                               np.asarray(y, dtype=np.float64))
    x0, x1, y0, y1, wx, wy = _corner_indices(img, x, y)
    a = img[y0, x0]
    b = img[y0, x1]
    c = img[y1, x0]
    d = img[y1, x1]
    top = a + wx * (b - a)
    bot = c + wx * (d - c)
    return top + wy * (bot - top)


def bilinear_sample_with_grad(img, x, y):
    """Sample and return the interpolant's spatial derivative as well.

    Returns ``(value, d/dx, d/dy)``. The derivative is that of the
    piecewise-bilinear interpolant; where the coordinate is clamped outside
    the grid the derivative is zero.
    """
    img = check_image(img, name="img")
    x, y = np.broadcast_arrays(np.asarray(x, dtype=np.float64),
                               np.asarray(y, dtype=np.float64))
    h, w = img.shape
    x0, x1, y0, y1, wx, wy = _corner_indices(img, x, y)
    a = img[y0, x0]
    b = img[y0, x1]
    c = img[y1, x0]
    d = img[y1, x1]
    top = a + wx * (b - a)
    bot = c + wx * (d - c)
    val = top + wy * (bot - top)
    in_x = (x >= 0.0) & (x <= w - 1.0)
    in_y = (y >= 0.0) & (y <= h - 1.0)
    ddx = ((1.0 - wy) * (b - a) + wy * (d - c)) * in_x
    ddy = (bot - top) * in_y
    return val, ddx, ddy


# ---------------------------------------------------------------------------
# warping
# ---------------------------------------------------------------------------

def _target_coords(field: np.ndarray):
    _, h, w = field.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    return xs + field[0], ys + field[1]


def warp_image(img, field) -> np.ndarray:
    """Resample ``img`` at (x + u, y + v) for a displacement field (u, v)."""
    img = check_image(img, name="img")
    field = check_field(field)
    check_same_shape(img, field[0], names=("img", "field channel"))
    xs, ys = _target_coords(field)
    return bilinear_sample(img, xs, ys)


def warp_image_with_grad(img, field):
    """Warp and return derivatives of the result w.r.t. the displacements.

    Returns ``(warped, d/du, d/dv)`` where each derivative map has the image
    shape: d warped[y, x] / d u[y, x]. Off-pixel coupling is zero because the
    field displaces each output pixel independently.
    """
    img = check_image(img, name="img")
    field = check_field(field)
    check_same_shape(img, field[0], names=("img", "field channel"))
    xs, ys = _target_coords(field)
    return bilinear_sample_with_grad(img, xs, ys)


def warp_mask(mask, field) -> np.ndarray:
    """Warp a boolean mask by nearest-neighbor lookup at (x + u, y + v)."""
    mask = check_mask(mask)
    field = check_field(field)
    check_same_shape(mask, field[0], names=("mask", "field channel"))
    h, w = mask.shape
    xs, ys = _target_coords(field)
    xi = np.clip(np.rint(xs).astype(np.int64), 0, w - 1)
    yi = np.clip(np.rint(ys).astype(np.int64), 0, h - 1)
    return mask[yi, xi]


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------

def gradient(img) -> np.ndarray:
    """Spatial gradient: central differences inside, one-sided at borders.

    Returns a (2, H, W) array with channel 0 = d/dx and channel 1 = d/dy.
    """
    img = check_image(img, name="img", min_size=3)
    out = np.empty((2,) + img.shape, dtype=np.float64)
    gx, gy = out[0], out[1]
    gx[:, 1:-1] = 0.5 * (img[:, 2:] - img[:, :-2])
    gx[:, 0] = img[:, 1] - img[:, 0]
    gx[:, -1] = img[:, -1] - img[:, -2]
    gy[1:-1, :] = 0.5 * (img[2:, :] - img[:-2, :])
    gy[0, :] = img[1, :] - img[0, :]
    gy[-1, :] = img[-1, :] - img[-2, :]
    return out


def gradient_adjoint(grad) -> np.ndarray:
    """Exact adjoint of :func:`gradient`.

    Satisfies ``<grad_arrays, gradient(f)> == <gradient_adjoint(grad_arrays), f>``
    for every image f; used to backpropagate through image gradients.
    """
    grad = check_field(grad, name="grad")
    gx, gy = grad[0], grad[1]
    h, w = gx.shape
    if h < 3 or w < 3:
        raise ValueError(f"gradient_adjoint needs at least 3x3, got {(h, w)}")
    out = np.zeros((h, w), dtype=np.float64)
    # x-axis stencils
    out[:, 2:] += 0.5 * gx[:, 1:-1]
    out[:, :-2] -= 0.5 * gx[:, 1:-1]
    out[:, 0] -= gx[:, 0]
    out[:, 1] += gx[:, 0]
    out[:, -2] -= gx[:, -1]
    out[:, -1] += gx[:, -1]
    # y-axis stencils
    out[2:, :] += 0.5 * gy[1:-1, :]
    out[:-2, :] -= 0.5 * gy[1:-1, :]
    out[0, :] -= gy[0, :]
    out[1, :] += gy[0, :]
    out[-2, :] -= gy[-1, :]
    out[-1, :] += gy[-1, :]
    return out


# ---------------------------------------------------------------------------
# resolution pyramid
# ---------------------------------------------------------------------------

def downsample2(img) -> np.ndarray:
    """Halve resolution by averaging disjoint 2x2 blocks.

    Odd trailing rows/columns are dropped before averaging.
    """
    img = check_image(img, name="img", min_size=2)
    h2, w2 = img.shape[0] // 2, img.shape[1] // 2
    a = img[: 2 * h2, : 2 * w2]
    return 0.25 * (a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2])


def resize_bilinear(img, out_shape) -> np.ndarray:
    """Bilinear resize with endpoint alignment (corners map to corners)."""
    img = check_image(img, name="img")
    th, tw = int(out_shape[0]), int(out_shape[1])
    if th < 1 or tw < 1:
        raise ValueError(f"target shape must be positive, got {(th, tw)}")
    sh, sw = img.shape
    xs = np.arange(tw, dtype=np.float64) * ((sw - 1) / (tw - 1) if tw > 1 else 0.0)
    ys = np.arange(th, dtype=np.float64) * ((sh - 1) / (th - 1) if th > 1 else 0.0)
    return bilinear_sample(img, xs[None, :], ys[:, None])


def upsample2(field, out_shape) -> np.ndarray:
    """Upsample a displacement field to roughly doubled dimensions.

    Each channel is resized bilinearly to ``out_shape`` and the displacement
    values are doubled, matching the coordinate scale change between pyramid
    levels. The target may deviate from exactly 2x by one pixel per axis.
    """
    field = check_field(field)
    th, tw = int(out_shape[0]), int(out_shape[1])
    _, sh, sw = field.shape
    if abs(th - 2 * sh) > 1 or abs(tw - 2 * sw) > 1:
        raise ValueError(
            f"target {(th, tw)} is not about twice the source {(sh, sw)}"
        )
    out = np.empty((2, th, tw), dtype=np.float64)
    out[0] = 2.0 * resize_bilinear(field[0], (th, tw))
    out[1] = 2.0 * resize_bilinear(field[1], (th, tw))
    return out


# ---------------------------------------------------------------------------
# Fourier transforms
# ---------------------------------------------------------------------------

def dft2(img) -> np.ndarray:
    """2-D discrete Fourier transform (unscaled forward)."""
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise ValueError(f"dft2 expects a 2-D array, got shape {arr.shape}")
    return np.fft.fft2(arr)


def idft2(spectrum) -> np.ndarray:
    """Inverse 2-D DFT with 1/(H*W) normalization; returns a complex array."""
    arr = np.asarray(spectrum)
    if arr.ndim != 2:
        raise ValueError(f"idft2 expects a 2-D array, got shape {arr.shape}")
    return np.fft.ifft2(arr)
