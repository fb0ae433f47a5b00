"""Similarity losses with analytic gradients, plus the smoothness penalty.

Every loss maps ``(ref, img)`` to a scalar where lower is better and returns
the exact gradient with respect to ``img``. The optimizer warps one image and
differentiates through these, so each gradient is derived from the operator
structure of its loss (window sums, Gaussian filters, shifts) using the
corresponding adjoint, and is validated against finite differences in the
test suite.

Losses whose literature form is a similarity (correlation, mutual
information, structural similarity) are negated.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.ndimage import gaussian_filter, uniform_filter

from .image_ops import gradient, gradient_adjoint
from .validation import (
    check_image,
    check_odd_window,
    check_positive,
    check_same_shape,
)

LOSS_KINDS = ("mse", "ncc", "mi", "ssim", "ngf", "mind")

_LOG_FLOOR = 1e-300
_SQRT_EPS = 1e-12
_MIND_VAR_FLOOR = 1e-6


class LossEval(NamedTuple):
    value: float
    grad: np.ndarray


def _pair(ref, img):
    ref = check_image(ref, name="ref")
    img = check_image(img, name="img")
    check_same_shape(ref, img, names=("ref", "img"))
    return ref, img


# ---------------------------------------------------------------------------
# mean squared error
# ---------------------------------------------------------------------------

def mse_loss(ref, img) -> LossEval:
    """Mean squared intensity difference."""
    ref, img = _pair(ref, img)
    diff = img - ref
    value = float(np.mean(diff * diff))
    grad = (2.0 / diff.size) * diff
    return LossEval(value, grad)


# ---------------------------------------------------------------------------
# local normalized cross-correlation
# ---------------------------------------------------------------------------

def ncc_loss(ref, img, window: int = 9, epsilon: float = 1e-5) -> LossEval:
    """Negated mean of squared local correlation coefficients.

    Statistics are taken over an odd square window centered at every pixel;
    windows are clipped at the borders (zero-padded sums with per-window
    counts), and ``epsilon`` stabilizes flat windows, which then contribute
    roughly zero correlation instead of noise.
    """
    ref, img = _pair(ref, img)
    window = check_odd_window(window, name="window")
    epsilon = check_positive(epsilon, name="epsilon")
    scale = float(window * window)

    def box(x):
        return uniform_filter(x, size=window, mode="constant", cval=0.0) * scale

    cnt = box(np.ones_like(ref))
    s_f = box(ref)
    s_m = box(img)
    mu_f = s_f / cnt
    mu_m = s_m / cnt
    a = box(ref * img) - mu_f * s_m
    b = box(ref * ref) - mu_f * s_f
    c = box(img * img) - mu_m * s_m
    den = b * c + epsilon
    r = a * a / den
    n_pix = ref.size
    value = -float(np.mean(r))

    alpha = 2.0 * a / den
    beta = 2.0 * a * a * b / (den * den)
    grad = -(
        ref * box(alpha) - box(alpha * mu_f)
        - img * box(beta) + box(beta * mu_m)
    ) / n_pix
    return LossEval(value, grad)


# ---------------------------------------------------------------------------
# mutual information (Parzen-window joint histogram)
# ---------------------------------------------------------------------------

def _parzen_weights(values: np.ndarray, bins: int, sigma: float):
    """Per-pixel normalized Gaussian bin weights and their data derivative."""
    centers = np.arange(bins, dtype=np.float64)
    z = centers[None, :] - values[:, None]
    w = np.exp(-(z * z) / (2.0 * sigma * sigma))
    w /= w.sum(axis=1, keepdims=True)
    t = z / (sigma * sigma)
    dw = w * (t - (w * t).sum(axis=1, keepdims=True))
    return w, dw


def mi_loss(ref, img, bins: int = 32, sigma: float = 1.0) -> LossEval:
    """Negated mutual information with a Gaussian Parzen joint density.

    Intensities are clamped to [0, 1] and spread over ``bins`` centers with a
    Gaussian of width ``sigma`` (in bin units). The gradient flows through
    the moving image's bin weights; pixels clamped at 0 or 1 get zero
    gradient.
    """
    ref, img = _pair(ref, img)
    bins = int(bins)
    if bins < 8:
        raise ValueError(f"bins must be >= 8, got {bins}")
    sigma = check_positive(sigma, name="sigma")

    n_pix = ref.size
    span = bins - 1.0
    x = np.clip(ref.ravel(), 0.0, 1.0) * span
    y_raw = img.ravel()
    y = np.clip(y_raw, 0.0, 1.0) * span

    w_f, _ = _parzen_weights(x, bins, sigma)
    w_m, dw_m = _parzen_weights(y, bins, sigma)

    joint = (w_f.T @ w_m) / n_pix
    p_f = joint.sum(axis=1)
    p_m = joint.sum(axis=0)
    log_term = (
        np.log(np.maximum(joint, _LOG_FLOOR))
        - np.log(np.maximum(p_f, _LOG_FLOOR))[:, None]
        - np.log(np.maximum(p_m, _LOG_FLOOR))[None, :]
    )
    mi = float(np.sum(np.where(joint > 0.0, joint * log_term, 0.0)))

    # dMI/d w_m[i, l] = (w_f @ log_term)[i, l] / N; the constant offset from
    # d(p log p) cancels because each pixel's weights always sum to one.
    inner = (w_f @ log_term) / n_pix
    dmi_dy = (inner * dw_m).sum(axis=1)
    active = (y_raw > 0.0) & (y_raw < 1.0)
    grad = (-span * dmi_dy * active).reshape(img.shape)
    return LossEval(-mi, grad)


# ---------------------------------------------------------------------------
# structural similarity
# ---------------------------------------------------------------------------

def _signed_power(x: np.ndarray, e: float) -> np.ndarray:
    return np.sign(x) * np.abs(x) ** e


def ssim_loss(ref, img, window: int = 11, sigma: float = 1.5,
              c1: float = 1e-4, c2: float = 9e-4,
              exponents: tuple[float, float, float] = (1.0, 1.0, 1.0)) -> LossEval:
    """Negated mean structural similarity with per-factor exponents.

    Local statistics come from a Gaussian window (zero-padded, so the filter
    is its own adjoint). The three factors — luminance, contrast, structure
    — are combined as signed powers so fractional exponents remain defined
    when the structure term goes negative.
    """
    ref, img = _pair(ref, img)
    window = check_odd_window(window, name="window")
    sigma = check_positive(sigma, name="sigma")
    if c1 <= 0 or c2 <= 0:
        raise ValueError("c1 and c2 must be positive")
    e_l, e_c, e_s = (float(e) for e in exponents)
    if min(e_l, e_c, e_s) <= 0:
        raise ValueError(f"exponents must be positive, got {exponents}")
    radius = (window - 1) // 2
    truncate = radius / sigma

    def g(x):
        return gaussian_filter(x, sigma, mode="constant", cval=0.0,
                               truncate=truncate)

    c3 = c2 / 2.0
    mu_f, mu_m = g(ref), g(img)
    var_f = g(ref * ref) - mu_f * mu_f
    var_m = g(img * img) - mu_m * mu_m
    cov = g(ref * img) - mu_f * mu_m
    sig_f = np.sqrt(var_f + _SQRT_EPS)
    sig_m = np.sqrt(var_m + _SQRT_EPS)

    num_l = 2.0 * mu_f * mu_m + c1
    den_l = mu_f * mu_f + mu_m * mu_m + c1
    lum = num_l / den_l
    num_c = 2.0 * sig_f * sig_m + c2
    den_c = var_f + var_m + c2
    con = num_c / den_c
    den_s = sig_f * sig_m + c3
    stru = (cov + c3) / den_s

    s_map = _signed_power(lum, e_l) * _signed_power(con, e_c) * _signed_power(stru, e_s)
    n_pix = ref.size
    value = -float(np.mean(s_map))

    def _ratio(s, x):
        safe = np.where(np.abs(x) < _SQRT_EPS, np.sign(x) * _SQRT_EPS + (x == 0) * _SQRT_EPS, x)
        return s / safe

    p_l = e_l * _ratio(s_map, lum)
    p_c = e_c * _ratio(s_map, con)
    p_s = e_s * _ratio(s_map, stru)

    dl_dmu = (2.0 * mu_f * den_l - num_l * 2.0 * mu_m) / (den_l * den_l)
    dc_dvar = ((sig_f / sig_m) * den_c - num_c) / (den_c * den_c)
    ds_dvar = -(cov + c3) * sig_f / (2.0 * sig_m * den_s * den_s)
    ds_dcov = 1.0 / den_s

    p_mu = p_l * dl_dmu
    p_var = p_c * dc_dvar + p_s * ds_dvar
    p_cov = p_s * ds_dcov

    grad = -(
        g(p_mu)
        + 2.0 * img * g(p_var) - 2.0 * g(p_var * mu_m)
        + ref * g(p_cov) - g(p_cov * mu_f)
    ) / n_pix
    return LossEval(value, grad)


# ---------------------------------------------------------------------------
# normalized gradient fields
# ---------------------------------------------------------------------------

def ngf_loss(ref, img, epsilon: float = 0.01) -> LossEval:
    """Negated mean squared inner product of normalized gradients.

    ``epsilon`` sets the gradient magnitude below which structure is treated
    as noise; the measure depends on edge orientation, not intensity scale.
    """
    ref, img = _pair(ref, img)
    epsilon = check_positive(epsilon, name="epsilon")
    g_f = gradient(ref)
    g_m = gradient(img)
    nrm_f = np.sqrt(g_f[0] ** 2 + g_f[1] ** 2 + epsilon * epsilon)
    rho = np.sqrt(g_m[0] ** 2 + g_m[1] ** 2 + epsilon * epsilon)
    n_f = g_f / nrm_f
    n_m = g_m / rho
    phi = n_f[0] * n_m[0] + n_f[1] * n_m[1]
    n_pix = ref.size
    value = -float(np.mean(phi * phi))

    psi = np.empty_like(g_m)
    psi[0] = phi * (n_f[0] - phi * n_m[0]) / rho
    psi[1] = phi * (n_f[1] - phi * n_m[1]) / rho
    grad = (-2.0 / n_pix) * gradient_adjoint(psi)
    return LossEval(value, grad)


# ---------------------------------------------------------------------------
# MIND descriptors
# ---------------------------------------------------------------------------

_MIND_OFFSETS = ((0, 1), (0, -1), (1, 0), (-1, 0))


def _shift(img: np.ndarray, dy: int, dx: int) -> np.ndarray:
    h, w = img.shape
    ys = np.clip(np.arange(h) + dy, 0, h - 1)
    xs = np.clip(np.arange(w) + dx, 0, w - 1)
    return img[np.ix_(ys, xs)]


def _shift_adjoint(arr: np.ndarray, dy: int, dx: int) -> np.ndarray:
    h, w = arr.shape
    ys = np.clip(np.arange(h) + dy, 0, h - 1)
    xs = np.clip(np.arange(w) + dx, 0, w - 1)
    out = np.zeros_like(arr)
    np.add.at(out, (ys[:, None], xs[None, :]), arr)
    return out


def _mind_distances(img: np.ndarray, radius: int):
    sigma_p = radius / 2.0
    truncate = radius / sigma_p

    def g(x):
        return gaussian_filter(x, sigma_p, mode="constant", cval=0.0,
                               truncate=truncate)

    deltas = [img - _shift(img, dy, dx) for dy, dx in _MIND_OFFSETS]
    dists = np.stack([g(d * d) for d in deltas])
    return deltas, dists, g


def _mind_descriptor(dists: np.ndarray):
    v = np.maximum(dists.mean(axis=0), _MIND_VAR_FLOOR)
    m = dists.min(axis=0)
    desc = np.exp(-(dists - m[None]) / v[None])
    return desc, v, m


def mind_descriptor(img, radius: int = 1) -> np.ndarray:
    """Four-neighbor MIND descriptor stack, shape (4, H, W), max value 1."""
    img = check_image(img, name="img", min_size=3)
    radius = int(radius)
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    _, dists, _ = _mind_distances(img, radius)
    return _mind_descriptor(dists)[0]


def mind_loss(ref, img, radius: int = 1) -> LossEval:
    """Mean squared difference between MIND descriptors.

    Each pixel is described by Gaussian-patch SSDs to its four neighbors,
    exponentiated after subtracting the minimum and dividing by the mean
    (floored), making the descriptor invariant to local contrast. Zero for
    identical images.
    """
    ref, img = _pair(ref, img)
    radius = int(radius)
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    if min(ref.shape) < 3:
        raise ValueError("mind_loss needs images of at least 3x3")

    _, dists_f, _ = _mind_distances(ref, radius)
    desc_f, _, _ = _mind_descriptor(dists_f)
    deltas_m, dists_m, g = _mind_distances(img, radius)
    desc_m, v, m = _mind_descriptor(dists_m)
    argmin = dists_m.argmin(axis=0)

    diff = desc_m - desc_f
    total = diff.size
    value = float(np.mean(diff * diff))

    w = (2.0 / total) * diff
    we = w * desc_m
    sum_we = we.sum(axis=0)
    sum_we_d = (we * (dists_m - m[None])).sum(axis=0)
    v_active = (dists_m.mean(axis=0) > _MIND_VAR_FLOOR).astype(np.float64)

    grad = np.zeros_like(img)
    for s, (dy, dx) in enumerate(_MIND_OFFSETS):
        onehot = (argmin == s).astype(np.float64)
        g_s = (-we[s] + sum_we * onehot) / v + v_active * sum_we_d / (4.0 * v * v)
        z = 2.0 * deltas_m[s] * g(g_s)
        grad += z - _shift_adjoint(z, dy, dx)
    return LossEval(value, grad)


# ---------------------------------------------------------------------------
# smoothness penalty
# ---------------------------------------------------------------------------

def smoothness(field) -> LossEval:
    """Sum over pixels of squared forward differences of both components.

    The value is a sum, not a mean, so its weight relative to a similarity
    term is controlled entirely by the regularization multiplier.
    """
    arr = np.asarray(field, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] != 2:
        raise ValueError(f"field must have shape (2, H, W), got {arr.shape}")
    value = 0.0
    grad = np.zeros_like(arr)
    for ch in range(2):
        dx = arr[ch, :, 1:] - arr[ch, :, :-1]
        dy = arr[ch, 1:, :] - arr[ch, :-1, :]
        value += float(np.sum(dx * dx) + np.sum(dy * dy))
        grad[ch, :, 1:] += 2.0 * dx
        grad[ch, :, :-1] -= 2.0 * dx
        grad[ch, 1:, :] += 2.0 * dy
        grad[ch, :-1, :] -= 2.0 * dy
    return LossEval(value, grad)


# ---------------------------------------------------------------------------
# configuration and dispatch
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LossConfig:
    """Which similarity loss to use and its hyperparameters."""

    kind: str = "mse"
    ncc_window: int = 9
    ncc_epsilon: float = 1e-5
    mi_bins: int = 32
    mi_parzen_sigma: float = 1.0
    ssim_window: int = 11
    ssim_sigma: float = 1.5
    ssim_c1: float = 1e-4
    ssim_c2: float = 9e-4
    ssim_exponents: tuple[float, float, float] = (1.0, 1.0, 1.0)
    ngf_epsilon: float = 0.01
    mind_patch_radius: int = 1
    mind_neighborhood: str = "four_neighbor"

    def __post_init__(self) -> None:
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; choose from {LOSS_KINDS}")
        check_odd_window(self.ncc_window, name="ncc_window")
        check_positive(self.ncc_epsilon, name="ncc_epsilon")
        if int(self.mi_bins) < 8:
            raise ValueError(f"mi_bins must be >= 8, got {self.mi_bins}")
        check_positive(self.mi_parzen_sigma, name="mi_parzen_sigma")
        check_odd_window(self.ssim_window, name="ssim_window")
        check_positive(self.ssim_sigma, name="ssim_sigma")
        if len(self.ssim_exponents) != 3 or min(self.ssim_exponents) <= 0:
            raise ValueError(f"ssim_exponents must be three positives, got {self.ssim_exponents}")
        check_positive(self.ngf_epsilon, name="ngf_epsilon")
        if int(self.mind_patch_radius) < 1:
            raise ValueError("mind_patch_radius must be >= 1")
        if self.mind_neighborhood != "four_neighbor":
            raise ValueError(f"unsupported neighborhood {self.mind_neighborhood!r}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "ncc_window": int(self.ncc_window),
            "ncc_epsilon": float(self.ncc_epsilon),
            "mi_bins": int(self.mi_bins),
            "mi_parzen_sigma": float(self.mi_parzen_sigma),
            "ssim_window": int(self.ssim_window),
            "ssim_sigma": float(self.ssim_sigma),
            "ssim_c1": float(self.ssim_c1),
            "ssim_c2": float(self.ssim_c2),
            "ssim_exponents": [float(e) for e in self.ssim_exponents],
            "ngf_epsilon": float(self.ngf_epsilon),
            "mind_patch_radius": int(self.mind_patch_radius),
            "mind_neighborhood": self.mind_neighborhood,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LossConfig":
        kwargs = dict(data)
        if "ssim_exponents" in kwargs:
            kwargs["ssim_exponents"] = tuple(float(e) for e in kwargs["ssim_exponents"])
        return cls(**kwargs)

    def with_updates(self, **kwargs) -> "LossConfig":
        return replace(self, **kwargs)


def loss_value_and_grad(config: LossConfig, ref, img) -> LossEval:
    """Evaluate the configured loss; gradient is w.r.t. ``img``."""
    kind = config.kind
    if kind == "mse":
        return mse_loss(ref, img)
    if kind == "ncc":
        return ncc_loss(ref, img, window=config.ncc_window, epsilon=config.ncc_epsilon)
    if kind == "mi":
        return mi_loss(ref, img, bins=config.mi_bins, sigma=config.mi_parzen_sigma)
    if kind == "ssim":
        return ssim_loss(ref, img, window=config.ssim_window, sigma=config.ssim_sigma,
                         c1=config.ssim_c1, c2=config.ssim_c2,
                         exponents=config.ssim_exponents)
    if kind == "ngf":
        return ngf_loss(ref, img, epsilon=config.ngf_epsilon)
    if kind == "mind":
        return mind_loss(ref, img, radius=config.mind_patch_radius)
    raise ValueError(f"unknown loss kind {kind!r}")


def multichannel_value_and_grad(config: LossConfig, refs, imgs):
    """Average the loss over channel pairs; grads stack to (C, H, W)."""
    refs = np.asarray(refs, dtype=np.float64)
    imgs = np.asarray(imgs, dtype=np.float64)
    if refs.shape != imgs.shape or refs.ndim != 3:
        raise ValueError("refs and imgs must share a (C, H, W) shape")
    n_ch = refs.shape[0]
    value = 0.0
    grads = np.empty_like(imgs)
    for c in range(n_ch):
        ev = loss_value_and_grad(config, refs[c], imgs[c])
        value += ev.value
        grads[c] = ev.grad
    return value / n_ch, grads / n_ch
