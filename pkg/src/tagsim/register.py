"""Dense variational registration of tagged frame pairs.

The optimizer estimates the displacement field that carries the fixed frame
onto the moving frame: it warps the fixed channels by the candidate field,
scores them against the moving channels with the configured loss, adds the
smoothness penalty, and descends the analytic gradient. Because the movies
are synthesized by resampling frame 0 through the ground-truth fields, the
estimated field lives in the same geometry as the stored truth and the two
are directly comparable.

Optimization is adaptive-moment gradient descent with a monotonicity
safeguard: any step that would raise the objective is rejected and the step
size halved, so the recorded objective trace never increases. A coarse-to-
fine pyramid (box-average down, doubled bilinear up) supplies the large
displacements.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .image_ops import downsample2, upsample2, warp_image, warp_image_with_grad
from .losses import LossConfig, loss_value_and_grad, smoothness
from .validation import check_channels

_ADAM_EPS = 1e-8
_MIN_STEP = 1e-12
_MIN_LEVEL_DIM = 8


@dataclass(frozen=True)
class RegConfig:
    """Registration settings: loss, regularization, schedule, optimizer."""

    loss: LossConfig = dataclass_field(default_factory=LossConfig)
    lambda_: float = 1.0
    levels: int = 3
    iters_per_level: int = 200
    step_size: float = 0.25
    beta1: float = 0.9
    beta2: float = 0.999
    convergence_tol: float = 1e-6

    def __post_init__(self) -> None:
        if self.lambda_ < 0:
            raise ValueError("lambda_ must be >= 0")
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.iters_per_level < 1:
            raise ValueError("iters_per_level must be >= 1")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("moment decays must lie in [0, 1)")
        if self.convergence_tol < 0:
            raise ValueError("convergence_tol must be >= 0")

    def to_dict(self) -> dict:
        return {
            "loss": self.loss.to_dict(),
            "lambda": float(self.lambda_),
            "levels": int(self.levels),
            "iters_per_level": int(self.iters_per_level),
            "step_size": float(self.step_size),
            "adaptive_moments": [float(self.beta1), float(self.beta2)],
            "convergence_tol": float(self.convergence_tol),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RegConfig":
        data = dict(data)
        loss = LossConfig.from_dict(data.pop("loss", {}))
        kwargs = {"loss": loss}
        if "lambda" in data:
            kwargs["lambda_"] = float(data.pop("lambda"))
        if "adaptive_moments" in data:
            b1, b2 = data.pop("adaptive_moments")
            kwargs["beta1"], kwargs["beta2"] = float(b1), float(b2)
        for key in ("levels", "iters_per_level", "step_size", "convergence_tol"):
            if key in data:
                kwargs[key] = data.pop(key)
        if data:
            raise ValueError(f"unknown RegConfig keys: {sorted(data)}")
        return cls(**kwargs)

    def with_updates(self, **kwargs) -> "RegConfig":
        return replace(self, **kwargs)


@dataclass
class RegResult:
    """Estimated field plus the per-iteration objective history."""

    field: np.ndarray                 # (2, H, W)
    objective_trace: np.ndarray       # total objective, accepted state
    sim_trace: np.ndarray             # similarity term
    smooth_trace: np.ndarray          # per-pixel mean smoothness (unweighted)
    level_starts: list[int]           # index into traces where each level begins

    @property
    def iterations(self) -> int:
        return len(self.objective_trace) - len(self.level_starts)


def _objective(fixed: np.ndarray, moving: np.ndarray, level_field: np.ndarray,
               config: RegConfig):
    """Total objective, its parts, and the gradient w.r.t. the field.

    The similarity term is a per-pixel mean, so the smoothness sum is
    normalized by the pixel count before weighting; otherwise the penalty
    would outgrow the data term with resolution and the useful range of
    ``lambda_`` would shift with image size.
    """
    n_ch = fixed.shape[0]
    sim = 0.0
    grad = np.zeros_like(level_field)
    for c in range(n_ch):
        warped, ddu, ddv = warp_image_with_grad(fixed[c], level_field)
        ev = loss_value_and_grad(config.loss, moving[c], warped)
        sim += ev.value
        grad[0] += ev.grad * ddu
        grad[1] += ev.grad * ddv
    sim /= n_ch
    grad /= n_ch
    n_pix = level_field[0].size
    smo = smoothness(level_field)
    smo_mean = smo.value / n_pix
    total = sim + config.lambda_ * smo_mean
    grad += (config.lambda_ / n_pix) * smo.grad
    return total, sim, smo_mean, grad


_LR_GROWTH = 1.05
_PATIENCE = 3


def _optimize_level(fixed, moving, level_field, config: RegConfig, traces):
    """Safeguarded adaptive-moment descent on one pyramid level.

    A step that would raise the objective is rejected: the field and moments
    are kept, the step size is halved, and the trace repeats the current
    value, keeping it non-increasing. Accepted steps let the step size
    recover slowly toward its initial value so one bad step does not
    permanently stall the level.
    """
    obj_trace, sim_trace, smo_trace = traces
    m = np.zeros_like(level_field)
    v = np.zeros_like(level_field)
    t = 0
    lr = config.step_size
    small_streak = 0

    obj, sim, smo, grad = _objective(fixed, moving, level_field, config)
    obj_trace.append(obj)
    sim_trace.append(sim)
    smo_trace.append(smo)

    for _ in range(config.iters_per_level):
        m_new = config.beta1 * m + (1.0 - config.beta1) * grad
        v_new = config.beta2 * v + (1.0 - config.beta2) * grad * grad
        t_new = t + 1
        m_hat = m_new / (1.0 - config.beta1**t_new)
        v_hat = v_new / (1.0 - config.beta2**t_new)
        candidate = level_field - lr * m_hat / (np.sqrt(v_hat) + _ADAM_EPS)
        c_obj, c_sim, c_smo, c_grad = _objective(fixed, moving, candidate, config)
        if c_obj <= obj:
            improvement = obj - c_obj
            level_field, obj, sim, smo, grad = candidate, c_obj, c_sim, c_smo, c_grad
            m, v, t = m_new, v_new, t_new
            lr = min(lr * _LR_GROWTH, config.step_size)
            obj_trace.append(obj)
            sim_trace.append(sim)
            smo_trace.append(smo)
            if improvement <= config.convergence_tol * max(1.0, abs(obj)):
                small_streak += 1
                if small_streak >= _PATIENCE:
                    break
            else:
                small_streak = 0
        else:
            lr *= 0.5
            obj_trace.append(obj)
            sim_trace.append(sim)
            smo_trace.append(smo)
            if lr < _MIN_STEP:
                break
    return level_field


def _build_pyramid(channels: np.ndarray, levels: int):
    """Coarse-to-fine list of channel stacks."""
    pyramid = [channels]
    for _ in range(levels - 1):
        prev = pyramid[0]
        down = np.stack([downsample2(prev[c]) for c in range(prev.shape[0])])
        pyramid.insert(0, down)
    return pyramid


def register_pair(fixed, moving, config: RegConfig | None = None) -> RegResult:
    """Estimate the displacement field mapping ``fixed`` geometry onto ``moving``.

    Args:
        fixed: reference channels, (C, H, W) or a single (H, W) image.
        moving: target channels of the same shape.
        config: registration settings; defaults to ``RegConfig()``.

    Returns:
        RegResult with the (2, H, W) field and per-iteration traces. The
        trace entry appended for a rejected step repeats the current value,
        so the objective trace is non-increasing within every level.
    """
    if config is None:
        config = RegConfig()
    fixed = check_channels(fixed, name="fixed")
    moving = check_channels(moving, name="moving")
    if fixed.shape != moving.shape:
        raise ValueError(
            f"fixed and moving must match, got {fixed.shape} vs {moving.shape}"
        )
    h, w = fixed.shape[1:]
    coarse_dim = min(h, w) // (2 ** (config.levels - 1))
    if coarse_dim < _MIN_LEVEL_DIM:
        raise ValueError(
            f"{config.levels} levels shrink a {(h, w)} image below "
            f"{_MIN_LEVEL_DIM}px; reduce levels"
        )

    pyr_fixed = _build_pyramid(fixed, config.levels)
    pyr_moving = _build_pyramid(moving, config.levels)

    obj_trace: list[float] = []
    sim_trace: list[float] = []
    smo_trace: list[float] = []
    level_starts: list[int] = []

    level_field = np.zeros((2,) + pyr_fixed[0].shape[1:], dtype=np.float64)
    for level, (f_lvl, m_lvl) in enumerate(zip(pyr_fixed, pyr_moving)):
        if level > 0:
            level_field = upsample2(level_field, f_lvl.shape[1:])
        level_starts.append(len(obj_trace))
        level_field = _optimize_level(
            f_lvl, m_lvl, level_field, config,
            (obj_trace, sim_trace, smo_trace),
        )

    return RegResult(
        field=level_field,
        objective_trace=np.asarray(obj_trace),
        sim_trace=np.asarray(sim_trace),
        smooth_trace=np.asarray(smo_trace),
        level_starts=level_starts,
    )


def register_movie(channels, config: RegConfig | None = None) -> list[RegResult]:
    """Register frame 0 against every later frame of a channel movie.

    ``channels`` has shape (N, C, H, W); returns one RegResult per frame
    n = 1..N-1, each field mapping frame-0 geometry onto frame n.
    """
    arr = np.asarray(channels, dtype=np.float64)
    if arr.ndim != 4:
        raise ValueError(f"channels must have shape (N, C, H, W), got {arr.shape}")
    if arr.shape[0] < 2:
        raise ValueError("need at least two frames to register")
    return [register_pair(arr[0], arr[n], config) for n in range(1, arr.shape[0])]


class VariationalRegistration(BaseEstimator):
    """Estimator interface over :func:`register_pair`.

    Parameters
    ----------
    loss : str
        Similarity loss kind: mse, ncc, mi, ssim, ngf, or mind.
    smooth_weight : float
        Multiplier on the squared-difference smoothness penalty.
    levels : int
        Pyramid depth; the coarsest level must stay at least 8px.
    iters_per_level : int
        Gradient iterations per pyramid level.
    step_size : float
        Initial adaptive-moment step size, halved on rejected steps.
    beta1, beta2 : float
        Moment decay rates.
    convergence_tol : float
        Relative improvement below which a level stops early.
    loss_params : dict or None
        Extra LossConfig fields, e.g. ``{"ncc_window": 7}``.

    Attributes
    ----------
    displacement_ : ndarray of shape (2, H, W)
        Estimated field mapping fixed geometry onto the moving frame.
    result_ : RegResult
        Full optimization record.
    """

    def __init__(self, loss: str = "mse", smooth_weight: float = 1.0,
                 levels: int = 3, iters_per_level: int = 200,
                 step_size: float = 0.25, beta1: float = 0.9,
                 beta2: float = 0.999, convergence_tol: float = 1e-6,
                 loss_params: dict | None = None):
        self.loss = loss
        self.smooth_weight = smooth_weight
        self.levels = levels
        self.iters_per_level = iters_per_level
        self.step_size = step_size
        self.beta1 = beta1
        self.beta2 = beta2
        self.convergence_tol = convergence_tol
        self.loss_params = loss_params

    def _config(self) -> RegConfig:
        loss_cfg = LossConfig(kind=self.loss, **(self.loss_params or {}))
        return RegConfig(
            loss=loss_cfg,
            lambda_=self.smooth_weight,
            levels=self.levels,
            iters_per_level=self.iters_per_level,
            step_size=self.step_size,
            beta1=self.beta1,
            beta2=self.beta2,
            convergence_tol=self.convergence_tol,
        )

    def fit(self, fixed, moving):
        """Estimate the displacement field from one frame pair."""
        result = register_pair(fixed, moving, self._config())
        self.displacement_ = result.field
        self.result_ = result
        self.objective_trace_ = result.objective_trace
        return self

    def transform(self, X) -> np.ndarray:
        """Warp image(s) in fixed-frame geometry by the estimated field."""
        check_is_fitted(self, "displacement_")
        arr = np.asarray(X, dtype=np.float64)
        if arr.ndim == 2:
            return warp_image(arr, self.displacement_)
        if arr.ndim == 3:
            return np.stack([warp_image(a, self.displacement_) for a in arr])
        raise ValueError(f"expected (H, W) or (C, H, W), got {arr.shape}")

    def fit_transform(self, fixed, moving):
        """Fit on the pair, then warp the fixed input onto the moving frame."""
        return self.fit(fixed, moving).transform(fixed)
