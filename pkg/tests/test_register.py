from __future__ import annotations

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from tagsim.image_ops import warp_image
from tagsim.losses import LossConfig, loss_value_and_grad, smoothness
from tagsim.metrics import epe
from tagsim.register import (
    RegConfig,
    RegResult,
    VariationalRegistration,
    _objective,
    register_movie,
    register_pair,
)


def textured_image(seed=0, size=48):
    rng = np.random.default_rng(seed)
    img = gaussian_filter(rng.standard_normal((size, size)), 2.0)
    img = (img - img.min()) / (img.max() - img.min())
    return img


def shifted_pair(shift=(1.25, -0.75), size=48, seed=1):
    """fixed and the image seen after displacing intensity by `shift`."""
    fixed = textured_image(seed=seed, size=size)
    field = np.empty((2, size, size))
    field[0] = shift[0]
    field[1] = shift[1]
    moving = warp_image(fixed, field)
    return fixed[None], moving[None], field


def quick_config(**kwargs):
    base = dict(loss=LossConfig(kind="mse"), lambda_=0.1, levels=2,
                iters_per_level=80, step_size=0.25)
    base.update(kwargs)
    return RegConfig(**base)


class TestRegConfig:
    def test_defaults(self):
        config = RegConfig()
        assert config.loss.kind == "mse"
        assert config.lambda_ == 1.0
        assert config.levels == 3
        assert config.iters_per_level == 200

    def test_round_trip_uses_public_key_names(self):
        config = RegConfig(loss=LossConfig(kind="ncc", ncc_window=7),
                           lambda_=0.5, levels=2, iters_per_level=30)
        data = config.to_dict()
        assert "lambda" in data and "lambda_" not in data
        assert data["loss"]["kind"] == "ncc"
        again = RegConfig.from_dict(data)
        assert again == config

    def test_unknown_key_rejected(self):
        with pytest.raises((TypeError, ValueError)):
            RegConfig.from_dict({"lambda": 1.0, "bogus": 3})

    @pytest.mark.parametrize("kwargs", [
        {"lambda_": -0.1}, {"levels": 0}, {"iters_per_level": 0},
        {"step_size": 0.0}, {"convergence_tol": -1.0},
    ])
    def test_validation_errors(self, kwargs):
        with pytest.raises(ValueError):
            RegConfig(**kwargs)

    def test_with_updates(self):
        config = RegConfig()
        updated = config.with_updates(lambda_=2.0)
        assert updated.lambda_ == 2.0
        assert config.lambda_ == 1.0


class TestObjective:
    def test_matches_finite_difference_through_warp(self):
        # The objective differentiates the warped image w.r.t. the field;
        # check that chain against brute-force perturbation of the field.
        fixed = textured_image(seed=2, size=16)[None]
        moving = textured_image(seed=3, size=16)[None]
        rng = np.random.default_rng(4)
        field = 0.5 * gaussian_filter(rng.standard_normal((2, 16, 16)), 2.0, axes=(1, 2))
        for kind in ("mse", "ncc"):
            config = quick_config(loss=LossConfig(kind=kind, ncc_window=5),
                                  lambda_=0.3)
            total, sim, smo, grad = _objective(fixed, moving, field, config)
            h = 1e-6
            rng2 = np.random.default_rng(5)
            for _ in range(3):
                direction = rng2.standard_normal(field.shape)
                plus = _objective(fixed, moving, field + h * direction, config)[0]
                minus = _objective(fixed, moving, field - h * direction, config)[0]
                fd = (plus - minus) / (2 * h)
                analytic = float(np.sum(grad * direction))
                assert fd == pytest.approx(analytic, rel=1e-3)

    def test_combines_similarity_and_normalized_smoothness(self):
        fixed = textured_image(seed=6, size=16)[None]
        moving = textured_image(seed=7, size=16)[None]
        rng = np.random.default_rng(8)
        field = rng.standard_normal((2, 16, 16)) * 0.3
        config = quick_config(lambda_=2.0)
        total, sim, smo, _ = _objective(fixed, moving, field, config)
        ev = loss_value_and_grad(config.loss, moving[0], warp_image(fixed[0], field))
        assert sim == pytest.approx(ev.value)
        assert smo == pytest.approx(smoothness(field).value / 256)
        assert total == pytest.approx(sim + 2.0 * smo)


class TestRegisterPair:
    def test_identity_pair_returns_near_zero_field(self):
        fixed = textured_image(seed=9)[None]
        result = register_pair(fixed, fixed, quick_config())
        assert np.abs(result.field).max() < 0.05

    def test_recovers_constant_subpixel_shift(self):
        fixed, moving, gt = shifted_pair(shift=(1.25, -0.75))
        config = quick_config(lambda_=0.05, iters_per_level=150)
        result = register_pair(fixed, moving, config)
        interior = np.zeros(fixed.shape[1:], dtype=bool)
        interior[6:-6, 6:-6] = True
        err = epe(result.field, gt, interior)
        assert err < 0.1

    def test_objective_trace_is_monotone_within_levels(self):
        fixed, moving, _ = shifted_pair(seed=10)
        result = register_pair(fixed, moving, quick_config())
        trace = result.objective_trace
        bounds = result.level_starts + [len(trace)]
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            segment = trace[lo:hi]
            assert np.all(np.diff(segment) <= 1e-12)

    def test_level_starts_cover_all_levels(self):
        fixed, moving, _ = shifted_pair(seed=11)
        result = register_pair(fixed, moving, quick_config(levels=3))
        assert len(result.level_starts) == 3
        assert result.level_starts[0] == 0
        assert result.iterations == len(result.objective_trace) - 3

    def test_zero_regularization_attains_similarity_floor(self):
        # With lambda=0 and identical images the objective can reach the
        # loss's own optimum; the optimizer must not climb back above its
        # starting point.
        fixed = textured_image(seed=12, size=32)[None]
        config = quick_config(lambda_=0.0, levels=1, iters_per_level=40)
        result = register_pair(fixed, fixed, config)
        assert result.objective_trace[-1] <= result.objective_trace[0] + 1e-15
        assert result.objective_trace[-1] >= 0.0  # mse cannot go below zero

    def test_shape_mismatch_rejected(self):
        a = textured_image(seed=13, size=32)[None]
        b = textured_image(seed=14, size=48)[None]
        with pytest.raises(ValueError):
            register_pair(a, b, quick_config())

    def test_too_many_levels_rejected(self):
        fixed = textured_image(seed=15, size=16)[None]
        with pytest.raises(ValueError, match="levels"):
            register_pair(fixed, fixed, quick_config(levels=5))

    def test_multichannel_input(self):
        fixed, moving, gt = shifted_pair(shift=(0.5, 0.5))
        fixed2 = np.concatenate([fixed, fixed ** 2])
        moving2 = np.concatenate([moving, warp_image(fixed[0] ** 2, gt)[None]])
        result = register_pair(fixed2, moving2, quick_config(lambda_=0.05))
        interior = np.zeros(fixed.shape[1:], dtype=bool)
        interior[6:-6, 6:-6] = True
        assert epe(result.field, gt, interior) < 0.1


class TestRegisterMovie:
    def test_one_result_per_later_frame(self):
        frames = np.stack([textured_image(seed=s, size=32) for s in (0, 0, 0)])
        channels = frames[:, None]
        results = register_movie(channels, quick_config(iters_per_level=20))
        assert len(results) == 2
        assert all(isinstance(r, RegResult) for r in results)
        assert all(r.field.shape == (2, 32, 32) for r in results)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            register_movie(np.zeros((1, 1, 32, 32)), quick_config())
        with pytest.raises(ValueError):
            register_movie(np.zeros((32, 32)), quick_config())


class TestVariationalRegistration:
    def test_fit_sets_state_and_transform_warps(self):
        fixed, moving, _ = shifted_pair(shift=(1.0, 0.0))
        est = VariationalRegistration(loss="mse", smooth_weight=0.05,
                                      levels=2, iters_per_level=60)
        est.fit(fixed, moving)
        assert est.displacement_.shape == (2, 48, 48)
        assert isinstance(est.result_, RegResult)
        warped = est.transform(fixed[0])
        expected = warp_image(fixed[0], est.displacement_)
        assert np.allclose(warped, expected)

    def test_transform_before_fit_raises(self):
        est = VariationalRegistration()
        with pytest.raises(NotFittedError):
            est.transform(np.zeros((32, 32)))

    def test_sklearn_clone_contract(self):
        est = VariationalRegistration(loss="ncc", smooth_weight=0.7)
        params = est.get_params()
        assert params["loss"] == "ncc"
        assert params["smooth_weight"] == 0.7
        twin = clone(est)
        assert twin.get_params() == params

    def test_fit_transform_matches_manual_sequence(self):
        fixed, moving, _ = shifted_pair(shift=(0.5, -0.5), seed=20)
        est = VariationalRegistration(loss="mse", smooth_weight=0.05,
                                      levels=2, iters_per_level=40)
        out = est.fit_transform(fixed, moving)
        assert np.allclose(out, est.transform(fixed))
