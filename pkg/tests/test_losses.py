from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from tagsim.losses import (
    LossConfig,
    loss_value_and_grad,
    mi_loss,
    mind_descriptor,
    mind_loss,
    mse_loss,
    multichannel_value_and_grad,
    ncc_loss,
    ngf_loss,
    smoothness,
    ssim_loss,
)


def smooth_pair(seed, size=8, spread=0.35):
    """Two correlated random images with values well inside (0, 1)."""
    rng = np.random.default_rng(seed)
    base = gaussian_filter(rng.standard_normal((size, size)), 1.0)
    pert = gaussian_filter(rng.standard_normal((size, size)), 1.0)
    def squish(x):
        x = (x - x.min()) / max(x.max() - x.min(), 1e-12)
        return 0.5 + spread * (x - 0.5)
    ref = squish(base)
    img = squish(base + 0.4 * pert)
    return ref, img


def finite_diff_grad(fn, img, h=1e-5):
    """Central-difference gradient of fn(img) over every pixel."""
    g = np.zeros_like(img)
    it = np.nditer(img, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        plus = img.copy()
        plus[idx] += h
        minus = img.copy()
        minus[idx] -= h
        g[idx] = (fn(plus) - fn(minus)) / (2 * h)
    return g


def assert_grad_matches(fn_eval, seed, rel=1e-4, size=8):
    ref, img = smooth_pair(seed, size=size)
    value, grad = fn_eval(ref, img)
    fd = finite_diff_grad(lambda m: fn_eval(ref, m)[0], img)
    err = np.linalg.norm(fd - grad) / max(np.linalg.norm(fd), 1e-12)
    assert err < rel, f"gradient mismatch: rel err {err:.3e}"


class TestGradientAccuracy:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_mse(self, seed):
        assert_grad_matches(lambda r, m: mse_loss(r, m), seed)

    @pytest.mark.parametrize("window", [5, 9, 11])
    def test_ncc(self, window):
        assert_grad_matches(
            lambda r, m: ncc_loss(r, m, window=window), seed=3 + window)

    @pytest.mark.parametrize("bins,sigma", [(16, 0.5), (32, 1.0), (64, 2.0)])
    def test_mi(self, bins, sigma):
        assert_grad_matches(
            lambda r, m: mi_loss(r, m, bins=bins, sigma=sigma), seed=bins)

    @pytest.mark.parametrize("exponents", [(1.0, 1.0, 1.0), (0.5, 1.0, 1.0),
                                           (0.5, 0.5, 0.5)])
    def test_ssim(self, exponents):
        assert_grad_matches(
            lambda r, m: ssim_loss(r, m, window=7, exponents=exponents),
            seed=11)

    @pytest.mark.parametrize("epsilon", [0.005, 0.01, 0.05])
    def test_ngf(self, epsilon):
        assert_grad_matches(
            lambda r, m: ngf_loss(r, m, epsilon=epsilon), seed=17)

    @pytest.mark.parametrize("radius", [1, 2])
    def test_mind(self, radius):
        assert_grad_matches(
            lambda r, m: mind_loss(r, m, radius=radius), seed=23)

    def test_smoothness(self):
        rng = np.random.default_rng(31)
        field = rng.standard_normal((2, 6, 7))
        value, grad = smoothness(field)
        fd = np.zeros_like(field)
        h = 1e-6
        it = np.nditer(field, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            plus = field.copy()
            plus[idx] += h
            minus = field.copy()
            minus[idx] -= h
            fd[idx] = (smoothness(plus).value - smoothness(minus).value) / (2 * h)
        assert np.allclose(fd, grad, rtol=1e-6, atol=1e-6)


class TestOptima:
    def test_mse_zero_at_identity(self):
        ref, _ = smooth_pair(0)
        ev = mse_loss(ref, ref)
        assert ev.value == 0.0
        assert np.all(ev.grad == 0.0)

    def test_ncc_near_minus_one_at_identity(self):
        ref, _ = smooth_pair(1, size=32)
        ev = ncc_loss(ref, ref)
        assert ev.value == pytest.approx(-1.0, abs=2e-3)

    def test_ssim_minus_one_at_identity(self):
        ref, _ = smooth_pair(2, size=32)
        ev = ssim_loss(ref, ref)
        assert ev.value == pytest.approx(-1.0, abs=1e-6)

    def test_mind_zero_at_identity(self):
        ref, _ = smooth_pair(3, size=16)
        ev = mind_loss(ref, ref)
        assert ev.value == 0.0
        assert np.abs(ev.grad).max() < 1e-12

    def test_mi_prefers_aligned_over_shuffled(self):
        ref, _ = smooth_pair(4, size=16)
        rng = np.random.default_rng(0)
        shuffled = rng.permutation(ref.ravel()).reshape(ref.shape)
        assert mi_loss(ref, ref).value < mi_loss(ref, shuffled).value

    def test_ngf_prefers_identity_over_rotated_structure(self):
        ref, _ = smooth_pair(5, size=16)
        assert ngf_loss(ref, ref).value < ngf_loss(ref, np.rot90(ref).copy()).value


class TestNccOracle:
    def test_matches_windowed_loops(self):
        ref, img = smooth_pair(7, size=8)
        window, eps = 5, 1e-5
        r_half = window // 2
        h, w = ref.shape
        total = 0.0
        for cy in range(h):
            for cx in range(w):
                ys = range(max(0, cy - r_half), min(h, cy + r_half + 1))
                xs = range(max(0, cx - r_half), min(w, cx + r_half + 1))
                f = np.array([ref[y, x] for y in ys for x in xs])
                m = np.array([img[y, x] for y in ys for x in xs])
                n = f.size
                a = np.sum(f * m) - f.mean() * np.sum(m)
                b = np.sum(f * f) - f.mean() * np.sum(f)
                c = np.sum(m * m) - m.mean() * np.sum(m)
                total += a * a / (b * c + eps)
        expected = -total / (h * w)
        assert ncc_loss(ref, img, window=window, epsilon=eps).value == \
            pytest.approx(expected, rel=1e-10)


class TestMiOracle:
    def test_matches_direct_parzen_histogram(self):
        ref, img = smooth_pair(8, size=12)
        bins, sigma = 16, 1.0
        span = bins - 1.0
        x = np.clip(ref.ravel(), 0, 1) * span
        y = np.clip(img.ravel(), 0, 1) * span
        joint = np.zeros((bins, bins))
        for xv, yv in zip(x, y):
            wx = np.exp(-((np.arange(bins) - xv) ** 2) / (2 * sigma**2))
            wy = np.exp(-((np.arange(bins) - yv) ** 2) / (2 * sigma**2))
            wx /= wx.sum()
            wy /= wy.sum()
            joint += np.outer(wx, wy)
        joint /= x.size
        pf = joint.sum(axis=1)
        pm = joint.sum(axis=0)
        mi = 0.0
        for i in range(bins):
            for j in range(bins):
                if joint[i, j] > 0:
                    mi += joint[i, j] * math.log(
                        joint[i, j] / (pf[i] * pm[j]))
        assert mi_loss(ref, img, bins=bins, sigma=sigma).value == \
            pytest.approx(-mi, rel=1e-10)

    def test_independent_images_give_near_zero_information(self):
        rng = np.random.default_rng(9)
        a = rng.uniform(0.1, 0.9, (64, 64))
        b = rng.uniform(0.1, 0.9, (64, 64))
        near_zero = mi_loss(a, b, bins=16).value
        aligned = mi_loss(a, a, bins=16).value
        assert aligned < near_zero
        assert near_zero > -0.05


class TestMindOracle:
    @staticmethod
    def _clamped_shift(img, dy, dx):
        h, w = img.shape
        out = np.empty_like(img)
        for y in range(h):
            for x in range(w):
                out[y, x] = img[min(max(y + dy, 0), h - 1),
                                min(max(x + dx, 0), w - 1)]
        return out

    def _descriptor(self, img, radius):
        sigma = radius / 2.0
        offs = ((0, 1), (0, -1), (1, 0), (-1, 0))
        dists = []
        for dy, dx in offs:
            d = img - self._clamped_shift(img, dy, dx)
            dists.append(gaussian_filter(d * d, sigma, mode="constant",
                                         cval=0.0, truncate=2.0))
        dists = np.stack(dists)
        v = np.maximum(dists.mean(axis=0), 1e-6)
        return np.exp(-(dists - dists.min(axis=0)[None]) / v[None])

    def test_value_matches_loops_on_small_image(self):
        ref, img = smooth_pair(10, size=6)
        expected = float(np.mean(
            (self._descriptor(img, 1) - self._descriptor(ref, 1)) ** 2))
        assert mind_loss(ref, img, radius=1).value == \
            pytest.approx(expected, rel=1e-12)

    def test_descriptor_peak_is_one(self):
        ref, _ = smooth_pair(11, size=12)
        desc = mind_descriptor(ref, radius=1)
        assert desc.shape == (4, 12, 12)
        assert np.allclose(desc.max(axis=0), 1.0)
        assert np.all(desc > 0)

    def test_invariant_to_affine_intensity_change(self):
        ref, _ = smooth_pair(12, size=16)
        ev = mind_loss(ref, 2.0 * ref + 0.3)
        assert ev.value < 1e-10


class TestSmoothness:
    def test_hand_computed_small_case(self):
        field = np.zeros((2, 2, 2))
        field[0] = [[0.0, 1.0], [2.0, 4.0]]
        # row diffs: 1^2 + 2^2; column diffs: 2^2 + 3^2
        assert smoothness(field).value == pytest.approx(1 + 4 + 4 + 9)

    def test_zero_for_constant_field(self):
        field = np.full((2, 5, 4), 3.7)
        ev = smoothness(field)
        assert ev.value == 0.0
        assert np.all(ev.grad == 0.0)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            smoothness(np.zeros((3, 4, 4)))


class TestMultichannel:
    def test_averages_channels(self):
        r0, m0 = smooth_pair(13)
        r1, m1 = smooth_pair(14)
        config = LossConfig(kind="mse")
        value, grads = multichannel_value_and_grad(
            config, np.stack([r0, r1]), np.stack([m0, m1]))
        e0 = mse_loss(r0, m0)
        e1 = mse_loss(r1, m1)
        assert value == pytest.approx((e0.value + e1.value) / 2)
        assert np.allclose(grads[0], e0.grad / 2)
        assert np.allclose(grads[1], e1.grad / 2)

    def test_shape_validation(self):
        config = LossConfig()
        with pytest.raises(ValueError):
            multichannel_value_and_grad(config, np.zeros((2, 8, 8)),
                                        np.zeros((3, 8, 8)))


class TestLossConfig:
    def test_round_trip(self):
        config = LossConfig(kind="ssim", ssim_exponents=(0.5, 1.0, 1.0),
                            ncc_window=7, mi_bins=64)
        again = LossConfig.from_dict(config.to_dict())
        assert again == config
        assert isinstance(again.ssim_exponents, tuple)

    def test_with_updates(self):
        config = LossConfig(kind="ncc")
        updated = config.with_updates(ncc_window=5)
        assert updated.ncc_window == 5
        assert config.ncc_window == 9
        assert updated.kind == "ncc"

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            LossConfig(kind="ssd")

    @pytest.mark.parametrize("kwargs", [
        {"ncc_window": 4}, {"ncc_epsilon": 0.0}, {"mi_bins": 4},
        {"mi_parzen_sigma": -1.0}, {"ssim_window": 2},
        {"ssim_exponents": (1.0, 1.0)}, {"ssim_exponents": (0.0, 1.0, 1.0)},
        {"ngf_epsilon": 0.0}, {"mind_patch_radius": 0},
        {"mind_neighborhood": "eight_neighbor"},
    ])
    def test_validation_errors(self, kwargs):
        with pytest.raises(ValueError):
            LossConfig(**kwargs)

    def test_dispatch_covers_all_kinds(self):
        ref, img = smooth_pair(15)
        for kind in ("mse", "ncc", "mi", "ssim", "ngf", "mind"):
            config = LossConfig(kind=kind, ncc_window=5, ssim_window=5)
            ev = loss_value_and_grad(config, ref, img)
            assert np.isfinite(ev.value)
            assert ev.grad.shape == ref.shape
