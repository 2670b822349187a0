import numpy as np
import pytest

from ssrl.augment import (StrongAugConfig, WeakAugConfig, apply_views,
                          strong_style, weak_gaussian)
from ssrl.errors import ShapeError


def rng_for(seed):
    return np.random.default_rng(seed)


def random_image(seed, size=32, lo=0.3, hi=0.7):
    return rng_for(seed).uniform(lo, hi, size=(size, size)).astype(np.float32)


class TestWeakGaussian:
    def test_zero_sigma_is_identity(self):
        img = random_image(0)
        out = weak_gaussian(img, WeakAugConfig(sigma=0.0), rng_for(1))
        assert np.array_equal(out, img)

    def test_zero_pixel_prob_is_identity(self):
        img = random_image(2)
        out = weak_gaussian(img, WeakAugConfig(sigma=0.2, pixel_prob=0.0), rng_for(3))
        assert np.array_equal(out, img)

    def test_half_probability_changes_about_half_the_pixels(self):
        # Binomial(4096, 0.5)/4096 lies in [0.44, 0.56] except with
        # probability < 1e-3 (7.7 sigma)
        img = random_image(4, size=64)
        out = weak_gaussian(img, WeakAugConfig(sigma=0.1, pixel_prob=0.5), rng_for(5))
        frac = (out != img).mean()
        assert 0.44 <= frac <= 0.56

    def test_fixed_seed_is_repeatable(self):
        img = random_image(6)
        cfg = WeakAugConfig()
        a = weak_gaussian(img, cfg, rng_for(7))
        b = weak_gaussian(img, cfg, rng_for(7))
        assert np.array_equal(a, b)

    def test_output_range_and_extents(self):
        img = random_image(8, lo=0.0, hi=1.0)
        out = weak_gaussian(img, WeakAugConfig(sigma=0.5), rng_for(9))
        assert out.shape == img.shape
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_config_validation(self):
        with pytest.raises(ValueError):
            WeakAugConfig(sigma=-0.1)
        with pytest.raises(ValueError):
            WeakAugConfig(pixel_prob=1.5)


class TestStrongStyle:
    def test_lambda_zero_is_identity_up_to_roundtrip(self):
        content = random_image(10)
        style = random_image(11)
        out = strong_style(content, style, StrongAugConfig(lam=0.0))
        assert np.abs(out - content).max() < 1e-6

    def test_self_mixing_is_identity(self):
        img = random_image(12)
        out = strong_style(img, img.copy(), StrongAugConfig(lam=0.8))
        assert np.abs(out - img).max() < 1e-6

    def test_full_swap_of_constant_images(self):
        # the spectrum of a constant image is a single DC coefficient with
        # zero phase, so a full amplitude swap yields the style constant
        size = 16
        content = np.full((size, size), 0.3, dtype=np.float64)
        style = np.full((size, size), 0.8, dtype=np.float64)
        out = strong_style(content, style, StrongAugConfig(lam=1.0, radius=size))
        assert np.abs(out - 0.8).max() < 1e-6

    def test_extent_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            strong_style(random_image(13, size=16), random_image(14, size=32),
                         StrongAugConfig())

    def test_output_in_unit_range(self):
        out = strong_style(random_image(15, lo=0, hi=1), random_image(16, lo=0, hi=1),
                           StrongAugConfig(lam=1.0))
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_config_validation(self):
        with pytest.raises(ValueError):
            StrongAugConfig(lam=1.2)
        with pytest.raises(ValueError):
            StrongAugConfig(radius=-1)


class TestApplyViews:
    def _batch(self, seed, n=4, size=16):
        return rng_for(seed).uniform(0.2, 0.8, size=(n, size, size)).astype(np.float32)

    def test_no_op_configs_return_input(self):
        x = self._batch(20)
        x_w, x_s = apply_views(x, WeakAugConfig(sigma=0.0),
                               StrongAugConfig(lam=0.0), x, rng_for(21))
        assert np.array_equal(x_w, x)
        assert np.abs(x_s - x).max() < 1e-6

    def test_deterministic_under_fixed_seed(self):
        x = self._batch(22)
        args = (WeakAugConfig(), StrongAugConfig(), x)
        a = apply_views(x, *args, rng_for(23))
        b = apply_views(x, *args, rng_for(23))
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_strong_view_differs_with_full_mixing(self):
        x = self._batch(24, n=2)
        x[1] += 0.15  # make the pool styles distinct
        x = np.clip(x, 0, 1)
        x_w, x_s = apply_views(x, WeakAugConfig(sigma=0.0),
                               StrongAugConfig(lam=1.0), x[::-1].copy(), rng_for(25))
        assert np.abs(x_s - x_w).max() > 1e-4

    def test_empty_style_pool_rejected(self):
        x = self._batch(26)
        with pytest.raises(ValueError):
            apply_views(x, WeakAugConfig(), StrongAugConfig(),
                        np.zeros((0, 16, 16)), rng_for(27))

    def test_extents_preserved(self):
        x = self._batch(28)
        x_w, x_s = apply_views(x, WeakAugConfig(), StrongAugConfig(), x, rng_for(29))
        assert x_w.shape == x.shape and x_s.shape == x.shape
        for arr in (x_w, x_s):
            assert arr.min() >= 0.0 and arr.max() <= 1.0
