"""Blur kernels and synthetic pair generation against loop oracles."""

import math

import numpy as np
import pytest

from lmfn.blur import (BlurSpec, make_blur_kernel, spec_for_sample,
                       synthesize_pair, synthetic_sharp_patch)
from oracles import blur_loops, gaussian_density_kernel


# -- spec validation ---------------------------------------------------------

@pytest.mark.parametrize("bad", [
    BlurSpec(kind="box"),
    BlurSpec(kind="gaussian", sigma=0.0),
    BlurSpec(kind="gaussian", sigma=-1.0),
    BlurSpec(kind="linear-motion", length=4),
    BlurSpec(kind="linear-motion", length=1),
    BlurSpec(kind="linear-motion", angle=180.0),
    BlurSpec(kind="linear-motion", angle=-5.0),
])
def test_invalid_specs_rejected(bad):
    with pytest.raises(ValueError):
        bad.validate()


def test_default_spec_valid():
    BlurSpec().validate()


# -- kernel construction -----------------------------------------------------

def test_gaussian_small_sigma_is_near_delta():
    k = make_blur_kernel(BlurSpec(kind="gaussian", sigma=0.1))
    assert k.shape == (3, 3)
    assert k[1, 1] > 0.99


def test_gaussian_matches_density_oracle():
    for sigma in (0.5, 1.0, 1.5, 2.3):
        k = make_blur_kernel(BlurSpec(kind="gaussian", sigma=sigma))
        radius = max(1, math.ceil(3.0 * sigma))
        ref = gaussian_density_kernel(sigma, radius)
        assert k.shape == ref.shape
        np.testing.assert_allclose(k, ref, atol=1e-12)


def test_motion_horizontal_is_uniform_row():
    k = make_blur_kernel(BlurSpec(kind="linear-motion", length=3, angle=0.0))
    np.testing.assert_allclose(k, np.full((1, 3), 1.0 / 3.0), atol=1e-12)


def test_motion_vertical_is_uniform_column():
    k = make_blur_kernel(BlurSpec(kind="linear-motion", length=5, angle=90.0))
    np.testing.assert_allclose(k, np.full((5, 1), 1.0 / 5.0), atol=1e-12)


def test_motion_diagonal_hits_the_diagonal():
    # unit-spaced samples at 45 degrees round onto main-diagonal cells only
    k = make_blur_kernel(BlurSpec(kind="linear-motion", length=5, angle=45.0))
    assert k.shape[0] == k.shape[1]
    off_diagonal = k - np.diag(np.diag(k))
    assert np.count_nonzero(off_diagonal) == 0
    assert np.count_nonzero(np.diag(k)) == k.shape[0]


@pytest.mark.parametrize("spec", [
    BlurSpec(kind="gaussian", sigma=0.4),
    BlurSpec(kind="gaussian", sigma=1.5),
    BlurSpec(kind="gaussian", sigma=3.1),
    BlurSpec(kind="linear-motion", length=3, angle=0.0),
    BlurSpec(kind="linear-motion", length=9, angle=30.0),
    BlurSpec(kind="linear-motion", length=15, angle=137.0),
])
def test_kernels_normalized_and_nonnegative(spec):
    k = make_blur_kernel(spec)
    assert abs(k.sum() - 1.0) < 1e-6
    assert (k >= 0).all()


@pytest.mark.parametrize("spec", [
    BlurSpec(kind="gaussian", sigma=0.7),
    BlurSpec(kind="gaussian", sigma=2.0),
    BlurSpec(kind="linear-motion", length=7, angle=0.0),
    BlurSpec(kind="linear-motion", length=7, angle=60.0),
])
def test_kernels_point_symmetric(spec):
    k = make_blur_kernel(spec)
    np.testing.assert_allclose(k, k[::-1, ::-1], atol=1e-12)


# -- pair synthesis ----------------------------------------------------------

def test_delta_kernel_leaves_image_unchanged():
    # sigma=0.01 underflows every off-center density sample to exactly 0
    spec = BlurSpec(kind="gaussian", sigma=0.01)
    k = make_blur_kernel(spec)
    assert k[1, 1] == 1.0 and np.count_nonzero(k) == 1
    sharp = synthetic_sharp_patch(seed=3, size=16)
    blurred, kept = synthesize_pair(sharp, spec)
    assert np.array_equal(blurred, sharp)
    assert np.array_equal(kept, sharp)


def test_constant_image_stays_constant():
    sharp = np.full((3, 20, 20), 0.37, dtype=np.float32)
    blurred, _ = synthesize_pair(sharp, BlurSpec(kind="gaussian", sigma=1.5))
    np.testing.assert_allclose(blurred, 0.37, atol=1e-6)


@pytest.mark.parametrize("spec", [
    BlurSpec(kind="gaussian", sigma=1.0),
    BlurSpec(kind="linear-motion", length=5, angle=30.0),
])
def test_blur_matches_loop_oracle(spec):
    rng = np.random.default_rng(11)
    checker = np.indices((18, 18)).sum(axis=0) % 2
    sharp = np.stack([checker, rng.uniform(0, 1, (18, 18)),
                      rng.uniform(0, 1, (18, 18))]).astype(np.float32)
    blurred, _ = synthesize_pair(sharp, spec)
    kernel = make_blur_kernel(spec)
    for c in range(3):
        ref = np.clip(blur_loops(sharp[c].astype(np.float64), kernel), 0, 1)
        np.testing.assert_allclose(blurred[c], ref, atol=1e-5)


def test_output_clamped_to_unit_range():
    sharp = synthetic_sharp_patch(seed=5, size=24)
    blurred, _ = synthesize_pair(sharp, BlurSpec(kind="linear-motion", length=7))
    assert blurred.min() >= 0.0 and blurred.max() <= 1.0
    assert blurred.dtype == np.float32


def test_kernel_larger_than_image_rejected():
    tiny = np.zeros((3, 4, 4), dtype=np.float32)
    with pytest.raises(ValueError, match="too large"):
        synthesize_pair(tiny, BlurSpec(kind="gaussian", sigma=3.0))


def test_non_image_input_rejected():
    with pytest.raises(ValueError, match="C,H,W"):
        synthesize_pair(np.zeros((4, 4), dtype=np.float32), BlurSpec())


# -- per-sample jitter -------------------------------------------------------

def test_jitter_is_deterministic_per_index():
    base = BlurSpec(kind="gaussian", sigma=1.5, seed=9)
    a = spec_for_sample(base, 7)
    b = spec_for_sample(base, 7)
    assert a == b
    assert spec_for_sample(base, 8) != a


def test_jitter_bounds():
    base = BlurSpec(kind="gaussian", sigma=2.0, seed=1)
    for i in range(50):
        s = spec_for_sample(base, i)
        assert 0.8 * 2.0 <= s.sigma <= 1.25 * 2.0
    base = BlurSpec(kind="linear-motion", length=9, seed=1)
    for i in range(50):
        s = spec_for_sample(base, i)
        assert 0.0 <= s.angle < 180.0
        s.validate()


def test_jitter_keyed_by_spec_seed():
    a = spec_for_sample(BlurSpec(seed=0), 3)
    b = spec_for_sample(BlurSpec(seed=1), 3)
    assert a.sigma != b.sigma


# -- synthetic sharp patches -------------------------------------------------

def test_sharp_patch_shape_and_range():
    img = synthetic_sharp_patch(seed=0, size=48)
    assert img.shape == (3, 48, 48)
    assert img.dtype == np.float32
    assert img.min() >= 0.0 and img.max() <= 1.0
    assert img.max() > 0.9  # normalized to span the range


def test_sharp_patch_deterministic():
    assert np.array_equal(synthetic_sharp_patch(2), synthetic_sharp_patch(2))
    assert not np.array_equal(synthetic_sharp_patch(2), synthetic_sharp_patch(3))


def test_sharp_patch_has_structure():
    img = synthetic_sharp_patch(seed=4, size=32)
    # a deblur target needs edges: neighboring-pixel differences must not vanish
    assert np.abs(np.diff(img, axis=2)).max() > 0.05
