import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from localvis.config import RunConfig
from localvis.exceptions import ConfigError, InputValidationError
from localvis.frontend import (
    HPE_RGB_TO_LMS,
    FrontEnd,
    SaliencyWeights,
    build_gabor_bank,
    gabor_energy,
    gabor_kernel,
    haar_features,
    opponent_transform,
    saliency_map,
)

unit_images = arrays(np.float64, (4, 4, 3), elements=st.floats(0, 1))


def test_grey_pixel_identity_mapping():
    c = 0.37
    out = opponent_transform(np.full((1, 1, 3), c))
    np.testing.assert_allclose(out[0, 0], [2 * c, 0.0, -c], atol=1e-15)


def test_red_pixel_identity_mapping():
    out = opponent_transform(np.array([[[1.0, 0.0, 0.0]]]))
    np.testing.assert_array_equal(out[0, 0], [1.0, 1.0, -1.0])


def test_hpe_golden_pixel():
    # frozen from a pure-Python scalar evaluation of the two 3x3 products
    out = opponent_transform(np.array([[[0.2, 0.5, 0.8]]]), HPE_RGB_TO_LMS, linearize=True)
    np.testing.assert_allclose(
        out[0, 0], [0.39387398202068014, -0.05238740195539082, 0.20609764964839972], rtol=1e-12
    )


def test_opponent_rejects_nonfinite():
    img = np.zeros((4, 4, 3))
    img[1, 1, 1] = np.nan
    with pytest.raises(InputValidationError):
        opponent_transform(img)


def test_opponent_rejects_singular_mapping():
    with pytest.raises(InputValidationError):
        opponent_transform(np.zeros((4, 4, 3)), np.zeros((3, 3)))


@given(unit_images, unit_images, st.floats(-3, 3), st.floats(-3, 3))
def test_opponent_linearity(a_img, b_img, a, b):
    lhs = opponent_transform(a * a_img + b * b_img)
    rhs = a * opponent_transform(a_img) + b * opponent_transform(b_img)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


@given(unit_images)
def test_luminance_nonnegative(img):
    assert np.all(opponent_transform(img)[..., 0] >= 0)


def test_bank_layout_and_zero_mean():
    bank = build_gabor_bank()
    assert len(bank.frequencies) == 7 and len(bank.thetas) == 7 and bank.n_streams == 49
    for f, sigma, ker in zip(bank.frequencies, bank.sigmas, bank.kernels):
        assert ker.shape[:2] == (7, 2)
        size = ker.shape[-1]
        assert size % 2 == 1 and (size - 1) // 2 == math.ceil(3 * sigma)
        assert np.all(np.abs(ker.sum(axis=(-2, -1))) < 1e-6)


def test_sigma_at_quarter_cycle():
    assert round(build_gabor_bank([0.25], 1).sigmas[0], 2) == 2.24


def test_quadrature_pair_orthogonal():
    re, im = gabor_kernel(0.25, 0.0, 0.0), gabor_kernel(0.25, 0.0, math.pi / 2)
    assert abs(np.sum(re * im)) / (np.linalg.norm(re) * np.linalg.norm(im)) < 1e-9


def test_frequency_above_nyquist_rejected():
    with pytest.raises(ConfigError):
        build_gabor_bank([0.1, 0.6])


def test_constant_image_energy_is_epsilon():
    eps = 1e-6
    energy = gabor_energy(np.full((32, 32), 0.8), build_gabor_bank(), eps)
    assert np.max(np.abs(energy - eps)) < 1e-6


def _grating(f, shift=0.0, n=64):
    x = np.arange(n)[None, :] + shift
    return np.repeat(0.5 + 0.4 * np.cos(2 * np.pi * f * x), n, axis=0)


def test_grating_energy_flat_in_interior():
    f = 0.2
    bank = build_gabor_bank([f], 7)
    energy = gabor_energy(_grating(f), bank)[0]  # theta = 0 stream
    r = bank.radius(0)
    interior = energy[r:-r, r:-r]
    assert interior.std() < 0.05 * interior.mean()


def test_quarter_period_shift_invariance():
    f = 0.2
    bank = build_gabor_bank([f], 7)
    r = bank.radius(0)
    e0 = gabor_energy(_grating(f), bank)[0, r:-r, r:-r]
    e1 = gabor_energy(_grating(f, shift=1 / (4 * f)), bank)[0, r:-r, r:-r]
    assert np.max(np.abs(e1 - e0) / e0) < 0.01


@settings(max_examples=20, deadline=None)
@given(arrays(np.float64, (16, 16), elements=st.floats(-5, 5)))
def test_energy_at_least_epsilon(lum):
    assert gabor_energy(lum, build_gabor_bank([0.1, 0.3], 3), 1e-4).min() >= 1e-4


def test_haar_constant_has_no_detail():
    c = np.array([0.3, -0.2, 0.7])
    out = haar_features(np.broadcast_to(c, (8, 8, 3)))
    assert out.shape == (8, 8, 12)
    bands = out.reshape(8, 8, 3, 4)
    np.testing.assert_array_equal(bands[..., 1:], 0.0)
    np.testing.assert_allclose(bands[..., 0], np.broadcast_to(2 * c, (8, 8, 3)))


def test_haar_checkerboard_energy_in_hh():
    board = np.indices((8, 8)).sum(axis=0) % 2 * 1.0
    bands = haar_features(np.repeat(board[..., None], 3, axis=-1)).reshape(8, 8, 3, 4)
    np.testing.assert_allclose(bands[..., 1], 0.0, atol=1e-15)
    np.testing.assert_allclose(bands[..., 2], 0.0, atol=1e-15)
    assert np.all(np.abs(bands[..., 3]) == 1.0)


def test_haar_rejects_odd_sizes():
    with pytest.raises(InputValidationError):
        haar_features(np.zeros((7, 8, 3)))


@settings(max_examples=25)
@given(arrays(np.float64, (6, 6, 3), elements=st.floats(-10, 10)))
def test_haar_always_twelve_channels(img):
    assert haar_features(img).shape == (6, 6, 12)


def test_saliency_neutral():
    s = saliency_map(np.zeros((8, 8)), np.zeros((8, 8)), SaliencyWeights(0.0, 0.0, 0.0))
    np.testing.assert_array_equal(s, 0.5)


def test_saliency_saturates():
    intensity = np.zeros((8, 8))
    intensity[2, 3] = 50.0
    s = saliency_map(intensity, np.zeros((8, 8)), SaliencyWeights(1.0, 0.0, 0.0))
    assert s[2, 3] > 1 - 1e-15 and s[2, 3] < 1.0


def test_saliency_golden():
    rng = np.random.default_rng(20240101)
    s = saliency_map(rng.random((8, 8)), rng.random((8, 8)))
    assert s[0, 0] == pytest.approx(0.7591225110010497, rel=1e-12)
    assert s[3, 4] == pytest.approx(0.8063252794555478, rel=1e-12)
    assert s[7, 7] == pytest.approx(0.5392448415570167, rel=1e-12)
    assert s.sum() == pytest.approx(47.71390505094244, rel=1e-12)


@given(arrays(np.float64, (4, 4), elements=st.floats(-1e3, 1e3)), arrays(np.float64, (4, 4), elements=st.floats(-1e3, 1e3)))
def test_saliency_strictly_inside_unit_interval(i, o):
    s = saliency_map(i, o)
    assert np.all((s > 0) & (s < 1))


def test_frontend_shapes():
    rng = np.random.default_rng(0)
    feats = FrontEnd(RunConfig())(rng.random((3, 32, 32, 3)))
    assert feats.gabor.shape == (3, 7, 7, 8, 8)
    assert feats.haar.shape == (3, 12, 8, 8)
    assert feats.saliency.shape == (3, 8, 8)
    assert np.all((feats.saliency > 0) & (feats.saliency < 1))


def test_frontend_rejects_out_of_range_pixels():
    with pytest.raises(InputValidationError):
        FrontEnd(RunConfig())(np.full((1, 32, 32, 3), 2.0))
