import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from localvis.exceptions import InputValidationError
from localvis.probe import (
    ProbeParams,
    accuracy,
    adam_update,
    logits,
    loss_and_grads,
    ncm_classify,
    ncm_fit,
    train_probe,
)


def _loss(p, z, y):
    return loss_and_grads(p, z, y)[0]


def finite_difference_error(seed, n_classes=10, dim=12, batch=6, h=1e-6):
    """Largest relative error of the analytic gradients against central differences."""
    rng = np.random.default_rng(seed)
    p = ProbeParams.init(n_classes, dim, rng)
    z, y = rng.standard_normal((batch, dim)), rng.integers(0, n_classes, batch)
    _, dW, db, dz = loss_and_grads(p, z, y)
    num_W, num_b, num_z = np.zeros_like(dW), np.zeros_like(db), np.zeros_like(dz)
    for idx in np.ndindex(p.W.shape):
        old = p.W[idx]
        p.W[idx] = old + h
        up = _loss(p, z, y)
        p.W[idx] = old - h
        num_W[idx] = (up - _loss(p, z, y)) / (2 * h)
        p.W[idx] = old
    for i in range(n_classes):
        old = p.b[i]
        p.b[i] = old + h
        up = _loss(p, z, y)
        p.b[i] = old - h
        num_b[i] = (up - _loss(p, z, y)) / (2 * h)
        p.b[i] = old
    for idx in np.ndindex(z.shape):
        zp, zm = z.copy(), z.copy()
        zp[idx] += h
        zm[idx] -= h
        num_z[idx] = (_loss(p, zp, y) - _loss(p, zm, y)) / (2 * h)
    rel = lambda a, n: np.linalg.norm(a - n) / max(np.linalg.norm(n), 1e-12)  # noqa: E731
    return max(rel(dW, num_W), rel(db, num_b), rel(dz, num_z))


@pytest.mark.parametrize("seed", range(3))
def test_gradients_match_finite_differences(seed):
    assert finite_difference_error(seed) < 1e-5


def test_zero_probe_is_uniform():
    p = ProbeParams.init(10, 4, zero=True)
    loss, *_ = loss_and_grads(p, np.ones((3, 4)), np.array([0, 4, 9]))
    assert loss == pytest.approx(math.log(10))
    np.testing.assert_array_equal(logits(p, np.ones((3, 4))), 0.0)


def test_loss_oracle():
    p = ProbeParams(W=np.array([[1.0, 0.0], [0.0, 2.0]]), b=np.array([0.5, -0.5]),
                    mW=np.zeros((2, 2)), vW=np.zeros((2, 2)), mb=np.zeros(2), vb=np.zeros(2))
    z = np.array([[1.0, 1.0]])
    l0, l1 = 1.5, 1.5  # equal logits
    assert loss_and_grads(p, z, np.array([0]))[0] == pytest.approx(-l0 + math.log(math.exp(l0) + math.exp(l1)))


def test_adam_matches_scalar_reference():
    rng = np.random.default_rng(0)
    p = ProbeParams.init(2, 1, rng)
    w, m, v = p.W[0, 0], 0.0, 0.0
    lr, wd, b1, b2, eps = 1e-2, 1e-3, 0.9, 0.999, 1e-8
    for t in range(1, 6):
        g = float(rng.standard_normal())
        dW = np.zeros((2, 1))
        dW[0, 0] = g
        adam_update(p, dW, np.zeros(2), lr, wd)
        g += wd * w
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
        assert p.W[0, 0] == pytest.approx(w, abs=1e-15)
    assert p.t == 5


def test_train_probe_learns_separable_data():
    rng = np.random.default_rng(1)
    centres = rng.standard_normal((3, 5)) * 4
    y = np.repeat(np.arange(3), 30)
    Z = centres[y] + rng.standard_normal((90, 5)) * 0.3
    p = ProbeParams.init(3, 5, rng)
    p, losses = train_probe(p, Z, y, 30, 8, lambda e: np.random.default_rng(e).permutation(90), lr=1e-2)
    assert losses[-1] < losses[0] and accuracy(p, Z, y) == 1.0
    assert p.t == 30 * (90 // 8)  # last partial batch dropped


def test_bad_labels_rejected():
    p = ProbeParams.init(3, 2, zero=True)
    with pytest.raises(InputValidationError):
        loss_and_grads(p, np.ones((2, 2)), np.array([0, 3]))
    with pytest.raises(InputValidationError):
        loss_and_grads(p, np.ones((2, 3)), np.array([0, 1]))


def test_ncm_feature_equal_to_mean():
    Z = np.array([[1.0, 0.0], [3.0, 0.0], [0.0, 2.0], [0.0, 4.0]])
    y = np.array([0, 0, 1, 1])
    means = ncm_fit(Z, y)
    np.testing.assert_array_equal(ncm_classify(means[1], means), [1])
    np.testing.assert_array_equal(ncm_classify(means, means), [0, 1])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_ncm_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    Z, y = rng.standard_normal((40, 6)), rng.integers(0, 4, 40)
    Q = rng.standard_normal((15, 6))
    means = ncm_fit(Z, y, 4)
    got = ncm_classify(Q, means)
    for q, g in zip(Q, got):
        best, best_d = None, np.inf
        for c in range(4):
            rows = [Z[i] for i in range(40) if y[i] == c]
            if not rows:
                continue
            mu = np.sum(rows, axis=0) / len(rows)
            d = 1 - (q @ mu) / (np.linalg.norm(q) * np.linalg.norm(mu))
            if d < best_d - 1e-12:
                best, best_d = c, d
        assert g == best


def test_ncm_empty_class_never_chosen():
    Z = np.array([[1.0, 0.0], [0.0, 1.0]])
    means = ncm_fit(Z, np.array([0, 2]), 3)
    assert np.isnan(means[1]).all()
    assert 1 not in ncm_classify(np.random.default_rng(0).standard_normal((50, 2)), means)
