"""Competitive main pathway: one layer of the four-layer hierarchy, with
lateral inhibition inside divisive normalisation plus slow homeostatic gains."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d

from .exceptions import ConfigError, NumericalError

DEAD_BAND = (0.75, 1.25)


@dataclass(frozen=True)
class LayerParams:
    alpha_inhib: float = 0.2
    alpha_div: float = 1.0
    beta_div: float = 0.5
    w_g: float = 0.5
    w_l: float = 0.5
    n_iters: int = 3
    local_pool: int = 9

    def __post_init__(self):
        if self.alpha_div <= 0:
            raise ConfigError("alpha_div must be > 0")
        if self.n_iters < 1:
            raise ConfigError("n_iters must be >= 1")


@dataclass
class LayerState:
    """Everything a forward pass produces for one layer (batch-major)."""

    h: np.ndarray  # raw drive W x, (B, n)
    h_tilde: np.ndarray  # after homeostatic correction
    y: np.ndarray  # activations, (B, n), >= 0
    a_local: np.ndarray  # (B, n)
    a_mean: np.ndarray  # (B,)
    denom: np.ndarray  # (B, n)


# ---------------------------------------------------------------------------
# lateral weights, stored as a band around the diagonal


def lateral_mask(n, radius):
    """Boolean n x n neighbourhood mask, |i - j| <= radius, diagonal excluded."""
    idx = np.arange(n)
    d = np.abs(idx[:, None] - idx[None, :])
    return (d <= radius) & (d > 0)


def band_to_dense(band):
    """Expand a ``(n, 2r+1)`` band to the dense masked matrix L * M.

    Column ``r + k`` of row ``i`` holds the weight from unit ``i + k``.
    """
    n, width = band.shape
    r = (width - 1) // 2
    dense = np.zeros((n, n))
    for k in range(-r, r + 1):
        if k == 0:
            continue
        rows = np.arange(max(0, -k), min(n, n - k))
        dense[rows, rows + k] = band[rows, r + k]
    return dense


def valid_band(n, radius):
    """Mask of band entries that refer to an existing neighbour."""
    width = 2 * radius + 1
    valid = np.zeros((n, width), dtype=bool)
    for k in range(-radius, radius + 1):
        if k == 0:
            continue
        rows = np.arange(max(0, -k), min(n, n - k))
        valid[rows, radius + k] = True
    return valid


def lateral_input(band, y):
    """``sum_{j != i} (L * M)_ij y_j`` for a batch ``y`` of shape (B, n)."""
    n, width = band.shape
    r = (width - 1) // 2
    out = np.zeros_like(y)
    for k in range(-r, r + 1):
        if k == 0 or abs(k) >= n:
            continue
        if k > 0:
            out[:, : n - k] += band[: n - k, r + k] * y[:, k:]
        else:
            out[:, -k:] += band[-k:, r + k] * y[:, : n + k]
    return out


def band_outer(y, radius):
    """Batch-mean ``y_i y_j`` restricted to the band (zero where invalid)."""
    b, n = y.shape
    width = 2 * radius + 1
    out = np.zeros((n, width))
    for k in range(-radius, radius + 1):
        if k == 0 or abs(k) >= n:
            continue
        if k > 0:
            out[: n - k, radius + k] = (y[:, : n - k] * y[:, k:]).mean(axis=0)
        else:
            out[-k:, radius + k] = (y[:, -k:] * y[:, : n + k]).mean(axis=0)
    return out


# ---------------------------------------------------------------------------
# forward


def local_pool(a, size):
    """Local gain pooling: uniform window over neighbouring units."""
    if size <= 1:
        return a
    return uniform_filter1d(a, size=size, axis=-1, mode="nearest")


def divisive_denominator(a, p: LayerParams):
    """sqrt(alpha_div + beta_div * (w_g * mean(a) + w_l * pool(a))^2)."""
    a_mean = a.mean(axis=-1)
    a_loc = local_pool(a, p.local_pool)
    pooled = p.w_g * a_mean[..., None] + p.w_l * a_loc
    return np.sqrt(p.alpha_div + p.beta_div * pooled**2), a_loc, a_mean


def homeostatic_correction(g, kappa_g):
    """kappa_g * (g - clip(g, 0.75, 1.25)); zero inside the dead band."""
    return kappa_g * (g - np.clip(g, *DEAD_BAND))


def drive(inputs, weights):
    """Concatenate ``W_s @ x_s`` over streams: (B, sum of stream widths)."""
    return np.concatenate([x @ w.T for x, w in zip(inputs, weights)], axis=1)


def fixed_point(h_tilde, band, denom, alpha, n_iters, return_history=False):
    """Synchronous iteration of the implicit inhibition equation."""
    y = np.maximum(h_tilde, 0.0) / denom
    history = [y]
    if band is not None and alpha != 0.0:
        for _ in range(n_iters):
            y = np.maximum(h_tilde - alpha * lateral_input(band, y), 0.0) / denom
            if return_history:
                history.append(y)
    return (y, history) if return_history else y


def layer_forward(inputs, weights, band, gains, p: LayerParams, kappa_g=0.1, name="layer"):
    """One layer of the competitive hierarchy.

    Parameters
    ----------
    inputs : list of (B, d_s) arrays, one per stream
    weights : list of (n_s, d_s) arrays
    band : (n, 2r+1) lateral weights or None
    gains : (n,) homeostatic gains
    """
    h = drive(inputs, weights)
    h_tilde = h - homeostatic_correction(gains, kappa_g)
    a = np.maximum(h_tilde, 0.0)
    denom, a_loc, a_mean = divisive_denominator(a, p)
    y = fixed_point(h_tilde, band, denom, p.alpha_inhib, p.n_iters)
    if not np.all(np.isfinite(y)):
        raise NumericalError(name)
    return LayerState(h=h, h_tilde=h_tilde, y=y, a_local=a_loc, a_mean=a_mean, denom=denom)


def homeostasis_update(gains, batch_acts, eta_g=0.01):
    """EMA of per-unit batch-mean activity; returns the new gains."""
    y_bar = np.asarray(batch_acts).mean(axis=0)
    return (1.0 - eta_g) * gains + eta_g * y_bar


def split_streams(y, widths):
    """Split concatenated layer activity back into per-stream blocks."""
    edges = np.cumsum(widths)[:-1]
    return np.split(y, edges, axis=-1)
