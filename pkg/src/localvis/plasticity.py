"""Local weight-update rules.

Every function here returns a delta and never mutates its inputs.  A rule
sees only the activity on both sides of the connection it updates
plus that connection's current weights.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import InputValidationError

RHO_RANGE = (0.5, 1.5)


@dataclass(frozen=True)
class RuleCoefficients:
    alpha_H: float = 5e-3
    alpha_A: float = 2e-3
    lambda_F: float = 3e-3
    alpha_R: float = 1e-3
    delta_H: float = 1e-4
    delta_R: float = 1e-4

    def __post_init__(self):
        for name, value in vars(self).items():
            if value < 0:
                raise InputValidationError(f"{name} must be >= 0")

    @classmethod
    def from_config(cls, cfg, active=None):
        active = cfg.active_components() if active is None else active
        return cls(
            alpha_H=cfg.alpha_H if "hebbian" in active else 0.0,
            alpha_A=cfg.alpha_A if "anti_hebbian" in active else 0.0,
            lambda_F=cfg.lambda_F if "free_energy" in active else 0.0,
            alpha_R=cfg.alpha_R if "recursive" in active else 0.0,
            delta_H=cfg.delta_H,
            delta_R=cfg.delta_R,
        )


@dataclass
class PlasticityGain:
    """Per-neuron plasticity gain rho and its activity trace."""

    rho: np.ndarray
    trace: np.ndarray
    gamma: float = 0.5
    theta_target: float | None = None
    decay: float = 0.9
    rho_min: float = RHO_RANGE[0]
    rho_max: float = RHO_RANGE[1]

    @classmethod
    def ones(cls, n, **kw):
        return cls(rho=np.ones(n), trace=np.zeros(n), **kw)

    def clipped(self):
        return np.clip(self.rho, self.rho_min, self.rho_max)


def _batch(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None]
    if x.shape[0] < 1:
        raise InputValidationError("batch must contain at least one sample")
    return x


def hebbian_delta(x, y, W, delta_H=1e-4):
    """B^-1 sum_b y_i x_j - delta_H W_ij."""
    x, y = _batch(x), _batch(y)
    return y.T @ x / x.shape[0] - delta_H * W


def anti_hebbian_delta(y):
    """-B^-1 sum_b y_i y_j for i != j; the diagonal is exactly zero."""
    y = _batch(y)
    d = -(y.T @ y) / y.shape[0]
    np.fill_diagonal(d, 0.0)
    return d


def reconstruction(W, y):
    """x_hat_j = sum_k W_kj y_k for each sample."""
    return _batch(y) @ W


def free_energy_delta(x, y, W, lambda_F=3e-3):
    """B^-1 sum_b y_i (x_j - x_hat_j) - lambda_F W_ij."""
    x, y = _batch(x), _batch(y)
    err = x - reconstruction(W, y)
    return y.T @ err / x.shape[0] - lambda_F * W


def recursive_delta(y_pass2, y_pass1, W, delta_R=1e-4):
    """Cross-pass outer product: pass-2 post activity with pass-1 pre activity."""
    a, b = _batch(y_pass2), _batch(y_pass1)
    return a.T @ b / a.shape[0] - delta_R * W


def compose_delta(gain, terms, coeffs: RuleCoefficients):
    """rho_i * (alpha_H Hebb + alpha_A AHebb + lambda_F FE + alpha_R Rec).

    ``terms`` maps any of ``hebb``, ``ahebb``, ``fe``, ``rec`` to an array
    of the same shape; missing terms contribute nothing.  ``gain`` is a
    :class:`PlasticityGain`, an array of per-row gains, or ``None`` (rho=1).
    """
    weights = {"hebb": coeffs.alpha_H, "ahebb": coeffs.alpha_A, "fe": coeffs.lambda_F, "rec": coeffs.alpha_R}
    unknown = set(terms) - set(weights)
    if unknown:
        raise InputValidationError(f"unknown plasticity terms: {sorted(unknown)}")
    shapes = {np.shape(t) for t in terms.values()}
    if len(shapes) > 1:
        raise InputValidationError(f"plasticity terms differ in shape: {sorted(shapes)}")
    if not terms:
        raise InputValidationError("no plasticity terms given")
    total = None
    for key, term in terms.items():
        c = weights[key]
        if c == 0.0:
            continue
        contrib = c * np.asarray(term, dtype=np.float64)
        total = contrib if total is None else total + contrib
    if total is None:
        return np.zeros(shapes.pop())
    if gain is None:
        return total
    rho = gain.clipped() if isinstance(gain, PlasticityGain) else np.clip(np.asarray(gain), *RHO_RANGE)
    return rho.reshape(-1, *([1] * (total.ndim - 1))) * total


def gain_update(gain: PlasticityGain, batch_acts):
    """EMA the batch-mean activity; rho = clip(1 + gamma (target - trace))."""
    mean = _batch(batch_acts).mean(axis=0)
    trace = gain.decay * gain.trace + (1.0 - gain.decay) * mean
    target = gain.theta_target
    if target is None:
        target = float(mean.mean())
        # the first update sees only one batch; seed the trace with it
        trace = mean.copy()
    rho = np.clip(1.0 + gain.gamma * (target - trace), gain.rho_min, gain.rho_max)
    return replace(gain, rho=rho, trace=trace, theta_target=target)


# ---------------------------------------------------------------------------
# supplementary rules


def circular_convolution(a, b):
    """(a * b)_k = sum_j a_j b_{(k - j) mod n}."""
    return np.real(np.fft.ifft(np.fft.fft(a) * np.fft.fft(b)))


def circular_correlation(a, b):
    """(a # b)_k = sum_j a_j b_{(j + k) mod n}."""
    return np.real(np.fft.ifft(np.conj(np.fft.fft(a)) * np.fft.fft(b)))


def hrr_delta(y_now, y_prev_trace, W, alpha_c=0.5, eta_H=1e-4):
    """Holographic binding: every row pulled toward the bound vector

    ``(1 - alpha_c) (y conv trace) + alpha_c (y corr trace)``.
    """
    y_now = np.asarray(y_now, dtype=np.float64)
    trace = np.asarray(y_prev_trace, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if y_now.shape != trace.shape or y_now.ndim != 1 or W.shape[-1] != y_now.shape[0]:
        raise InputValidationError("HRR vectors must share the weight-row length")
    bound = (1.0 - alpha_c) * circular_convolution(y_now, trace) + alpha_c * circular_correlation(y_now, trace)
    return eta_H * (bound[None, :] - W)


def project_to_ball(W, radius=0.99):
    """Rescale rows with norm >= 1 onto the sphere of the given radius."""
    W = np.array(W, dtype=np.float64)
    norms = np.linalg.norm(W, axis=1)
    out = norms >= 1.0
    W[out] *= (radius / norms[out])[:, None]
    return W


def poincare_distance(u, v):
    uu, vv = np.sum(u * u, axis=-1), np.sum(v * v, axis=-1)
    diff = np.sum((u - v) ** 2, axis=-1)
    return np.arccosh(1.0 + 2.0 * diff / ((1.0 - uu) * (1.0 - vv)))


def hyperbolic_potential(W):
    """sum_i sum_{j != i} d_H(w_i, w_j)^-2 (each unordered pair counted twice)."""
    W = np.asarray(W, dtype=np.float64)
    d = poincare_distance(W[:, None, :], W[None, :, :])
    np.fill_diagonal(d, np.inf)
    return float(np.sum(d**-2.0))


def hyperbolic_gradient(W, eps=1e-12):
    """Row-wise gradient of sum_{j != i} d_H(w_i, w_j)^-2 w.r.t. w_i."""
    W = np.asarray(W, dtype=np.float64)
    n = W.shape[0]
    if n < 2:
        return np.zeros_like(W)
    sq = np.sum(W * W, axis=1)
    a = 1.0 - sq  # (n,)
    diff = W[:, None, :] - W[None, :, :]  # (n, n, d), u_i - w_j
    dist2 = np.sum(diff**2, axis=-1)
    delta = 2.0 * dist2 / (a[:, None] * a[None, :])
    x = 1.0 + delta
    d = np.arccosh(x)
    np.fill_diagonal(d, np.inf)
    root = np.sqrt(np.maximum(x * x - 1.0, eps))
    # d(d^-2)/d(delta) = -2 d^-3 / sqrt(x^2 - 1)
    coef = -2.0 * d**-3.0 / root
    np.fill_diagonal(coef, 0.0)
    # d(delta)/d(w_i) = 4 (w_i - w_j)/(a_i a_j) + 4 |w_i - w_j|^2 w_i / (a_i^2 a_j)
    t1 = 4.0 * diff / (a[:, None, None] * a[None, :, None])
    t2 = 4.0 * dist2[:, :, None] * W[:, None, :] / (a[:, None, None] ** 2 * a[None, :, None])
    return np.sum(coef[:, :, None] * (t1 + t2), axis=1)


def hyperbolic_delta(W, lambda_h=1e-5):
    """-lambda_h * gradient of the pairwise inverse-square hyperbolic potential.

    Rows outside the unit ball are evaluated at their radial projection
    (norm 0.99); ``W`` itself is not modified.
    """
    return -lambda_h * hyperbolic_gradient(project_to_ball(W))


def _pad_pow2(w):
    n = w.shape[-1]
    m = 1 << max(0, (n - 1).bit_length())
    if m == n:
        return w, n
    return np.concatenate([w, np.zeros((*w.shape[:-1], m - n))], axis=-1), n


def haar1d(w):
    """Full-depth orthonormal Haar transform along the last axis.

    Output layout: [approx, detail_coarsest, ..., detail_finest].
    """
    out = np.array(w, dtype=np.float64)
    n = out.shape[-1]
    if n & (n - 1):
        raise InputValidationError("haar1d needs a power-of-two length")
    length = n
    while length > 1:
        seg = out[..., :length].copy()
        even, odd = seg[..., 0::2], seg[..., 1::2]
        out[..., : length // 2] = (even + odd) / np.sqrt(2.0)
        out[..., length // 2 : length] = (even - odd) / np.sqrt(2.0)
        length //= 2
    return out


def inverse_haar1d(c):
    out = np.array(c, dtype=np.float64)
    n = out.shape[-1]
    if n & (n - 1):
        raise InputValidationError("inverse_haar1d needs a power-of-two length")
    length = 2
    while length <= n:
        half = length // 2
        a, d = out[..., :half].copy(), out[..., half:length].copy()
        seg = np.empty(out[..., :length].shape)
        seg[..., 0::2] = (a + d) / np.sqrt(2.0)
        seg[..., 1::2] = (a - d) / np.sqrt(2.0)
        out[..., :length] = seg
        length *= 2
    return out


def soft_threshold(x, tau):
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def wavelet_delta(W, tau_w=1e-2, lambda_w=1e-4):
    """-lambda_w * InverseHaar(SoftThreshold(Haar(w_i))) for every row.

    Rows are zero-padded to a power of two and the result is truncated back.
    """
    W = np.asarray(W, dtype=np.float64)
    padded, n = _pad_pow2(W)
    shrunk = inverse_haar1d(soft_threshold(haar1d(padded), tau_w))
    return -lambda_w * shrunk[..., :n]


__all__ = [
    "RuleCoefficients",
    "PlasticityGain",
    "hebbian_delta",
    "anti_hebbian_delta",
    "free_energy_delta",
    "recursive_delta",
    "compose_delta",
    "gain_update",
    "hrr_delta",
    "hyperbolic_delta",
    "wavelet_delta",
]
