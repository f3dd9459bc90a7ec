"""Fixed early vision: opponent colour, Gabor energy, chromatic Haar, saliency.

Nothing in this module is plastic.  All functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sp_fft

from .exceptions import ConfigError, InputValidationError

# Hunt-Pointer-Estevez RGB(linear sRGB, D65) -> LMS.
# Product of the HPE XYZ->LMS matrix and the sRGB->XYZ matrix.
_HPE_XYZ_TO_LMS = np.array(
    [
        [0.38971, 0.68898, -0.07868],
        [-0.22981, 1.18340, 0.04641],
        [0.0, 0.0, 1.0],
    ]
)
_SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
HPE_RGB_TO_LMS = _HPE_XYZ_TO_LMS @ _SRGB_TO_XYZ
IDENTITY_MAPPING = np.eye(3)


def srgb_to_linear(img):
    img = np.asarray(img, dtype=np.float64)
    return np.where(img <= 0.04045, img / 12.92, ((img + 0.055) / 1.055) ** 2.4)


def _check_image(img, *, name="image"):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim < 3 or img.shape[-1] != 3:
        raise InputValidationError(f"{name} must have shape (..., H, W, 3), got {img.shape}")
    if not np.all(np.isfinite(img)):
        raise InputValidationError(f"{name} contains non-finite pixels")
    return img


def opponent_transform(img, mapping=IDENTITY_MAPPING, *, linearize=False):
    """RGB -> (L+M, L-M, S-(L+M)).

    ``img`` is ``(..., H, W, 3)``.  ``mapping`` is the 3x3 RGB->LMS matrix;
    with ``linearize`` the sRGB transfer curve is undone first.
    """
    img = _check_image(img)
    mapping = np.asarray(mapping, dtype=np.float64)
    if mapping.shape != (3, 3) or abs(np.linalg.det(mapping)) < 1e-12:
        raise InputValidationError("colour mapping must be an invertible 3x3 matrix")
    if linearize:
        img = srgb_to_linear(img)
    lms = img @ mapping.T
    L, M, S = lms[..., 0], lms[..., 1], lms[..., 2]
    return np.stack([L + M, L - M, S - (L + M)], axis=-1)


def color_mapping(name):
    """Return ``(matrix, linearize)`` for a named mapping."""
    if name == "hpe":
        return HPE_RGB_TO_LMS, True
    if name == "identity":
        return IDENTITY_MAPPING, False
    raise ConfigError(f"unknown colour mapping {name!r}")


# ---------------------------------------------------------------------------
# Gabor bank


@dataclass(frozen=True)
class GaborBank:
    frequencies: np.ndarray
    thetas: np.ndarray
    sigmas: np.ndarray
    # one array per frequency, shape (n_theta, 2, k, k); phase 0 then pi/2
    kernels: tuple

    @property
    def n_streams(self):
        return len(self.frequencies) * len(self.thetas)

    def radius(self, fi):
        return (self.kernels[fi].shape[-1] - 1) // 2


def default_frequencies(fmin=0.05, fmax=0.40, n=7):
    return np.geomspace(fmin, fmax, n)


def gabor_kernel(f, theta, phase, sigma=None):
    """Mean-subtracted Gabor kernel on a ``(2r+1)^2`` grid, ``r = ceil(3 sigma)``."""
    sigma = 0.56 / f if sigma is None else sigma
    r = int(math.ceil(3.0 * sigma))
    coords = np.arange(-r, r + 1, dtype=np.float64)
    y, x = np.meshgrid(coords, coords, indexing="ij")
    x_t = x * math.cos(theta) + y * math.sin(theta)
    y_t = -x * math.sin(theta) + y * math.cos(theta)
    g = np.exp(-(x_t**2 + y_t**2) / (2.0 * sigma**2)) * np.cos(2.0 * math.pi * f * x_t + phase)
    return g - g.mean()


def build_gabor_bank(frequencies=None, n_theta=7):
    if frequencies is None:
        frequencies = default_frequencies()
    frequencies = np.asarray(frequencies, dtype=np.float64)
    if frequencies.ndim != 1 or np.any(frequencies <= 0):
        raise ConfigError("Gabor frequencies must be strictly positive")
    if np.any(frequencies > 0.5):
        raise ConfigError(f"Gabor frequency above Nyquist (0.5 cycles/pixel): {frequencies.max()}")
    if n_theta < 1:
        raise ConfigError("n_theta must be >= 1")
    thetas = np.arange(n_theta) * (math.pi / n_theta)
    sigmas = 0.56 / frequencies
    kernels = []
    for f, s in zip(frequencies, sigmas):
        per_f = np.stack(
            [np.stack([gabor_kernel(f, th, 0.0, s), gabor_kernel(f, th, math.pi / 2, s)]) for th in thetas]
        )
        kernels.append(per_f)
    return GaborBank(frequencies, thetas, sigmas, tuple(kernels))


def _complex_response(lum, kernels):
    """``lum`` (N, H, W); ``kernels`` (K, k, k) complex.  Returns (N, K, H, W)
    "same"-size convolution with symmetric (half-sample) reflect padding."""
    n, h, w = lum.shape
    k = kernels.shape[-1]
    r = (k - 1) // 2
    padded = np.pad(lum, ((0, 0), (r, r), (r, r)), mode="symmetric")
    shape = (sp_fft.next_fast_len(h + 4 * r), sp_fft.next_fast_len(w + 4 * r))
    img_f = sp_fft.fft2(padded, s=shape)
    ker_f = sp_fft.fft2(kernels, s=shape)
    out = sp_fft.ifft2(img_f[:, None] * ker_f[None], axes=(-2, -1))
    return out[..., 2 * r : 2 * r + h, 2 * r : 2 * r + w]


def gabor_energy(lum, bank: GaborBank, epsilon=1e-6):
    """Phase-invariant energy of every (frequency, orientation) stream.

    ``lum`` is ``(H, W)`` or ``(N, H, W)``; returns ``(S, H, W)`` or
    ``(N, S, H, W)`` with ``S = N_f * n_theta`` ordered frequency-major.
    """
    lum = np.asarray(lum, dtype=np.float64)
    if not np.all(np.isfinite(lum)):
        raise InputValidationError("luminance contains non-finite values")
    if epsilon <= 0:
        raise ConfigError("epsilon must be > 0")
    single = lum.ndim == 2
    if single:
        lum = lum[None]
    out = []
    for ker in bank.kernels:
        cplx = ker[:, 0] + 1j * ker[:, 1]
        out.append(np.abs(_complex_response(lum, cplx)) + epsilon)
    energy = np.concatenate(out, axis=1)
    return energy[0] if single else energy


# ---------------------------------------------------------------------------
# Haar


def haar_features(opp):
    """One-level undecimated Haar (LL, LH, HL, HH) per opponent channel.

    ``opp`` is ``(..., H, W, 3)`` with even H, W.  Output ``(..., H, W, 12)``
    ordered channel-major: ``[c0.LL, c0.LH, c0.HL, c0.HH, c1.LL, ...]``.
    Periodic boundary, orthonormal 1/2 scaling.
    """
    opp = np.asarray(opp, dtype=np.float64)
    if opp.ndim < 3 or opp.shape[-1] != 3:
        raise InputValidationError(f"opponent image must have shape (..., H, W, 3), got {opp.shape}")
    h, w = opp.shape[-3], opp.shape[-2]
    if h % 2 or w % 2 or h < 4 or w < 4:
        raise InputValidationError(f"Haar features need even H, W >= 4, got {h}x{w}")
    a = opp
    b = np.roll(opp, -1, axis=-2)  # (i, j+1)
    c = np.roll(opp, -1, axis=-3)  # (i+1, j)
    d = np.roll(b, -1, axis=-3)  # (i+1, j+1)
    ll = (a + b + c + d) / 2.0
    lh = (a + b - c - d) / 2.0
    hl = (a - b + c - d) / 2.0
    hh = (a - b - c + d) / 2.0
    bands = np.stack([ll, lh, hl, hh], axis=-1)  # (..., H, W, 3, 4)
    return bands.reshape(*opp.shape[:-1], 12)


# ---------------------------------------------------------------------------
# Saliency


@dataclass(frozen=True)
class SaliencyWeights:
    w_int: float = 1.0
    w_ori: float = 1.0
    alpha_sym: float = 0.5


def symmetry_prior(h, w, sigma_frac=0.25):
    """Centred Gaussian bump, peak 1."""
    ys = np.arange(h) - (h - 1) / 2.0
    xs = np.arange(w) - (w - 1) / 2.0
    sy, sx = sigma_frac * h, sigma_frac * w
    bump = np.exp(-(ys[:, None] ** 2) / (2 * sy**2) - (xs[None, :] ** 2) / (2 * sx**2))
    return bump / bump.max()


def _sigmoid(x):
    # split form keeps exp() from overflowing in either tail
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def saliency_map(intensity, mean_orientation_energy, weights=SaliencyWeights(), sym_prior=None):
    """sigmoid(w_int * I + w_ori * O + alpha_sym * P_sym), elementwise."""
    intensity = np.asarray(intensity, dtype=np.float64)
    ori = np.asarray(mean_orientation_energy, dtype=np.float64)
    if sym_prior is None:
        sym_prior = symmetry_prior(*intensity.shape[-2:])
    drive = weights.w_int * intensity + weights.w_ori * ori + weights.alpha_sym * sym_prior
    s = _sigmoid(drive)
    # keep strictly inside (0, 1) even where the logistic saturates in float64
    tiny = np.finfo(np.float64).eps
    return np.clip(s, tiny, 1.0 - tiny)


# ---------------------------------------------------------------------------
# Full front end: image batch -> pooled stream inputs


def _pool(x, p):
    """Mean-pool the last two axes with a p x p window and stride p."""
    *lead, h, w = x.shape
    return x.reshape(*lead, h // p, p, w // p, p).mean(axis=(-3, -1))


@dataclass
class FrontendFeatures:
    """Front-end output for a batch, already pooled onto the L1 grid.

    ``gabor``: (N, N_f, n_theta, g, g) energies, scaled per frequency.
    ``haar``: (N, 12, g, g).  ``saliency``: (N, g, g) pooled gate.
    """

    gabor: np.ndarray
    haar: np.ndarray
    saliency: np.ndarray

    def __len__(self):
        return self.gabor.shape[0]

    def take(self, idx):
        return FrontendFeatures(self.gabor[idx], self.haar[idx], self.saliency[idx])


class FrontEnd:
    """Precomputes everything that does not depend on plastic weights."""

    def __init__(self, cfg):
        freqs = default_frequencies(cfg.gabor_fmin, cfg.gabor_fmax, cfg.n_frequencies)
        self.bank = build_gabor_bank(freqs, cfg.n_theta)
        self.mapping, self.linearize = color_mapping(cfg.color_mapping)
        self.epsilon = cfg.epsilon
        self.pool = cfg.pool
        self.weights = SaliencyWeights(cfg.w_int, cfg.w_ori, cfg.alpha_sym)
        self.psym_sigma_frac = cfg.psym_sigma_frac
        # unit-norm scaling of each frequency's filters
        self.scales = np.array([1.0 / np.linalg.norm(k[0, 0]) for k in self.bank.kernels])

    def __call__(self, images, chunk=64):
        images = _check_image(images, name="images")
        if images.ndim == 3:
            images = images[None]
        if images.min() < 0 or images.max() > 1:
            raise InputValidationError("pixel values must lie in [0, 1]")
        n, h, w, _ = images.shape
        if h % self.pool or w % self.pool:
            raise InputValidationError(f"image size {h}x{w} not divisible by pool {self.pool}")
        prior = symmetry_prior(h, w, self.psym_sigma_frac)
        nf, nt = len(self.bank.frequencies), len(self.bank.thetas)
        gab, haar, sal = [], [], []
        for start in range(0, n, chunk):
            img = images[start : start + chunk]
            opp = opponent_transform(img, self.mapping, linearize=self.linearize)
            lum = opp[..., 0]
            energy = gabor_energy(lum, self.bank, self.epsilon)
            energy = energy.reshape(len(img), nf, nt, h, w) * self.scales[None, :, None, None, None]
            ori = energy.mean(axis=(1, 2))
            s = saliency_map(lum, ori, self.weights, prior)
            hf = np.moveaxis(haar_features(opp), -1, 1)
            gab.append(_pool(energy, self.pool))
            haar.append(_pool(hf, self.pool))
            sal.append(_pool(s, self.pool))
        return FrontendFeatures(np.concatenate(gab), np.concatenate(haar), np.concatenate(sal))
