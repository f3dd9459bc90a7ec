"""Seed-level statistics: BCa intervals, paired t with Holm correction,
Cohen's d, paired-t power, interaction strength and status labels.

Degenerate inputs return documented sentinels instead of raising so that
small ablation tables never crash:

* zero-variance differences with a nonzero mean give ``t = +-inf`` and
  ``p = P_FLOOR``; with a zero mean ``t = 0`` and ``p = 1``;
* Cohen's d of zero-variance differences is ``+-inf`` (``0`` for a zero mean).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate, special
from scipy import stats as sps

P_FLOOR = 1e-300
N_BOOT = 10_000

ADEQUATE = "Adequate"
BORDERLINE = "Borderline"
EXPLORATORY = "Exploratory"


def _samples(x, name="samples"):
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size < 2:
        raise ValueError(f"{name} needs at least two values")
    return x


def bca_ci(samples, level=0.95, n_boot=N_BOOT, seed=0, statistic=None):
    """Bias-corrected and accelerated bootstrap interval for ``statistic`` (mean by default)."""
    x = _samples(samples)
    n = x.size
    stat = statistic or (lambda v, axis=None: np.mean(v, axis=axis))
    theta = float(stat(x))
    if np.all(x == x[0]):
        return theta, theta
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(n_boot, n))
    boot = np.asarray(stat(x[idx], axis=1), dtype=np.float64)
    below = np.mean(boot < theta) + 0.5 * np.mean(boot == theta)
    below = np.clip(below, 1.0 / (n_boot + 1), 1.0 - 1.0 / (n_boot + 1))
    z0 = special.ndtri(below)
    jack = np.array([stat(np.delete(x, i)) for i in range(n)], dtype=np.float64)
    dev = jack.mean() - jack
    den = 6.0 * np.sum(dev**2) ** 1.5
    a = float(np.sum(dev**3) / den) if den > 0 else 0.0
    alpha = (1.0 - level) / 2.0
    out = []
    for q in (alpha, 1.0 - alpha):
        zq = special.ndtri(q)
        adj = special.ndtr(z0 + (z0 + zq) / (1.0 - a * (z0 + zq)))
        out.append(float(np.quantile(boot, adj)))
    return out[0], out[1]


def percentile_ci(samples, level=0.95, n_boot=N_BOOT, seed=0):
    x = _samples(samples)
    rng = np.random.default_rng(seed)
    boot = x[rng.integers(0, x.size, size=(n_boot, x.size))].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    return float(np.quantile(boot, alpha)), float(np.quantile(boot, 1.0 - alpha))


def paired_t(samples_a, samples_b):
    """Two-sided paired t on per-seed differences ``a - b``; returns ``(t, p)``."""
    a, b = _samples(samples_a, "samples_a"), _samples(samples_b, "samples_b")
    if a.shape != b.shape:
        raise ValueError("paired samples must have equal length")
    d = a - b
    n = d.size
    mean, sd = d.mean(), d.std(ddof=1)
    if sd == 0.0:
        if mean == 0.0:
            return 0.0, 1.0
        return float(np.copysign(np.inf, mean)), P_FLOOR
    t = mean / (sd / np.sqrt(n))
    p = 2.0 * sps.t.sf(abs(t), n - 1)
    return float(t), float(max(p, P_FLOOR))


def holm_correct(p_values):
    """Step-down Holm adjustment, returned in the input order."""
    p = np.asarray(p_values, dtype=np.float64)
    m = p.size
    order = np.argsort(p, kind="stable")
    scaled = (m - np.arange(m)) * p[order]
    adj = np.minimum(np.maximum.accumulate(scaled), 1.0)
    out = np.empty(m)
    out[order] = adj
    return out


def cohens_d(samples_a, samples_b, paired=True):
    a, b = _samples(samples_a, "samples_a"), _samples(samples_b, "samples_b")
    if paired:
        d = a - b
        mean, sd = d.mean(), d.std(ddof=1)
    else:
        mean = a.mean() - b.mean()
        na, nb = a.size, b.size
        sd = np.sqrt(((na - 1) * a.var(ddof=1) + (nb - 1) * b.var(ddof=1)) / (na + nb - 2))
    if sd == 0.0:
        return 0.0 if mean == 0.0 else float(np.copysign(np.inf, mean))
    return float(mean / sd)


def power_paired_t(d, n, alpha=0.05):
    """Power of the two-sided paired t test at effect ``d`` with ``n`` pairs.

    Exact noncentral-t probability, computed by integrating the normal
    tail over the chi-square law of the variance (stable for large
    noncentrality, where library noncentral-t tails return NaN).
    """
    n = int(n)
    if n < 2:
        raise ValueError("power needs n >= 2")
    if not np.isfinite(d):
        return 1.0
    df = n - 1
    ncp = abs(float(d)) * np.sqrt(n)
    c = sps.t.ppf(1.0 - alpha / 2.0, df)
    if ncp == 0.0:
        return float(alpha)

    def integrand(v):
        s = c * np.sqrt(v / df)
        return (special.ndtr(ncp - s) + special.ndtr(-s - ncp)) * sps.chi2.pdf(v, df)

    lo, hi = sps.chi2.ppf([1e-15, 1.0 - 1e-15], df)
    val, _ = integrate.quad(integrand, lo, hi, limit=200, epsabs=1e-12, epsrel=1e-10)
    return float(min(max(val, alpha), 1.0))


def required_n(d, target=0.80, alpha=0.05, n_max=10_000):
    """Smallest n >= 2 with power at least ``target``."""
    for n in range(2, n_max + 1):
        if power_paired_t(d, n, alpha) >= target:
            return n
    raise ValueError(f"power {target} not reached for d={d} with n <= {n_max}")


def interaction_strength(delta_a, delta_b, delta_ab):
    """I(A, B) from signed accuracy changes (negative = drop).

    ``I = delta_ab - (delta_a + delta_b)``: positive when removing both
    components costs less than the two single removals added together.
    """
    return float(delta_ab - (delta_a + delta_b))


def status_label(d, power):
    """Adequate takes precedence over Borderline where the bands overlap."""
    if abs(d) >= 2.0 and power > 0.80:
        return ADEQUATE
    if 0.75 <= power <= 0.85:
        return BORDERLINE
    return EXPLORATORY


@dataclass
class StatReport:
    mean: float
    ci_low: float
    ci_high: float
    p_raw: float
    p_holm: float
    d: float
    power: float
    status: str
    n: int

    def to_dict(self):
        return asdict(self)


def compare(base, ablated, alpha=0.05, n_boot=N_BOOT, seed=0):
    """Paired comparison ``ablated - base`` (``p_holm`` filled in later by the caller)."""
    base, ablated = _samples(base, "base"), _samples(ablated, "ablated")
    diff = ablated - base
    low, high = bca_ci(diff, n_boot=n_boot, seed=seed)
    _, p = paired_t(ablated, base)
    d = cohens_d(ablated, base, paired=True)
    power = power_paired_t(d, diff.size, alpha)
    return StatReport(
        mean=float(diff.mean()), ci_low=low, ci_high=high, p_raw=p, p_holm=p,
        d=abs(d), power=power, status=status_label(d, power), n=int(diff.size),
    )


def apply_holm(reports):
    adj = holm_correct([r.p_raw for r in reports])
    for r, p in zip(reports, adj):
        r.p_holm = float(p)
    return reports


def mean_ci(values, n_boot=N_BOOT, seed=0):
    """``(mean, low, high)``; with a single value the interval collapses onto it."""
    v = np.asarray(values, dtype=np.float64).ravel()
    m = float(v.mean())
    if v.size < 2:
        return m, m, m
    low, high = bca_ci(v, n_boot=n_boot, seed=seed)
    return m, low, high
