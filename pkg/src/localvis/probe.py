"""Readouts: the linear softmax probe (the only label-trained parameters)
and the gradient-free nearest-class-mean classifier."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InputValidationError

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


@dataclass
class ProbeParams:
    W: np.ndarray  # (classes, dim)
    b: np.ndarray  # (classes,)
    mW: np.ndarray
    vW: np.ndarray
    mb: np.ndarray
    vb: np.ndarray
    t: int = 0

    @classmethod
    def init(cls, n_classes, dim, rng=None, zero=False):
        """Uniform(+-1/sqrt(dim)) weights and biases, or all zeros."""
        if zero or rng is None:
            W, b = np.zeros((n_classes, dim)), np.zeros(n_classes)
        else:
            bound = 1.0 / np.sqrt(dim)
            W = rng.uniform(-bound, bound, size=(n_classes, dim))
            b = rng.uniform(-bound, bound, size=n_classes)
        return cls(W, b, np.zeros_like(W), np.zeros_like(W), np.zeros_like(b), np.zeros_like(b), 0)

    @property
    def n_classes(self):
        return self.W.shape[0]

    def arrays(self):
        return {"W": self.W, "b": self.b, "mW": self.mW, "vW": self.vW, "mb": self.mb, "vb": self.vb}

    @classmethod
    def from_arrays(cls, arrays, t):
        return cls(**{k: np.asarray(arrays[k]) for k in ("W", "b", "mW", "vW", "mb", "vb")}, t=int(t))

    def copy(self):
        return ProbeParams(**{k: v.copy() for k, v in self.arrays().items()}, t=self.t)


def logits(p: ProbeParams, z):
    return np.asarray(z, dtype=np.float64) @ p.W.T + p.b


def log_softmax(x):
    x = x - x.max(axis=1, keepdims=True)
    return x - np.log(np.exp(x).sum(axis=1, keepdims=True))


def _check_batch(p, z, labels):
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(labels)
    if z.ndim != 2 or z.shape[1] != p.W.shape[1]:
        raise InputValidationError(f"probe expects (B, {p.W.shape[1]}) features, got {z.shape}")
    if labels.shape != (z.shape[0],):
        raise InputValidationError("one label per feature row is required")
    if labels.size and (labels.min() < 0 or labels.max() >= p.n_classes):
        raise InputValidationError(f"labels must lie in [0, {p.n_classes - 1}]")
    return z, labels.astype(np.int64)


def loss_and_grads(p: ProbeParams, z, labels):
    """Mean cross-entropy and its closed-form gradients.

    Returns ``(loss, dW, db, dz)``; ``dz`` is the gradient w.r.t. the probe
    input, used only by the isolation audit.
    """
    z, labels = _check_batch(p, z, labels)
    b = z.shape[0]
    lp = log_softmax(logits(p, z))
    loss = -float(lp[np.arange(b), labels].mean())
    err = np.exp(lp)
    err[np.arange(b), labels] -= 1.0
    err /= b
    return loss, err.T @ z, err.sum(axis=0), err @ p.W


def adam_update(p: ProbeParams, dW, db, lr=3e-4, weight_decay=1e-4):
    """Adam with L2 weight decay folded into the gradient; updates ``p`` in place."""
    b1, b2 = ADAM_BETAS
    dW = dW + weight_decay * p.W
    db = db + weight_decay * p.b
    p.t += 1
    c1, c2 = 1.0 - b1**p.t, 1.0 - b2**p.t
    for param, m, v, g in ((p.W, p.mW, p.vW, dW), (p.b, p.mb, p.vb, db)):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        param -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
    return p


def probe_step(p: ProbeParams, z, labels, lr=3e-4, weight_decay=1e-4):
    """One Adam step on the cross-entropy of a batch; returns ``(p, loss)``."""
    loss, dW, db, _ = loss_and_grads(p, z, labels)
    return adam_update(p, dW, db, lr, weight_decay), loss


def predict(p: ProbeParams, z):
    return np.argmax(logits(p, z), axis=1)


def accuracy(p: ProbeParams, z, labels):
    return float(np.mean(predict(p, z) == np.asarray(labels)))


def train_probe(p: ProbeParams, Z, labels, epochs, batch_size, order_fn, lr=3e-4, weight_decay=1e-4):
    """Epochs of mini-batch Adam over fixed features.

    ``order_fn(epoch)`` returns the sample order of an epoch; the last
    partial batch is dropped.
    """
    Z = np.asarray(Z, dtype=np.float64)
    labels = np.asarray(labels)
    losses = []
    for epoch in range(1, epochs + 1):
        order = order_fn(epoch)
        total, count = 0.0, 0
        for start in range(0, len(order) - batch_size + 1, batch_size):
            idx = order[start : start + batch_size]
            p, loss = probe_step(p, Z[idx], labels[idx], lr, weight_decay)
            total, count = total + loss, count + 1
        losses.append(total / max(count, 1))
    return p, losses


# ---------------------------------------------------------------------------
# nearest class mean


def _unit_rows(x, eps=1e-12):
    x = np.asarray(x, dtype=np.float64)
    return x / np.maximum(np.linalg.norm(x, axis=-1, keepdims=True), eps)


def ncm_fit(features, labels, n_classes=None):
    """Per-class mean feature; classes without samples get a NaN row."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or labels.shape != (features.shape[0],):
        raise InputValidationError("ncm_fit expects (N, d) features and N labels")
    n_classes = int(labels.max()) + 1 if n_classes is None else n_classes
    means = np.full((n_classes, features.shape[1]), np.nan)
    for c in range(n_classes):
        rows = features[labels == c]
        if len(rows):
            means[c] = rows.mean(axis=0)
    return means


def ncm_classify(features, means):
    """Class with the smallest cosine distance (ties go to the lower index)."""
    sims = _unit_rows(np.atleast_2d(features)) @ _unit_rows(np.nan_to_num(means, nan=0.0)).T
    sims[:, np.isnan(means).any(axis=1)] = -np.inf
    return np.argmax(sims, axis=1)
