"""Side branch, cross-gate fusion, Hopfield memory and Pass-2 feedback.

Forward functions take batch-major arrays ``(B, d)``.  Update functions
return batch-mean deltas and read only activity and the weights they
update: no update here ever receives a label.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InputValidationError, NumericalError
from .frontend import _sigmoid as sigmoid

GATE_STRENGTH = 0.35
FEEDBACK_SIDE_MIX = 0.05
FEEDBACK_L1_MIX = 0.12
FEEDBACK_GATE_MIX = 0.35


def relu(x):
    return np.maximum(x, 0.0)


def _rows(x):
    x = np.asarray(x, dtype=np.float64)
    return x[None] if x.ndim == 1 else x


# ---------------------------------------------------------------------------
# saliency gate


def unit_gate(saliency_grid, stream_widths):
    """Map a pooled saliency grid onto layer units.

    Each stream's units tile the grid in raster order: unit ``u`` of a
    stream with ``n`` units reads cell ``floor(u * cells / n)``.
    ``saliency_grid`` is ``(B, g, g)``; result is ``(B, sum(widths))``.
    """
    flat = _rows(saliency_grid.reshape(saliency_grid.shape[0], -1))
    cells = flat.shape[1]
    idx = np.concatenate([(np.arange(n) * cells) // n for n in stream_widths])
    return flat[:, idx]


def side_branch_forward(gate, y_L2, W_d1, W_d2):
    """r = ReLU(W_d1 (S * y_L2)); z = ReLU(W_d2 r).  Returns (u, r, z)."""
    u = np.asarray(gate) * _rows(y_L2)
    r = relu(u @ W_d1.T)
    z = relu(r @ W_d2.T)
    return u, r, z


@dataclass(frozen=True)
class SideBranchRates:
    eta_d: float = 2e-3
    delta_d: float = 1e-4
    alpha_d: float = 5e-4


def side_branch_update(W_d1, W_d2, u, r, z, rates: SideBranchRates = SideBranchRates()):
    """Hebbian + decay for both layers, plus the off-diagonal anti-Hebbian
    term on the output layer.  ``u`` is the gated input ``S * y_L2``."""
    u, r, z = _rows(u), _rows(r), _rows(z)
    b = u.shape[0]
    d1 = rates.eta_d * (r.T @ u / b - rates.delta_d * W_d1)
    anti = z.T @ z / b
    np.fill_diagonal(anti, 0.0)
    if W_d2.shape[0] != W_d2.shape[1]:
        raise InputValidationError("the side output layer must be square for its anti-Hebbian term")
    d2 = rates.eta_d * (z.T @ r / b - rates.delta_d * W_d2) - rates.alpha_d * anti
    return d1, d2


# ---------------------------------------------------------------------------
# cross gate


def fuse_cross_gate(z_main, z_side, W_x):
    """z_main + 0.35 sigma(z_side W_x) * z_main, and symmetrically for side."""
    z_main, z_side = _rows(z_main), _rows(z_side)
    if W_x.shape != (z_side.shape[1], z_main.shape[1]):
        raise InputValidationError(f"cross-gate shape {W_x.shape} does not match side/main dims")
    main_hat = z_main + GATE_STRENGTH * sigmoid(z_side @ W_x) * z_main
    side_hat = z_side + GATE_STRENGTH * sigmoid(z_main @ W_x.T) * z_side
    return main_hat, side_hat


def cross_gate_update(W_x, z_side, z_main, eta_x=1e-3, delta_x=1e-4):
    z_side, z_main = _rows(z_side), _rows(z_main)
    return eta_x * (z_side.T @ z_main / z_side.shape[0] - delta_x * W_x)


# ---------------------------------------------------------------------------
# memory


def pad_to(x, dim):
    x = _rows(x)
    if x.shape[1] == dim:
        return x
    if x.shape[1] > dim:
        raise InputValidationError(f"cannot pad a {x.shape[1]}-dim vector to {dim}")
    return np.concatenate([x, np.zeros((x.shape[0], dim - x.shape[1]))], axis=1)


def memory_query(z_side_hat, z_main_hat, W_q):
    """(pad(side) + pad(main) + W_q [side; main]) / 3."""
    z_side_hat, z_main_hat = _rows(z_side_hat), _rows(z_main_hat)
    joint = np.concatenate([z_side_hat, z_main_hat], axis=1)
    dq = W_q.shape[0]
    return (pad_to(z_side_hat, dq) + pad_to(z_main_hat, dq) + joint @ W_q.T) / 3.0


def softmax(x, axis=-1):
    x = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(x)
    return e / np.sum(e, axis=axis, keepdims=True)


def hopfield_retrieve(q, K, V, beta=0.5):
    """a = softmax(beta K q); h = V^T a.  Single step."""
    q = _rows(q)
    if not np.all(np.isfinite(q)):
        raise NumericalError("memory query")
    a = softmax(beta * (q @ K.T), axis=1)
    return a, a @ V


@dataclass(frozen=True)
class MemoryRates:
    eta_K: float = 1e-3
    eta_V: float = 1e-3
    eta_q: float = 1e-3
    delta_K: float = 5e-4
    delta_V: float = 5e-4
    delta_q: float = 1e-4


def memory_update(K, V, W_q, a, q, z_side_hat, z_main_hat, rates: MemoryRates = MemoryRates()):
    """Batch-mean deltas for the key/value slots and the query projection."""
    a, q = _rows(a), _rows(q)
    z_side_hat, z_main_hat = _rows(z_side_hat), _rows(z_main_hat)
    b = a.shape[0]
    joint = np.concatenate([z_side_hat, z_main_hat], axis=1)
    dK = rates.eta_K * (a.T @ q / b - rates.delta_K * K)
    dV = rates.eta_V * (a.T @ pad_to(z_main_hat, V.shape[1]) / b - rates.delta_V * V)
    dWq = rates.eta_q * (q.T @ joint / b - rates.delta_q * W_q)
    return dK, dV, dWq


# ---------------------------------------------------------------------------
# feedback


def feedback_side(r_side1, h_mem, W_fb1):
    """z_fb = z_side1 + 0.05 W_fb1 h_mem."""
    return _rows(r_side1) + FEEDBACK_SIDE_MIX * (_rows(h_mem) @ W_fb1.T)


def feedback_input_map(R0, h_mem, W_fbL1, W_gate):
    """R_fb = R0 + 0.12 W_fbL1 h + 0.35 sigma(W_gate h) * R0.

    ``R0`` is the L1 input map ``(B, C, g, g)``; both projections of
    ``h_mem`` are ``g*g`` long and broadcast over channels.
    """
    h_mem = _rows(h_mem)
    R0 = np.asarray(R0, dtype=np.float64)
    b, _, gh, gw = R0.shape
    add = (h_mem @ W_fbL1.T).reshape(b, 1, gh, gw)
    gate = sigmoid(h_mem @ W_gate.T).reshape(b, 1, gh, gw)
    return R0 + FEEDBACK_L1_MIX * add + FEEDBACK_GATE_MIX * gate * R0


def feedback_modulate(h_mem, r_side1, R0, W_fb1, W_fbL1, W_gate):
    """Both Pass-2 modulations at once; returns ``(z_fb, R_fb)``."""
    return feedback_side(r_side1, h_mem, W_fb1), feedback_input_map(R0, h_mem, W_fbL1, W_gate)


def feedback_update(W, y_layer, h_mem, eta_fb=5e-4, delta_fb=1e-4):
    """eta_fb (y_i h_j - delta_fb W_ij), batch mean."""
    y_layer, h_mem = _rows(y_layer), _rows(h_mem)
    return eta_fb * (y_layer.T @ h_mem / y_layer.shape[0] - delta_fb * W)
