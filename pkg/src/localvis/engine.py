"""The two-pass training step and the gradient-isolation audit.

Order inside one mini-batch:

1. Pass 1 through hierarchy, side branch, fusion and memory;
2. every local update except the recursive one, then the gain updates;
3. Pass 2 on feedback-modulated input, with plasticity off;
4. the recursive (cross-pass) update;
5. the representation crosses the stop-gradient barrier;
6. one Adam step of the linear probe, the only place labels are read.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import pathways as pw
from .config import RunConfig
from .exceptions import GradientIsolationError, InputValidationError, NumericalError
from .hierarchy import (
    LayerParams,
    band_outer,
    homeostasis_update,
    layer_forward,
    split_streams,
    valid_band,
)
from .network import TAG_EVAL_GATE, TAG_GATE, Architecture, ModelState, module_of, philox
from .plasticity import (
    RuleCoefficients,
    compose_delta,
    gain_update,
    hrr_delta,
    hyperbolic_delta,
    recursive_delta,
    wavelet_delta,
)
from .probe import ProbeParams, loss_and_grads, probe_step

log = logging.getLogger(__name__)

# matrices whose rows are held to the norm cap after a plastic update
_CAPPED = ("main", "side", "cross", "memory", "feedback")


# ---------------------------------------------------------------------------
# runtime parameters


@dataclass(frozen=True)
class Runtime:
    """Everything the forward and update code reads from a RunConfig."""

    layer: LayerParams
    kappa_g: float
    beta: float
    memory_mix: float
    gate_mode: str
    coeffs: RuleCoefficients
    side_rates: pw.SideBranchRates
    memory_rates: pw.MemoryRates
    eta_x: float
    delta_x: float
    eta_fb: float
    delta_fb: float
    eta_g: float
    rho_on: bool
    row_norm_cap: float | None
    use_hrr: bool = False
    use_hyperbolic: bool = False
    use_wavelet: bool = False
    eta_hrr: float = 1e-4
    alpha_c: float = 0.5
    lambda_h: float = 1e-5
    lambda_w: float = 1e-4
    tau_w: float = 1e-2
    plastic: bool = True

    @classmethod
    def from_config(cls, cfg: RunConfig) -> Runtime:
        active = cfg.active_components()
        return cls(
            layer=LayerParams(
                alpha_inhib=cfg.alpha_inhib,
                alpha_div=cfg.alpha_div,
                beta_div=cfg.beta_div if "div_norm" in active else 0.0,
                w_g=cfg.w_g,
                w_l=cfg.w_l,
                n_iters=cfg.n_iters,
                local_pool=cfg.local_pool,
            ),
            kappa_g=cfg.kappa_g if "homeostasis" in active else 0.0,
            beta=cfg.beta,
            memory_mix=cfg.memory_mix,
            gate_mode=cfg.effective_gate_mode(),
            coeffs=RuleCoefficients.from_config(cfg, active),
            side_rates=pw.SideBranchRates(cfg.eta_d, cfg.delta_d, cfg.alpha_d),
            memory_rates=pw.MemoryRates(cfg.eta_K, cfg.eta_V, cfg.eta_q, cfg.delta_K, cfg.delta_V, cfg.delta_q),
            eta_x=cfg.eta_x,
            delta_x=cfg.delta_x,
            eta_fb=cfg.eta_fb,
            delta_fb=cfg.delta_fb,
            eta_g=cfg.eta_g,
            rho_on=not cfg.paper_strict,
            row_norm_cap=cfg.row_norm_cap,
            use_hrr=cfg.use_hrr,
            use_hyperbolic=cfg.use_hyperbolic,
            use_wavelet=cfg.use_wavelet,
            eta_hrr=cfg.eta_hrr,
            alpha_c=cfg.alpha_c,
            lambda_h=cfg.lambda_h,
            lambda_w=cfg.lambda_w,
            tau_w=cfg.tau_w,
            plastic=cfg.plasticity,
        )


# ---------------------------------------------------------------------------
# stop-gradient barrier


class StopGradient:
    """Forward: a detached read-only copy.  Backward: exact zeros."""

    def forward(self, z):
        out = np.array(z, dtype=np.float64, copy=True)
        out.setflags(write=False)
        return out

    def backward(self, grad):
        return np.zeros_like(grad)


DEFAULT_BARRIER = StopGradient()


# ---------------------------------------------------------------------------
# forward


@dataclass
class PassRecord:
    R: np.ndarray
    inputs: list  # per layer: list of per-stream inputs
    layers: list  # per layer: LayerState
    z_main: np.ndarray
    u: np.ndarray | None = None
    r: np.ndarray | None = None
    z_side: np.ndarray | None = None
    main_hat: np.ndarray | None = None
    side_hat: np.ndarray | None = None
    q: np.ndarray | None = None
    a: np.ndarray | None = None
    h_mem: np.ndarray | None = None


@dataclass
class Representation:
    z_final: np.ndarray  # (B, rep_dim)
    pass1: PassRecord
    pass2: PassRecord


def make_gate(arch: Architecture, saliency, mode, rng=None):
    """Per-unit gate on layer-2 activity, ``(B, n_L2)``."""
    b = saliency.shape[0]
    if mode == "saliency":
        grid = saliency
    elif mode == "uniform":
        grid = np.ones_like(saliency)
    elif mode == "random":
        if rng is None:
            raise InputValidationError("the random gate needs a generator")
        flat = saliency.reshape(b, -1)
        perm = np.argsort(rng.random(flat.shape), axis=1)
        grid = np.take_along_axis(flat, perm, axis=1).reshape(saliency.shape)
    else:
        raise InputValidationError(f"unknown gate mode {mode!r}")
    return pw.unit_gate(np.asarray(grid, dtype=np.float64), arch.widths[1])


def _hierarchy(state: ModelState, rt: Runtime, R):
    arch, w = state.arch, state.weights
    x = arch.stream_inputs(R)
    inputs, layers = [], []
    for l in range(4):
        Ws = [w[f"main.W.{l}.{s}"] for s in range(arch.n_streams)]
        band = w[f"main.L.{l}"]
        st = layer_forward(
            x, Ws, band if band.any() else None, w[f"main.g.{l}"], rt.layer, rt.kappa_g, name=f"main layer {l + 1}"
        )
        inputs.append(x)
        layers.append(st)
        x = split_streams(st.y, arch.widths[l])
    return inputs, layers


def forward_pass(state: ModelState, rt: Runtime, R, gate, h_feedback=None) -> PassRecord:
    """One pass.  ``h_feedback`` (Pass 2 only) modulates side-branch layer 1."""
    arch, w = state.arch, state.weights
    inputs, layers = _hierarchy(state, rt, R)
    rec = PassRecord(R=R, inputs=inputs, layers=layers, z_main=layers[-1].y)
    b = R.shape[0]
    if arch.side:
        u, r, z_side = pw.side_branch_forward(gate, layers[1].y, w["side.W_d1"], w["side.W_d2"])
        if h_feedback is not None and "feedback.W_fb1" in w:
            r = pw.feedback_side(r, h_feedback, w["feedback.W_fb1"])
            z_side = pw.relu(r @ w["side.W_d2"].T)
        rec.u, rec.r, rec.z_side = u, r, z_side
        rec.main_hat, rec.side_hat = pw.fuse_cross_gate(rec.z_main, z_side, w["cross.W_x"])
    else:
        rec.main_hat, rec.side_hat = rec.z_main, np.zeros((b, 0))
    if arch.memory:
        rec.q = pw.memory_query(rec.side_hat, rec.main_hat, w["memory.W_q"])
        rec.a, rec.h_mem = pw.hopfield_retrieve(rec.q, w["memory.K"], w["memory.V"], rt.beta)
    else:
        rec.h_mem = np.zeros((b, arch.main_dim))
    for name in ("main_hat", "side_hat", "h_mem"):
        if not np.all(np.isfinite(getattr(rec, name))):
            raise NumericalError(name.replace("_", " "))
    return rec


def pass2_input(state: ModelState, R0, h_mem):
    if not state.arch.feedback:
        return R0
    w = state.weights
    return pw.feedback_input_map(R0, h_mem, w["feedback.W_fbL1"], w["feedback.W_gate"])


def final_representation(rt: Runtime, rec: PassRecord):
    return np.concatenate([rec.main_hat + rt.memory_mix * rec.h_mem, rec.side_hat], axis=1)


def two_pass_forward(state: ModelState, rt: Runtime, R0, saliency, gate_rng=None) -> Representation:
    """Both passes with plasticity off (a pure function of the weights)."""
    gate = make_gate(state.arch, saliency, rt.gate_mode, gate_rng)
    p1 = forward_pass(state, rt, R0, gate)
    p2 = _second_pass(state, rt, R0, gate, p1)
    return Representation(final_representation(rt, p2), p1, p2)


def _second_pass(state, rt, R0, gate, p1):
    fb = p1.h_mem if state.arch.feedback else None
    return forward_pass(state, rt, pass2_input(state, R0, p1.h_mem), gate, fb)


# ---------------------------------------------------------------------------
# local updates


def local_updates(state: ModelState, rt: Runtime, p1: PassRecord):
    """Deltas of every non-recursive rule plus the new gains and rho.

    Reads only Pass-1 activity and current weights: no labels exist here.
    Returns ``(deltas, new_gains, new_rho)``.
    """
    arch, w, c = state.arch, state.weights, rt.coeffs
    deltas, gains, rho_new = {}, {}, []
    for l in range(4):
        y = p1.layers[l].y
        rho_l = state.rho[l].clipped() if rt.rho_on else np.ones(y.shape[1])
        ys = split_streams(y, arch.widths[l])
        rhos = split_streams(rho_l, arch.widths[l])
        for s in range(arch.n_streams):
            key = f"main.W.{l}.{s}"
            W, x = w[key], p1.inputs[l][s]
            d = fused_main_delta(x, ys[s], W, rhos[s], c) if (c.alpha_H or c.lambda_F) else None
            extra = _supplementary(state, rt, l, s, W, x)
            if extra is not None:
                d = extra if d is None else d + extra
            if d is not None:
                deltas[key] = d
        if c.alpha_A:
            # stored values are inhibitory strengths: the signed synapse is
            # -L, so the anti-Hebbian rule on the synapse grows L
            band = band_outer(y, arch.lateral_radius) * valid_band(y.shape[1], arch.lateral_radius)
            deltas[f"main.L.{l}"] = c.alpha_A * rho_l[:, None] * band
        if rt.eta_g:
            gains[f"main.g.{l}"] = homeostasis_update(w[f"main.g.{l}"], y, rt.eta_g)
        rho_new.append(gain_update(state.rho[l], y) if rt.rho_on else state.rho[l])
    if arch.side:
        sr = rt.side_rates
        if sr.eta_d or sr.alpha_d:
            deltas["side.W_d1"], deltas["side.W_d2"] = pw.side_branch_update(
                w["side.W_d1"], w["side.W_d2"], p1.u, p1.r, p1.z_side, sr
            )
        if rt.eta_x:
            deltas["cross.W_x"] = pw.cross_gate_update(w["cross.W_x"], p1.z_side, p1.z_main, rt.eta_x, rt.delta_x)
    if arch.memory:
        mr = rt.memory_rates
        if mr.eta_K or mr.eta_V or mr.eta_q:
            dK, dV, dWq = pw.memory_update(
                w["memory.K"], w["memory.V"], w["memory.W_q"], p1.a, p1.q, p1.side_hat, p1.main_hat, mr
            )
            deltas.update({"memory.K": dK, "memory.V": dV, "memory.W_q": dWq})
    if arch.feedback and rt.eta_fb:
        h = p1.h_mem
        if "feedback.W_fb1" in w:
            deltas["feedback.W_fb1"] = pw.feedback_update(w["feedback.W_fb1"], p1.r, h, rt.eta_fb, rt.delta_fb)
        spatial = p1.R.mean(axis=1).reshape(p1.R.shape[0], -1)
        for key in ("feedback.W_fbL1", "feedback.W_gate"):
            deltas[key] = pw.feedback_update(w[key], spatial, h, rt.eta_fb, rt.delta_fb)
    return deltas, gains, rho_new


def fused_main_delta(x, y, W, rho, c: RuleCoefficients):
    """rho * (alpha_H Hebb + lambda_F FE) in two passes over ``W``.

    Algebraically equal to ``compose_delta`` over the separate Hebbian and
    free-energy terms: both share the post-synaptic factor ``y``.
    """
    b = x.shape[0]
    pre = c.alpha_H * x
    if c.lambda_F:
        pre = pre + c.lambda_F * (x - y @ W)
    decay = c.alpha_H * c.delta_H + c.lambda_F * c.lambda_F
    out = y.T @ pre
    out /= b
    out -= decay * W
    out *= rho[:, None]
    return out


def _supplementary(state, rt, l, s, W, x):
    d = None
    if rt.use_hrr and rt.eta_hrr:
        key = f"hrr.{l}.{s}"
        x_bar = x.mean(axis=0)
        d = hrr_delta(x_bar, state.traces[key], W, rt.alpha_c, rt.eta_hrr)
        state.traces[key] = 0.9 * state.traces[key] + 0.1 * x_bar
    if rt.use_hyperbolic and rt.lambda_h:
        h = hyperbolic_delta(W, rt.lambda_h)
        d = h if d is None else d + h
    if rt.use_wavelet and rt.lambda_w:
        v = wavelet_delta(W, rt.tau_w, rt.lambda_w)
        d = v if d is None else d + v
    return d


def recursive_updates(state: ModelState, rt: Runtime, p1: PassRecord, p2: PassRecord):
    """Pass-2 post-synaptic activity against Pass-1 pre-synaptic input."""
    arch, c = state.arch, rt.coeffs
    deltas = {}
    if not c.alpha_R:
        return deltas
    for l in range(4):
        rho_l = state.rho[l].clipped() if rt.rho_on else np.ones(arch.layer_width(l))
        ys = split_streams(p2.layers[l].y, arch.widths[l])
        rhos = split_streams(rho_l, arch.widths[l])
        for s in range(arch.n_streams):
            key = f"main.W.{l}.{s}"
            term = recursive_delta(ys[s], p1.inputs[l][s], state.weights[key], c.delta_R)
            deltas[key] = compose_delta(rhos[s], {"rec": term}, c)
    return deltas


def cap_rows(W, cap):
    norms = np.sqrt(np.einsum("ij,ij->i", W, W))
    over = norms > cap
    if np.any(over):
        W[over] *= (cap / norms[over])[:, None]


def apply_deltas(state: ModelState, rt: Runtime, deltas, gains=None):
    w = state.weights
    for key, d in deltas.items():
        w[key] += d
        if rt.row_norm_cap is not None and w[key].ndim == 2 and module_of(key) in _CAPPED:
            cap_rows(w[key], rt.row_norm_cap)
        if not np.all(np.isfinite(w[key])):
            raise NumericalError(key)
    for key, g in (gains or {}).items():
        w[key] = g


# ---------------------------------------------------------------------------
# training


@dataclass
class BatchResult:
    z_bar: np.ndarray
    loss: float | None
    pass2_checksums: tuple = ()


def train_batch(state: ModelState, rt: Runtime, R0, saliency, labels=None, probe=None, *, lr=3e-4,
                weight_decay=1e-4, gate_rng=None, barrier=DEFAULT_BARRIER, check_pass2=False):
    gate = make_gate(state.arch, saliency, rt.gate_mode, gate_rng)
    p1 = forward_pass(state, rt, R0, gate)
    if rt.plastic:
        deltas, gains, rho = local_updates(state, rt, p1)
        apply_deltas(state, rt, deltas, gains)
        state.rho = rho
    before = state.checksum() if check_pass2 else None
    p2 = _second_pass(state, rt, R0, gate, p1)
    after = state.checksum() if check_pass2 else None
    if rt.plastic:
        apply_deltas(state, rt, recursive_updates(state, rt, p1, p2))
    z_bar = barrier.forward(final_representation(rt, p2))
    loss = None
    if probe is not None and labels is not None:
        _, loss = probe_step(probe, z_bar, labels, lr, weight_decay)
    return BatchResult(z_bar, loss, (before, after))


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float | None
    weight_change: dict = field(default_factory=dict)
    decorrelation: float | None = None
    updates: int = 0


def weight_change_norms(before, after):
    acc: dict[str, float] = {}
    for key, w in after.items():
        mod = module_of(key)
        acc[mod] = acc.get(mod, 0.0) + float(np.sum((w - before[key]) ** 2))
    return {k: float(np.sqrt(v)) for k, v in sorted(acc.items())}


def decorrelation(y):
    """Mean |off-diagonal correlation| across units (constant units skipped)."""
    y = np.asarray(y, dtype=np.float64)
    sd = y.std(axis=0)
    keep = sd > 1e-12
    if keep.sum() < 2 or y.shape[0] < 3:
        return float("nan")
    c = np.corrcoef(y[:, keep], rowvar=False)
    off = ~np.eye(c.shape[0], dtype=bool)
    return float(np.mean(np.abs(c[off])))


def train_epoch(state: ModelState, rt: Runtime, R_all, sal_all, labels, probe, batches, *, epoch, lr=3e-4,
                weight_decay=1e-4, barrier=DEFAULT_BARRIER, audit=True, diag_idx=None):
    """One pass over ``batches`` (an iterable of index arrays)."""
    before = {k: v.copy() for k, v in state.weights.items()}
    gate_rng = philox(state.seed, TAG_GATE, epoch) if rt.gate_mode == "random" else None
    total, count = 0.0, 0
    for i, idx in enumerate(batches):
        y = None if labels is None else labels[idx]
        if audit and i == 0 and probe is not None and y is not None:
            stop_gradient_audit(state, rt, probe, R_all[idx], sal_all[idx], y, barrier=barrier)
        res = train_batch(state, rt, R_all[idx], sal_all[idx], y, probe, lr=lr, weight_decay=weight_decay,
                          gate_rng=gate_rng, barrier=barrier)
        if res.loss is not None:
            total += res.loss
        count += 1
    state.epoch = epoch
    metrics = EpochMetrics(epoch, total / count if count and probe is not None else None,
                           weight_change_norms(before, state.weights), updates=count)
    if diag_idx is not None and len(diag_idx) >= 3:
        rep = two_pass_forward(state, rt, R_all[diag_idx], sal_all[diag_idx], _eval_rng(state, rt))
        metrics.decorrelation = decorrelation(rep.pass2.z_main)
    return metrics


def _eval_rng(state, rt):
    return philox(state.seed, TAG_EVAL_GATE) if rt.gate_mode == "random" else None


def extract(state: ModelState, rt: Runtime, R_all, sal_all, chunk=256):
    """Frozen features (no plasticity) for every sample, ``(N, rep_dim)``."""
    rng = _eval_rng(state, rt)
    out = []
    for start in range(0, len(R_all), chunk):
        rep = two_pass_forward(state, rt, R_all[start : start + chunk], sal_all[start : start + chunk], rng)
        out.append(rep.z_final)
    if not out:
        return np.zeros((0, state.arch.rep_dim))
    return np.concatenate(out)


# ---------------------------------------------------------------------------
# gradient isolation audit


@dataclass
class AuditResult:
    repr_grad_norm: float
    probe_grad_norm: float
    groups: dict
    probe_path_stable: bool

    @property
    def passed(self):
        return self.repr_grad_norm == 0.0 and self.probe_path_stable


def _weight_groups(state):
    groups: dict[str, list[str]] = {}
    for key in sorted(state.weights):
        groups.setdefault(module_of(key), []).append(key)
    return groups


def stop_gradient_audit(state: ModelState, rt: Runtime, probe: ProbeParams, R0, saliency, labels, *,
                        barrier=DEFAULT_BARRIER, eps=1e-6, seed=0, raise_on_fail=True) -> AuditResult:
    """Chain rule of the probe loss back into every representational weight group.

    The probe's backward reaches the representation only through the
    barrier.  For each weight group the directional derivative of the loss
    is ``g_z . dz`` with ``g_z`` the barrier's backward output and ``dz`` a
    central finite difference of the representation along a random
    direction.  The audit also perturbs each group and confirms that the
    probe gradient computed from the already-detached features is unchanged.
    """
    rng = np.random.default_rng(seed)
    work = state.copy()
    rep = two_pass_forward(work, rt, R0, saliency, _eval_rng(work, rt))
    z_bar = barrier.forward(rep.z_final)
    loss, dW, db, dz = loss_and_grads(probe, z_bar, labels)
    g_z = barrier.backward(dz)
    probe_norm = float(np.sqrt(np.sum(dW**2) + np.sum(db**2)))
    grad_sq = float(np.sum(g_z**2))
    groups, stable = {}, True
    for name, keys in _weight_groups(work).items():
        originals = {k: work.weights[k].copy() for k in keys}
        direction = {k: rng.standard_normal(originals[k].shape) for k in keys}
        outs = []
        for sign in (1.0, -1.0):
            for k in keys:
                work.weights[k] = originals[k] + sign * eps * direction[k]
            outs.append(two_pass_forward(work, rt, R0, saliency, _eval_rng(work, rt)).z_final)
        dzdir = (outs[0] - outs[1]) / (2.0 * eps)
        directional = float(np.sum(g_z * dzdir))
        groups[name] = directional
        grad_sq += directional**2
        _, dW2, db2, _ = loss_and_grads(probe, z_bar, labels)
        stable &= bool(np.array_equal(dW2, dW) and np.array_equal(db2, db))
        stable &= not any(np.shares_memory(z_bar, v) for v in work.weights.values())
        for k in keys:
            work.weights[k] = originals[k]
    result = AuditResult(float(np.sqrt(grad_sq)), probe_norm, groups, stable)
    if raise_on_fail and not result.passed:
        raise GradientIsolationError(
            f"probe loss reaches representational weights (gradient norm {result.repr_grad_norm:.3e})"
        )
    return result
