"""Seeded runs, controls, ablation tables, greedy replay and batch sweeps.

Every function returns plain JSON-ready dicts so that reports can be
written and re-loaded without custom decoders.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from . import stats
from .config import ABLATION_LABELS, ABLATIONS, RunConfig, config_hash, validate
from .data import Dataset, balanced_subset, epoch_order, load_cifar, split_indices
from .engine import DEFAULT_BARRIER, Runtime, extract, stop_gradient_audit, train_epoch
from .exceptions import ConfigError
from .frontend import FrontEnd, FrontendFeatures
from .network import TAG_PROBE, Architecture, init_state, parameter_counts, philox, save_checkpoint
from .probe import ProbeParams, accuracy, ncm_classify, ncm_fit, train_probe

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DATA_ENV = ("LOCALVIS_DATA_DIR", "CIFAR10_DIR")
SUBSET_SEED = 0  # the desk subset is shared by every seed so comparisons stay paired
FRESH_PROBE_EPOCHS_FULL = 50
FULL_EPOCHS = 300
DIAG_SAMPLES = 256

GREEDY_STEPS = (
    ("Hebbian only", ("hebbian", "div_norm", "homeostasis")),
    ("+ Multi-frequency streams", ("multi_frequency",)),
    ("+ Memory module", ("memory",)),
    ("+ Feedback", ("feedback",)),
    ("+ AHebb + FE", ("anti_hebbian", "free_energy")),
    ("+ Side branch", ("side_branch",)),
)
GREEDY_THRESHOLD = 0.92
BATCH_SIZES = (1, 4, 8, 16, 32)
FULL_TRAIN_SIZE = 50_000

MEMORY_CONFOUND_NOTE = (
    "Removing a module removes its computation and its parameters together; "
    "the accuracy change mixes both effects."
)
EXPLORATORY_NOTE = "Pairwise interactions are exploratory: no correction beyond the primary table."


# ---------------------------------------------------------------------------
# data


@dataclass
class Split:
    data: Dataset
    feats: FrontendFeatures
    R: np.ndarray  # stacked stream maps for the configured architecture


@dataclass
class DataBundle:
    train: Dataset
    test: Dataset
    variant: str
    _cache: dict | None = None

    def features(self, cfg: RunConfig, which: str) -> Split:
        """Front-end features are fixed, so they are computed once per setting."""
        key = (which, cfg.color_mapping, cfg.gabor_fmin, cfg.gabor_fmax, cfg.n_frequencies, cfg.n_theta,
               cfg.epsilon, cfg.pool, cfg.w_int, cfg.w_ori, cfg.alpha_sym, cfg.psym_sigma_frac)
        if self._cache is None:
            self._cache = {}
        if key not in self._cache:
            ds = self.train if which == "train" else self.test
            log.info("front end: %d %s images", len(ds), which)
            self._cache[key] = FrontEnd(cfg)(ds.as_float())
        feats = self._cache[key]
        arch = Architecture.from_config(cfg)
        ds = self.train if which == "train" else self.test
        return Split(ds, feats, arch.input_map(feats))


def resolve_data_dir(cfg: RunConfig):
    if cfg.data_dir:
        return cfg.data_dir
    for name in DATA_ENV:
        if os.environ.get(name):
            return os.environ[name]
    raise ConfigError("no CIFAR directory given: pass --data-dir or set " + " / ".join(DATA_ENV))


def load_bundle(cfg: RunConfig, strict=True) -> DataBundle:
    train, test = load_cifar(resolve_data_dir(cfg), cfg.dataset, strict=strict)
    return make_bundle(train, test, cfg)


def make_bundle(train: Dataset, test: Dataset, cfg: RunConfig) -> DataBundle:
    if cfg.subset:
        train = balanced_subset(train, cfg.subset, SUBSET_SEED)
    if cfg.test_subset:
        test = balanced_subset(test, cfg.test_subset, SUBSET_SEED)
    return DataBundle(train, test, train.variant)


# ---------------------------------------------------------------------------
# single runs


def fresh_probe_epochs(cfg: RunConfig):
    if cfg.fresh_probe_epochs is not None:
        return cfg.fresh_probe_epochs
    return max(1, round(FRESH_PROBE_EPOCHS_FULL * cfg.epochs / FULL_EPOCHS))


def _orders(n, seed):
    return lambda epoch: epoch_order(n, seed, epoch)


def _nan_to_none(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


def run_seed(cfg: RunConfig, seed: int, bundle: DataBundle, *, barrier=DEFAULT_BARRIER, controls=True,
             checkpoint_path=None, zero_labels=False):
    """Train one seed and evaluate every control; returns a JSON-ready dict."""
    validate(cfg, for_run=True)
    rt = Runtime.from_config(cfg)
    state = init_state(cfg, seed)
    arch = state.arch
    tr_full, te = bundle.features(cfg, "train"), bundle.features(cfg, "test")
    tr_idx, val_idx = split_indices(len(tr_full.data), seed, cfg.val_fraction)
    R_tr, S_tr = tr_full.R[tr_idx], tr_full.feats.saliency[tr_idx]
    y_tr = tr_full.data.labels[tr_idx]
    y_train_probe = np.zeros_like(y_tr) if zero_labels else y_tr
    n_classes = bundle.train.n_classes
    probe = ProbeParams.init(n_classes, arch.rep_dim, philox(seed, TAG_PROBE))
    diag = np.arange(min(DIAG_SAMPLES, len(tr_idx)))
    B = cfg.batch_size
    result = {
        "seed": seed,
        "rep_dim": arch.rep_dim,
        "parameters": parameter_counts(arch),
        "n_train": int(len(tr_idx)),
        "n_val": int(len(val_idx)),
        "n_test": int(len(te.data)),
        "updates_per_epoch": int(len(tr_idx) // B),
        "epochs": [],
    }
    if not arch.side:
        log.info("side branch absent: representation and probe resized to %d dims", arch.rep_dim)

    if controls:
        Z0_tr = extract(state, rt, R_tr, S_tr)
        Z0_te = extract(state, rt, te.R, te.feats.saliency)
        p0 = ProbeParams.init(n_classes, arch.rep_dim, philox(seed, TAG_PROBE))
        p0, _ = train_probe(p0, Z0_tr, y_train_probe, cfg.epochs, B, _orders(len(y_tr), seed),
                            cfg.probe_lr, cfg.probe_weight_decay)
        result["epoch0_acc"] = accuracy(p0, Z0_te, te.data.labels)

    init_checksum = state.checksum()
    for epoch in range(1, cfg.epochs + 1):
        order = epoch_order(len(y_tr), seed, epoch)
        batches = (order[s : s + B] for s in range(0, len(order) - B + 1, B))
        m = train_epoch(state, rt, R_tr, S_tr, y_train_probe, probe, batches, epoch=epoch, lr=cfg.probe_lr,
                        weight_decay=cfg.probe_weight_decay, barrier=barrier, audit=(epoch == 1), diag_idx=diag)
        Z_te = extract(state, rt, te.R, te.feats.saliency)
        acc = accuracy(probe, Z_te, te.data.labels)
        result["epochs"].append({
            "epoch": epoch,
            "test_acc": acc,
            "train_loss": _nan_to_none(m.train_loss),
            "weight_change": m.weight_change,
            "decorrelation": _nan_to_none(m.decorrelation),
            "checksum": state.checksum(),
        })
        log.info("seed %d epoch %d: test acc %.4f", seed, epoch, acc)
    if cfg.epochs == 0:
        Z_te = extract(state, rt, te.R, te.feats.saliency)
    result["probe_acc"] = accuracy(probe, Z_te, te.data.labels)
    result["plastic_changed"] = state.checksum() != init_checksum

    if controls:
        checksum = state.checksum()
        Z_tr = extract(state, rt, R_tr, S_tr)
        fresh = ProbeParams.init(n_classes, arch.rep_dim, philox(seed, TAG_PROBE, 2))
        fresh, _ = train_probe(fresh, Z_tr, y_train_probe, fresh_probe_epochs(cfg), B, _orders(len(y_tr), seed),
                               cfg.probe_lr, cfg.probe_weight_decay)
        result["fresh_probe_acc"] = accuracy(fresh, Z_te, te.data.labels)
        result["fresh_probe_epochs"] = fresh_probe_epochs(cfg)
        means = ncm_fit(Z_tr, y_tr, n_classes)
        result["ncm_acc"] = float(np.mean(ncm_classify(Z_te, means) == te.data.labels))
        frozen = ProbeParams.init(n_classes, arch.rep_dim, philox(seed, TAG_PROBE, 1))
        result["frozen_classifier_acc"] = accuracy(frozen, Z_te, te.data.labels)
        if len(val_idx):
            Z_val = extract(state, rt, tr_full.R[val_idx], tr_full.feats.saliency[val_idx])
            result["val_acc"] = accuracy(probe, Z_val, tr_full.data.labels[val_idx])
        result["frozen_after_controls"] = state.checksum() == checksum
    result["final_checksum"] = state.checksum()
    if checkpoint_path:
        save_checkpoint(checkpoint_path, state, cfg, probe)
    return result


def _summary(values, seed=0):
    vals = [v for v in values if v is not None]
    if not vals:
        return None
    m, lo, hi = stats.mean_ci(vals, seed=seed)
    return {"mean": m, "ci_low": lo, "ci_high": hi, "values": list(vals)}


def run_config(cfg: RunConfig, bundle: DataBundle, *, barrier=DEFAULT_BARRIER, controls=True, out_dir=None,
               label=None):
    """All seeds of one configuration."""
    validate(cfg, for_run=True)
    h = config_hash(cfg)
    seeds = []
    for seed in cfg.seeds:
        ckpt = None
        if out_dir:
            os.makedirs(os.path.join(out_dir, h), exist_ok=True)
            ckpt = os.path.join(out_dir, h, f"seed_{seed}.ckpt")
        seeds.append(run_seed(cfg, seed, bundle, barrier=barrier, controls=controls, checkpoint_path=ckpt))
    report = {
        "schema_version": SCHEMA_VERSION,
        "kind": "run",
        "label": label,
        "config": cfg.to_dict(),
        "config_hash": h,
        "active_components": sorted(cfg.active_components()),
        "gate_mode": cfg.effective_gate_mode(),
        "seeds": seeds,
        "curve": _curve(seeds),
        "final": {},
    }
    for key in ("probe_acc", "epoch0_acc", "fresh_probe_acc", "ncm_acc", "frozen_classifier_acc", "val_acc"):
        report["final"][key] = _summary([s.get(key) for s in seeds])
    return report


def _curve(seeds):
    if not seeds or not seeds[0]["epochs"]:
        return []
    out = []
    for i, rec in enumerate(seeds[0]["epochs"]):
        accs = [s["epochs"][i]["test_acc"] for s in seeds]
        m, lo, hi = stats.mean_ci(accs)
        out.append({"epoch": rec["epoch"], "mean_acc": m, "ci_low": lo, "ci_high": hi})
    return out


def final_values(report, key="probe_acc"):
    return np.array([s[key] for s in report["seeds"]], dtype=np.float64)


# ---------------------------------------------------------------------------
# ablations


def ablated(cfg: RunConfig, names):
    for name in names:
        if name not in ABLATIONS:
            raise ConfigError(f"unknown ablation {name!r}; expected one of {sorted(ABLATIONS)}")
    return cfg.replace(ablate=tuple(cfg.ablate) + tuple(names))


def _pp(x):
    return 100.0 * x


def comparison_rows(base_vals, rows):
    """Holm-corrected paired comparisons of each row against the base."""
    reports = []
    for _, vals in rows:
        if len(vals) >= 2:
            reports.append(stats.compare(_pp(base_vals), _pp(vals)))
        else:
            reports.append(None)
    valid = [r for r in reports if r is not None]
    stats.apply_holm(valid)
    return reports


def run_ablation(base: RunConfig, components, bundle: DataBundle, *, pairs=(), barrier=DEFAULT_BARRIER,
                 controls=False, out_dir=None, base_report=None):
    """One run series per removed component plus optional pairwise removals."""
    base_report = base_report or run_config(base, bundle, barrier=barrier, controls=controls, out_dir=out_dir,
                                            label="Full system")
    base_vals = final_values(base_report)
    base_params = base_report["seeds"][0]["parameters"]["total"]
    runs = []
    for name in components:
        cfg = ablated(base, [name])
        rep = run_config(cfg, bundle, barrier=barrier, controls=controls, out_dir=out_dir,
                         label=ABLATION_LABELS[name])
        runs.append((name, rep))
    cmp = comparison_rows(base_vals, [(n, final_values(r)) for n, r in runs])
    rows = []
    for (name, rep), st in zip(runs, cmp):
        params = rep["seeds"][0]["parameters"]["total"]
        rows.append({
            "component": name,
            "label": ABLATION_LABELS[name],
            "acc": _pp(float(final_values(rep).mean())),
            "delta": _pp(float((final_values(rep) - base_vals).mean())),
            "stats": None if st is None else st.to_dict(),
            "parameters": params,
            "parameters_removed": base_params - params,
            "rep_dim": rep["seeds"][0]["rep_dim"],
            "config_hash": rep["config_hash"],
        })
    single = {n: float((final_values(r) - base_vals).mean()) for n, r in runs}
    interactions = []
    for a, b in pairs:
        for n in (a, b):
            if n not in single:
                rep = run_config(ablated(base, [n]), bundle, barrier=barrier, controls=False, out_dir=out_dir)
                single[n] = float((final_values(rep) - base_vals).mean())
        joint = run_config(ablated(base, [a, b]), bundle, barrier=barrier, controls=False, out_dir=out_dir)
        d_ab = float((final_values(joint) - base_vals).mean())
        interactions.append({
            "A": a, "B": b,
            "delta_A": _pp(single[a]), "delta_B": _pp(single[b]), "delta_AB": _pp(d_ab),
            "I": stats.interaction_strength(_pp(single[a]), _pp(single[b]), _pp(d_ab)),
            "status": "exploratory",
        })
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "ablation",
        "config": base.to_dict(),
        "config_hash": config_hash(base),
        "base": {"acc": _pp(float(base_vals.mean())), "parameters": base_params, "report": base_report},
        "rows": rows,
        "runs": [r for _, r in runs],
        "interactions": interactions,
        "notes": [MEMORY_CONFOUND_NOTE] + ([EXPLORATORY_NOTE] if interactions else []),
    }


# ---------------------------------------------------------------------------
# greedy replay and batch sweep


def greedy_configs(cfg: RunConfig):
    comps: list[str] = []
    out = []
    for label, add in GREEDY_STEPS:
        comps.extend(add)
        out.append((label, cfg.replace(components=tuple(comps), ablate=())))
    return out


def run_greedy_replay(cfg: RunConfig, bundle: DataBundle, *, barrier=DEFAULT_BARRIER, out_dir=None):
    steps = []
    reports = []
    for i, (label, c) in enumerate(greedy_configs(cfg)):
        rep = run_config(c, bundle, barrier=barrier, controls=False, out_dir=out_dir, label=label)
        reports.append(rep)
        vals = final_values(rep)
        steps.append({"step": i, "system": label, "acc": _summary(list(_pp(vals))), "config_hash": rep["config_hash"]})
    base = final_values(reports[0])
    total = float((final_values(reports[-1]) - base).mean())
    for i, step in enumerate(steps):
        vals = final_values(reports[i])
        if i == 0:
            step.update(delta=None, d=None, fraction_of_total=None)
            continue
        delta = float((vals - base).mean())
        step["delta"] = _pp(delta)
        step["d"] = stats.cohens_d(vals, base) if len(vals) >= 2 else None
        step["fraction_of_total"] = delta / total if total else None
    crossed = next((s["step"] for s in steps[1:] if s["fraction_of_total"] is not None
                    and s["fraction_of_total"] >= GREEDY_THRESHOLD), None)
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "greedy",
        "config": cfg.to_dict(),
        "config_hash": config_hash(cfg),
        "steps": steps,
        "threshold": GREEDY_THRESHOLD,
        "threshold_step": crossed,
        "notes": [f"The {GREEDY_THRESHOLD:.0%}-of-total-gain mark is an annotation, not a selection rule."],
        "runs": reports,
    }


def run_batch_sweep(cfg: RunConfig, bundle: DataBundle, sizes=BATCH_SIZES, *, barrier=DEFAULT_BARRIER,
                    out_dir=None, reference=4):
    reports = {b: run_config(cfg.replace(batch_size=b), bundle, barrier=barrier, controls=False, out_dir=out_dir)
               for b in sizes}
    ref = reference if reference in reports else sizes[0]
    rows = []
    for b in sizes:
        vals = final_values(reports[b])
        row = {
            "B": b,
            "acc": _summary(list(_pp(vals))),
            "updates_per_epoch": reports[b]["seeds"][0]["updates_per_epoch"],
            "updates_per_epoch_full": FULL_TRAIN_SIZE // b,
            "delta_vs_ref": None if b == ref else _pp(float((vals - final_values(reports[ref])).mean())),
            "config_hash": reports[b]["config_hash"],
        }
        rows.append(row)
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "batch_sweep",
        "config": cfg.to_dict(),
        "config_hash": config_hash(cfg),
        "reference_batch": ref,
        "rows": rows,
        "runs": [reports[b] for b in sizes],
    }


def audit_only(cfg: RunConfig, bundle: DataBundle, seed=0, barrier=DEFAULT_BARRIER, batch=4):
    """Run the gradient-isolation audit on one diagnostic batch."""
    rt = Runtime.from_config(cfg)
    state = init_state(cfg, seed)
    tr = bundle.features(cfg, "train")
    probe = ProbeParams.init(bundle.train.n_classes, state.arch.rep_dim, philox(seed, TAG_PROBE))
    idx = np.arange(min(batch, len(tr.data)))
    return stop_gradient_audit(state, rt, probe, tr.R[idx], tr.feats.saliency[idx], tr.data.labels[idx],
                               barrier=barrier)
