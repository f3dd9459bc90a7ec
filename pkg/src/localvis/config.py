"""Run configuration with its rule-set presets and canonical hash.

The config is one flat dataclass so that a JSON file with the same keys can
override any value, and command-line flags override the file.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, fields
from typing import Any

from .exceptions import ConfigError

SCHEMA_VERSION = 1

MEMORY_MODES = ("hebbian_sa", "hopfield")
GATE_MODES = ("saliency", "uniform", "random")

# Components that can be switched on/off by a rule set or an ablation.
COMPONENTS = (
    "hebbian",
    "anti_hebbian",
    "free_energy",
    "recursive",
    "memory",
    "feedback",
    "side_branch",
    "div_norm",
    "homeostasis",
    "multi_frequency",
)

_ARCH_ALWAYS = ("div_norm", "homeostasis", "multi_frequency")

RULE_SETS: dict[str, frozenset[str]] = {
    "hebbian-only": frozenset({"hebbian", "div_norm", "homeostasis"}),
    "cifar10-reduced": frozenset(
        {"hebbian", "anti_hebbian", "free_energy", "memory", *_ARCH_ALWAYS}
    ),
    "cifar10-full": frozenset(
        {
            "hebbian", "anti_hebbian", "free_energy", "recursive",
            "memory", "feedback", "side_branch", *_ARCH_ALWAYS,
        }
    ),
    "cifar100-reduced": frozenset(
        {
            "hebbian", "anti_hebbian", "free_energy", "recursive",
            "memory", "feedback", *_ARCH_ALWAYS,
        }
    ),
    "cifar100-full": frozenset(
        {
            "hebbian", "anti_hebbian", "free_energy", "recursive",
            "memory", "feedback", "side_branch", *_ARCH_ALWAYS,
        }
    ),
}

# Ablation row name -> (components removed, side-branch gate mode or None).
ABLATIONS: dict[str, tuple[tuple[str, ...], str | None]] = {
    "anti_hebbian": (("anti_hebbian",), None),
    "free_energy": (("free_energy",), None),
    "recursive": (("recursive",), None),
    "memory": (("memory",), None),
    "feedback": (("feedback",), None),
    "side_branch": (("side_branch",), None),
    "div_norm": (("div_norm",), None),
    "homeostasis": (("homeostasis",), None),
    "uniform_gate": ((), "uniform"),
    "random_gate": ((), "random"),
}

ABLATION_LABELS = {
    "anti_hebbian": "-Anti-Hebbian",
    "free_energy": "-Free energy",
    "recursive": "-Recursive",
    "memory": "-Memory",
    "feedback": "-Feedback",
    "side_branch": "-Side branch",
    "div_norm": "-Div. normalisation",
    "homeostasis": "-Homeostasis",
    "uniform_gate": "Uniform gate",
    "random_gate": "Random gate",
}


@dataclass
class RunConfig:
    # experiment-level flags (shipped defaults; see paper_preset())
    memory_mode: str = "hebbian_sa"
    batch_size: int = 16
    epochs: int = 100
    seeds: tuple[int, ...] = (0,)
    stop_gradient: bool = True
    deterministic: bool = False
    augmentation: bool = False

    dataset: str = "cifar10"
    data_dir: str | None = None
    subset: int | None = None
    test_subset: int | None = None
    val_fraction: float = 0.10
    out_dir: str = "runs"
    rule_set: str = "cifar10-full"
    components: tuple[str, ...] | None = None  # explicit set; overrides rule_set
    ablate: tuple[str, ...] = ()
    gate_mode: str = "saliency"
    plasticity: bool = True
    fresh_probe_epochs: int | None = None

    # plasticity coefficients
    alpha_H: float = 5e-3
    delta_H: float = 1e-4
    alpha_A: float = 2e-3
    lambda_F: float = 3e-3
    alpha_R: float = 1e-3
    delta_R: float = 1e-4
    eta_d: float = 2e-3
    delta_d: float = 1e-4
    alpha_d: float = 5e-4
    eta_x: float = 1e-3
    delta_x: float = 1e-4
    eta_K: float = 1e-3
    delta_K: float = 5e-4
    eta_V: float = 1e-3
    delta_V: float = 5e-4
    eta_q: float = 1e-3
    delta_q: float = 1e-4
    eta_fb: float = 5e-4
    delta_fb: float = 1e-4
    eta_g: float = 0.01
    kappa_g: float = 0.1
    beta: float = 0.5
    rho_min: float = 0.5
    rho_max: float = 1.5
    probe_lr: float = 3e-4
    probe_weight_decay: float = 1e-4

    # values without a published setting
    alpha_inhib: float = 0.2
    alpha_div: float = 1.0
    beta_div: float = 0.5
    w_g: float = 0.5
    w_l: float = 0.5
    n_iters: int = 3
    lateral_radius: int = 2
    local_pool: int = 9
    gamma_rho: float = 0.5
    rho_trace_decay: float = 0.9
    paper_strict: bool = False
    row_norm_cap: float | None = 1.4142135623730951  # Kaiming-uniform row norm
    layer_widths: tuple[int, ...] = (1280, 768, 512, 384)
    side_hidden: int = 128
    side_out: int = 128
    n_slots: int = 96
    memory_dim: int = 384
    memory_mix: float = 0.25
    pool: int = 4
    single_stream_index: int = 3

    # front end
    color_mapping: str = "hpe"
    gabor_fmin: float = 0.05
    gabor_fmax: float = 0.40
    n_frequencies: int = 7
    n_theta: int = 7
    epsilon: float = 1e-6
    w_int: float = 1.0
    w_ori: float = 1.0
    alpha_sym: float = 0.5
    psym_sigma_frac: float = 0.25

    # supplementary rules (off unless requested)
    use_hrr: bool = False
    use_hyperbolic: bool = False
    use_wavelet: bool = False
    eta_hrr: float = 1e-4
    alpha_c: float = 0.5
    lambda_h: float = 1e-5
    lambda_w: float = 1e-4
    tau_w: float = 1e-2

    def __post_init__(self):
        for name in ("seeds", "ablate", "layer_widths", "components"):
            value = getattr(self, name)
            if isinstance(value, list):
                setattr(self, name, tuple(value))

    # -- derived views -------------------------------------------------
    def active_components(self) -> frozenset[str]:
        if self.rule_set not in RULE_SETS:
            raise ConfigError(f"unknown rule set {self.rule_set!r}; expected one of {sorted(RULE_SETS)}")
        active = set(RULE_SETS[self.rule_set] if self.components is None else self.components)
        for name in self.ablate:
            removed, _ = ABLATIONS[name]
            active.difference_update(removed)
        return frozenset(active)

    def effective_gate_mode(self) -> str:
        mode = self.gate_mode
        for name in self.ablate:
            _, gate = ABLATIONS[name]
            if gate is not None:
                mode = gate
        return mode

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        for key, value in out.items():
            if isinstance(value, tuple):
                out[key] = list(value)
        return out

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes)


def config_hash(cfg: RunConfig) -> str:
    """Hash of the canonical JSON text, independent of in-memory layout."""
    text = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def paper_preset(cfg: RunConfig | None = None) -> RunConfig:
    """Apply the published experiment overrides: Hopfield memory, B=4, 300 epochs, seeds 0-13."""
    cfg = cfg or RunConfig()
    return cfg.replace(
        memory_mode="hopfield",
        batch_size=4,
        epochs=300,
        seeds=tuple(range(14)),
        stop_gradient=True,
        deterministic=True,
        augmentation=False,
    )


def parse_seeds(text: str | int) -> tuple[int, ...]:
    """``"0-13"`` -> 0..13, ``"1,4,7"`` -> (1, 4, 7), ``"5"`` -> (5,)."""
    if isinstance(text, int):
        return (text,)
    seeds: list[int] = []
    try:
        for part in str(text).split(","):
            part = part.strip()
            if not part:
                continue
            if "-" in part[1:]:
                lo, hi = part.split("-", 1)
                lo_i, hi_i = int(lo), int(hi)
                if hi_i < lo_i:
                    raise ConfigError(f"empty seed range {part!r}")
                seeds.extend(range(lo_i, hi_i + 1))
            else:
                seeds.append(int(part))
    except ValueError as exc:
        raise ConfigError(f"cannot parse seeds {text!r}") from exc
    if not seeds:
        raise ConfigError("no seeds given")
    return tuple(seeds)


def validate(cfg: RunConfig, *, for_run: bool = False) -> RunConfig:
    """Check invariants.  ``for_run`` adds the checks that only matter
    when a model is actually built (memory mode)."""
    if cfg.augmentation:
        raise ConfigError("data augmentation is not supported: training uses raw images only")
    if not cfg.stop_gradient:
        raise ConfigError(
            "stop_gradient=False is an unsupported mode: gradients never enter the representation"
        )
    if cfg.memory_mode not in MEMORY_MODES:
        raise ConfigError(f"unknown memory mode {cfg.memory_mode!r}")
    if for_run and cfg.memory_mode != "hopfield":
        raise ConfigError(
            f"memory mode {cfg.memory_mode!r} is not implemented; use --memory-mode hopfield "
            "(or --paper-preset)"
        )
    if cfg.rule_set not in RULE_SETS:
        raise ConfigError(f"unknown rule set {cfg.rule_set!r}; expected one of {sorted(RULE_SETS)}")
    for name in cfg.components or ():
        if name not in COMPONENTS:
            raise ConfigError(f"unknown component {name!r}; expected one of {list(COMPONENTS)}")
    for name in cfg.ablate:
        if name not in ABLATIONS:
            raise ConfigError(f"unknown ablation {name!r}; expected one of {sorted(ABLATIONS)}")
    if cfg.gate_mode not in GATE_MODES:
        raise ConfigError(f"unknown gate mode {cfg.gate_mode!r}")
    if cfg.dataset not in ("cifar10", "cifar100"):
        raise ConfigError(f"unknown dataset {cfg.dataset!r}")
    if cfg.color_mapping not in ("hpe", "identity"):
        raise ConfigError(f"unknown colour mapping {cfg.color_mapping!r}")
    if cfg.batch_size < 1 or cfg.epochs < 0:
        raise ConfigError("batch_size must be >= 1 and epochs >= 0")
    if not 0.0 <= cfg.val_fraction < 1.0:
        raise ConfigError("val_fraction must be in [0, 1)")
    if cfg.alpha_div <= 0:
        raise ConfigError("alpha_div must be > 0")
    if cfg.n_iters < 1:
        raise ConfigError("n_iters must be >= 1")
    if not 0.0 <= cfg.eta_g <= 1.0:
        raise ConfigError("eta_g must be in [0, 1]")
    if cfg.gabor_fmax > 0.5 or cfg.gabor_fmin <= 0:
        raise ConfigError("Gabor frequencies must lie in (0, 0.5] cycles/pixel")
    if len(cfg.layer_widths) != 4:
        raise ConfigError("the main hierarchy has exactly four layers")
    for name in (
        "alpha_H", "delta_H", "alpha_A", "lambda_F", "alpha_R", "delta_R", "eta_d",
        "delta_d", "alpha_d", "eta_x", "delta_x", "eta_K", "delta_K", "eta_V",
        "delta_V", "eta_q", "delta_q", "eta_fb", "delta_fb", "kappa_g", "beta",
    ):
        if getattr(cfg, name) < 0:
            raise ConfigError(f"{name} must be >= 0")
    return cfg


def load_config_file(path) -> dict[str, Any]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if "seeds" in data and not isinstance(data["seeds"], list):
        data["seeds"] = list(parse_seeds(data["seeds"]))
    return data


def _check_type(name, value, default):
    if value is None or default is None:
        return
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, tuple):
        ok = isinstance(value, (list, tuple))
    else:
        ok = True
    if not ok:
        raise ConfigError(f"config key {name!r} has the wrong type: {value!r}")


def from_dict(data: dict[str, Any]) -> RunConfig:
    defaults = RunConfig()
    out = {}
    for f in fields(RunConfig):
        if f.name in data:
            _check_type(f.name, data[f.name], getattr(defaults, f.name))
            out[f.name] = data[f.name]
    return RunConfig(**out)


def zero_plasticity(cfg: RunConfig) -> RunConfig:
    """Every learning rate set to zero (homeostatic EMA included)."""
    return cfg.replace(
        alpha_H=0.0, alpha_A=0.0, lambda_F=0.0, alpha_R=0.0, eta_d=0.0, alpha_d=0.0,
        eta_x=0.0, eta_K=0.0, eta_V=0.0, eta_q=0.0, eta_fb=0.0, eta_g=0.0,
        eta_hrr=0.0, lambda_h=0.0, lambda_w=0.0,
    )


# Published plasticity hyperparameters; the shipped defaults must equal these.
HYPERPARAMETER_DEFAULTS = {
    "alpha_H": 5e-3, "delta_H": 1e-4, "alpha_A": 2e-3, "lambda_F": 3e-3,
    "alpha_R": 1e-3, "delta_R": 1e-4, "eta_d": 2e-3, "delta_d": 1e-4,
    "alpha_d": 5e-4, "eta_x": 1e-3, "delta_x": 1e-4, "eta_K": 1e-3,
    "delta_K": 5e-4, "eta_V": 1e-3, "delta_V": 5e-4, "eta_q": 1e-3,
    "delta_q": 1e-4, "eta_fb": 5e-4, "delta_fb": 1e-4, "eta_g": 0.01,
    "kappa_g": 0.1, "beta": 0.5, "rho_min": 0.5, "rho_max": 1.5,
    "probe_lr": 3e-4, "probe_weight_decay": 1e-4,
}
