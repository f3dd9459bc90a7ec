import json

import pytest

from localvis.cli import build_parser, parse_config
from localvis.config import (
    ABLATIONS,
    HYPERPARAMETER_DEFAULTS,
    RULE_SETS,
    RunConfig,
    config_hash,
    from_dict,
    load_config_file,
    paper_preset,
    parse_seeds,
    validate,
    zero_plasticity,
)
from localvis.exceptions import ConfigError

# Golden values written out independently of the package constants.
GOLDEN_HYPERPARAMETERS = {
    "alpha_H": 0.005, "delta_H": 0.0001, "alpha_A": 0.002, "lambda_F": 0.003,
    "alpha_R": 0.001, "delta_R": 0.0001, "eta_d": 0.002, "delta_d": 0.0001,
    "alpha_d": 0.0005, "eta_x": 0.001, "delta_x": 0.0001, "eta_K": 0.001,
    "delta_K": 0.0005, "eta_V": 0.001, "delta_V": 0.0005, "eta_q": 0.001,
    "delta_q": 0.0001, "eta_fb": 0.0005, "delta_fb": 0.0001, "eta_g": 0.01,
    "kappa_g": 0.1, "beta": 0.5, "rho_min": 0.5, "rho_max": 1.5,
    "probe_lr": 0.0003, "probe_weight_decay": 0.0001,
}

GOLDEN_FLAG_DEFAULTS = {
    "memory_mode": "hebbian_sa", "batch_size": 16, "epochs": 100, "seeds": (0,),
    "stop_gradient": True, "deterministic": False, "augmentation": False,
}

GOLDEN_PRESET = {
    "memory_mode": "hopfield", "batch_size": 4, "epochs": 300, "seeds": tuple(range(14)),
    "stop_gradient": True, "deterministic": True, "augmentation": False,
}


def test_golden_defaults():
    cfg = RunConfig()
    assert len(GOLDEN_HYPERPARAMETERS) >= 20
    for key, value in {**GOLDEN_HYPERPARAMETERS, **GOLDEN_FLAG_DEFAULTS}.items():
        assert getattr(cfg, key) == value, key
    assert HYPERPARAMETER_DEFAULTS == GOLDEN_HYPERPARAMETERS


def test_preset_overrides():
    cfg = paper_preset()
    for key, value in GOLDEN_PRESET.items():
        assert getattr(cfg, key) == value, key
    for key, value in GOLDEN_HYPERPARAMETERS.items():
        assert getattr(cfg, key) == value


def test_cli_preset_flag():
    cfg = parse_config(build_parser().parse_args(["--paper-preset"]))
    for key, value in GOLDEN_PRESET.items():
        assert getattr(cfg, key) == value, key
    cfg = parse_config(build_parser().parse_args(["--paper-preset", "--epochs", "3", "--seed", "5"]))
    assert cfg.epochs == 3 and cfg.seeds == (5,) and cfg.batch_size == 4


def test_config_file_then_flags(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"alpha_H": 0.01, "seeds": "2-4", "epochs": 7}))
    cfg = parse_config(build_parser().parse_args(["--config", str(path), "--epochs", "9"]))
    assert cfg.alpha_H == 0.01 and cfg.seeds == (2, 3, 4) and cfg.epochs == 9


@pytest.mark.parametrize("text,expected", [("0-13", tuple(range(14))), ("1,4,7", (1, 4, 7)), ("5", (5,)), (3, (3,))])
def test_parse_seeds(text, expected):
    assert parse_seeds(text) == expected


@pytest.mark.parametrize("text", ["", "a", "5-2", ","])
def test_parse_seeds_errors(text):
    with pytest.raises(ConfigError):
        parse_seeds(text)


@pytest.mark.parametrize(
    "changes",
    [
        {"augmentation": True}, {"stop_gradient": False}, {"memory_mode": "lstm"}, {"rule_set": "x"},
        {"ablate": ("nope",)}, {"gate_mode": "x"}, {"batch_size": 0}, {"val_fraction": 1.0},
        {"alpha_H": -1.0}, {"layer_widths": (8, 8)}, {"gabor_fmax": 0.6}, {"components": ("wings",)},
    ],
)
def test_validate_rejects(changes):
    with pytest.raises(ConfigError):
        validate(RunConfig().replace(**changes))


def test_hebbian_sa_rejected_only_at_run_time():
    validate(RunConfig())
    with pytest.raises(ConfigError, match="hopfield"):
        validate(RunConfig(), for_run=True)
    validate(RunConfig(memory_mode="hopfield"), for_run=True)


def test_from_dict_type_check():
    with pytest.raises(ConfigError):
        from_dict({"epochs": "10"})
    with pytest.raises(ConfigError):
        from_dict({"deterministic": 1})
    assert from_dict({"alpha_H": 1}).alpha_H == 1
    assert from_dict({"row_norm_cap": None}).row_norm_cap is None


def test_unknown_file_key(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"alpha_Q": 1.0}))
    with pytest.raises(ConfigError, match="alpha_Q"):
        load_config_file(path)


def test_hash_stable_and_sensitive():
    a, b = RunConfig(), RunConfig()
    assert config_hash(a) == config_hash(b) and len(config_hash(a)) == 16
    assert config_hash(a) != config_hash(a.replace(alpha_H=0.004))
    assert config_hash(from_dict(a.to_dict())) == config_hash(a)


def test_rule_sets_and_ablations():
    full = RunConfig().active_components()
    assert RULE_SETS["hebbian-only"] < full
    assert "memory" not in RunConfig(ablate=("memory",)).active_components()
    assert RunConfig(ablate=("uniform_gate",)).effective_gate_mode() == "uniform"
    assert set(ABLATIONS) >= {"anti_hebbian", "free_energy", "memory", "feedback", "side_branch"}


def test_zero_plasticity():
    z = zero_plasticity(RunConfig())
    assert z.alpha_H == z.alpha_A == z.eta_g == z.eta_fb == 0.0
