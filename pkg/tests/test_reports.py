import json

import pytest

from localvis.exceptions import FormatError
from localvis.experiments import SCHEMA_VERSION
from localvis.reports import (
    CURVE_HEADER,
    ablation_table,
    curve_csv,
    dump_json,
    emit_reports,
    load_json,
    run_table,
    sweep_table,
)


def _stat(m):
    return {"mean": m, "ci_low": m - 0.01, "ci_high": m + 0.01}


def run_report():
    return {
        "kind": "run", "schema_version": SCHEMA_VERSION, "config_hash": "abc123", "label": "demo",
        "config": {"rule_set": "cifar10-full"}, "seeds": [{"seed": 0}, {"seed": 1}],
        "final": {"probe_acc": _stat(0.5), "epoch0_acc": _stat(0.3), "ncm_acc": _stat(0.45)},
        "curve": [{"epoch": 1, "mean_acc": 0.4, "ci_low": 0.39, "ci_high": 0.41},
                  {"epoch": 2, "mean_acc": 0.5, "ci_low": 0.49, "ci_high": 0.51}],
    }


def test_curve_csv_layout():
    lines = curve_csv(run_report()).splitlines()
    assert lines[0] == ",".join(CURVE_HEADER)
    assert lines[1] == "0,0.300000,0.290000,0.310000,abc123"
    assert lines[3].startswith("2,0.500000")


def test_run_table():
    text = run_table(run_report())
    assert "demo" in text and "n=2" in text
    assert "50.0" in text and "(49.0, 51.0)" in text
    assert "Fresh probe" not in text


def test_json_roundtrip(tmp_path):
    path = tmp_path / "r.json"
    dump_json(run_report(), path)
    assert load_json(path) == run_report()


def test_schema_mismatch(tmp_path):
    path = tmp_path / "r.json"
    path.write_text(json.dumps({**run_report(), "schema_version": 999}))
    with pytest.raises(FormatError):
        load_json(path)


def test_emit_reports(tmp_path):
    paths = emit_reports(run_report(), tmp_path)
    assert set(paths) == {"json", "table", "csv"}
    assert paths["csv"].endswith("run_abc123_curve.csv")


def test_ablation_table():
    stats = {"p_holm": 0.004, "d": 7.1, "power": 1.0, "status": "Adequate"}
    report = {
        "base": {"acc": 80.1, "parameters": 1000},
        "rows": [{"label": "-Anti-Hebbian", "acc": 74.6, "delta": -5.5, "stats": stats, "parameters": 900},
                 {"label": "-Memory", "acc": 76.9, "delta": -3.2, "stats": None, "parameters": 800}],
        "interactions": [{"A": "anti_hebbian", "B": "memory", "delta_A": -5.5, "delta_B": -3.2,
                          "delta_AB": -7.0, "I": 1.7}],
        "notes": ["exploratory"],
    }
    text = ablation_table(report)
    assert "-5.5**" in text and "Adequate" in text and "+1.7" in text and "Note: exploratory" in text


def test_sweep_table():
    report = {"reference_batch": 4, "rows": [
        {"B": 4, "acc": {"mean": 80.1, "ci_low": 79.6, "ci_high": 80.6}, "delta_vs_ref": None,
         "updates_per_epoch": 10, "updates_per_epoch_full": 12500}]}
    text = sweep_table(report)
    assert "Delta vs B=4" in text and "12500" in text
