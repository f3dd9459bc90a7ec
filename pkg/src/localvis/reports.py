"""Report files.  Every report is saved as schema-versioned JSON next to a
plain text table; single runs also get a per-epoch curve CSV."""

from __future__ import annotations

import csv
import io
import json
import os

from .exceptions import FormatError
from .experiments import SCHEMA_VERSION

CURVE_HEADER = ("epoch", "mean_acc", "ci_low", "ci_high", "config_hash")


def dump_json(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_json(path):
    with open(path, encoding="utf-8") as fh:
        report = json.load(fh)
    version = report.get("schema_version")
    if version != SCHEMA_VERSION:
        raise FormatError(f"{path}: report schema {version}, expected {SCHEMA_VERSION}")
    return report


def curve_rows(report):
    """Epoch-0 baseline as the first (reference) row, then one row per epoch."""
    h = report["config_hash"]
    rows = []
    base = report.get("final", {}).get("epoch0_acc")
    if base is not None:
        rows.append((0, base["mean"], base["ci_low"], base["ci_high"], h))
    for rec in report.get("curve", []):
        rows.append((rec["epoch"], rec["mean_acc"], rec["ci_low"], rec["ci_high"], h))
    return rows


def curve_csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_HEADER)
    for epoch, m, lo, hi, h in curve_rows(report):
        w.writerow((epoch, f"{m:.6f}", f"{lo:.6f}", f"{hi:.6f}", h))
    return buf.getvalue()


def _fmt(x, spec=".1f", missing="-"):
    return missing if x is None else format(x, spec)


def _p(p):
    return "<0.001" if p < 0.001 else f"{p:.3f}"


def run_table(report):
    f = report["final"]
    lines = [f"Configuration {report.get('label') or report['config']['rule_set']} "
             f"(hash {report['config_hash']}, n={len(report['seeds'])})",
             f"{'Readout':<28}{'Acc. (%)':>10}{'95% CI':>20}"]
    names = {
        "probe_acc": "Co-trained probe", "fresh_probe_acc": "Fresh probe", "ncm_acc": "NCM (cosine)",
        "epoch0_acc": "Epoch 0 (frozen random)", "frozen_classifier_acc": "Random frozen classifier",
        "val_acc": "Validation (probe)",
    }
    for key, name in names.items():
        s = f.get(key)
        if s is None:
            continue
        ci = f"({100 * s['ci_low']:.1f}, {100 * s['ci_high']:.1f})"
        lines.append(f"{name:<28}{100 * s['mean']:>10.1f}{ci:>20}")
    return "\n".join(lines) + "\n"


def ablation_table(report):
    lines = [f"{'Ablation':<22}{'Acc. (%)':>9}{'Delta':>8}{'p_holm':>9}{'d':>6}{'Power':>7}  {'Status':<13}Params"]
    lines.append(f"{'Full system':<22}{report['base']['acc']:>9.1f}{'-':>8}{'-':>9}{'-':>6}{'-':>7}  {'-':<13}"
                 f"{report['base']['parameters']}")
    for row in report["rows"]:
        st = row["stats"]
        if st is None:
            lines.append(f"{row['label']:<22}{row['acc']:>9.1f}{row['delta']:>8.1f}{'-':>9}{'-':>6}{'-':>7}  {'-':<13}"
                         f"{row['parameters']}")
            continue
        stars = "**" if st["p_holm"] < 0.01 else "*" if st["p_holm"] < 0.05 else ""
        delta = f"{row['delta']:.1f}{stars}"
        lines.append(
            f"{row['label']:<22}{row['acc']:>9.1f}{delta:>8}{_p(st['p_holm']):>9}{st['d']:>6.1f}"
            f"{st['power']:>7.2f}  {st['status']:<13}{row['parameters']}"
        )
    if report["interactions"]:
        lines.append("")
        lines.append(f"{'A':<14}{'B':<14}{'D_-A':>7}{'D_-B':>7}{'D_-A,-B':>9}{'I':>7}")
        for it in report["interactions"]:
            lines.append(f"{it['A']:<14}{it['B']:<14}{it['delta_A']:>7.1f}{it['delta_B']:>7.1f}"
                         f"{it['delta_AB']:>9.1f}{it['I']:>+7.1f}")
    lines.extend(f"Note: {n}" for n in report["notes"])
    return "\n".join(lines) + "\n"


def greedy_table(report):
    lines = [f"{'Step':<6}{'System':<28}{'Acc. (%)':>10}{'95% CI':>18}{'Delta':>8}{'d':>7}{'Frac.':>8}"]
    for s in report["steps"]:
        acc = s["acc"]
        ci = f"({acc['ci_low']:.1f}, {acc['ci_high']:.1f})"
        mark = "  <- threshold" if s["step"] == report["threshold_step"] else ""
        lines.append(f"{s['step']:<6}{s['system']:<28}{acc['mean']:>10.1f}{ci:>18}"
                     f"{_fmt(s['delta'], '+.1f'):>8}{_fmt(s['d'], '.1f'):>7}{_fmt(s['fraction_of_total'], '.2f'):>8}"
                     f"{mark}")
    lines.extend(f"Note: {n}" for n in report["notes"])
    return "\n".join(lines) + "\n"


def sweep_table(report):
    lines = [f"{'B':>4}{'Acc. (%)':>10}{'95% CI':>18}{'Delta vs B=' + str(report['reference_batch']):>16}"
             f"{'Updates/epoch':>15}{'(full)':>9}"]
    for r in report["rows"]:
        acc = r["acc"]
        ci = f"({acc['ci_low']:.1f}, {acc['ci_high']:.1f})"
        lines.append(f"{r['B']:>4}{acc['mean']:>10.1f}{ci:>18}{_fmt(r['delta_vs_ref'], '+.1f'):>16}"
                     f"{r['updates_per_epoch']:>15}{r['updates_per_epoch_full']:>9}")
    return "\n".join(lines) + "\n"


TABLES = {"run": run_table, "ablation": ablation_table, "greedy": greedy_table, "batch_sweep": sweep_table}


def emit_reports(report, out_dir, stem=None):
    """Write ``<stem>.json`` with its text table; runs add ``<stem>_curve.csv``."""
    os.makedirs(out_dir, exist_ok=True)
    stem = stem or f"{report['kind']}_{report['config_hash']}"
    paths = {"json": os.path.join(out_dir, stem + ".json"), "table": os.path.join(out_dir, stem + ".txt")}
    dump_json(report, paths["json"])
    with open(paths["table"], "w", encoding="utf-8") as fh:
        fh.write(TABLES[report["kind"]](report))
    if report["kind"] == "run":
        paths["csv"] = os.path.join(out_dir, stem + "_curve.csv")
        with open(paths["csv"], "w", encoding="utf-8") as fh:
            fh.write(curve_csv(report))
    return paths
