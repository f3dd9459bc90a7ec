"""Command-line entry point.

Exit codes: 0 success, 2 configuration or input error, 3 numerical
failure, 4 gradient-isolation abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ABLATIONS, RULE_SETS, RunConfig, from_dict, load_config_file, paper_preset, parse_seeds, validate
from .engine import DEFAULT_BARRIER
from .exceptions import ConfigError, LocalVisError
from .experiments import BATCH_SIZES, load_bundle, run_ablation, run_batch_sweep, run_config, run_greedy_replay
from .reports import TABLES, emit_reports

log = logging.getLogger("localvis")


def parse_bool(text):
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def parse_int_list(text):
    try:
        return tuple(int(t) for t in str(text).split(",") if t.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser():
    p = argparse.ArgumentParser(
        prog="localvis",
        description="Train and evaluate the local-plasticity visual hierarchy.",
    )
    g = p.add_argument_group("run")
    g.add_argument("--config", help="JSON file of config keys; command-line flags override it")
    g.add_argument("--paper-preset", action="store_true",
                   help="hopfield memory, B=4, 300 epochs, seeds 0-13, deterministic")
    g.add_argument("--memory-mode", choices=("hebbian_sa", "hopfield"))
    g.add_argument("--batch-size", type=int)
    g.add_argument("--epochs", type=int)
    g.add_argument("--seed", type=int, help="single seed")
    g.add_argument("--seeds", help="seed list or range, e.g. 0-13 or 0,3,5")
    g.add_argument("--stop-gradient", type=parse_bool, nargs="?", const=True)
    g.add_argument("--deterministic", type=parse_bool, nargs="?", const=True)
    g.add_argument("--augmentation", type=parse_bool, nargs="?", const=True)
    g.add_argument("--rule-set", choices=sorted(RULE_SETS))
    g.add_argument("--dataset", choices=("cifar10", "cifar100"))
    g.add_argument("--fresh-probe-epochs", type=int)
    g.add_argument("--val-fraction", type=float)
    d = p.add_argument_group("data")
    d.add_argument("--data-dir", help="directory holding the CIFAR binary files")
    d.add_argument("--subset", type=int, help="class-balanced training subset size")
    d.add_argument("--test-subset", type=int, help="class-balanced test subset size")
    d.add_argument("--any-size", action="store_true",
                   help="accept any whole number of records per file (small fixtures)")
    e = p.add_argument_group("experiments")
    e.add_argument("--ablate", help="comma-separated components to remove one at a time, or 'all' "
                                    f"({', '.join(ABLATIONS)})")
    e.add_argument("--pairs", help="pairwise interactions, e.g. anti_hebbian:memory,free_energy:memory")
    e.add_argument("--greedy-replay", action="store_true", help="replay the six-step greedy construction")
    e.add_argument("--batch-sweep", nargs="?", const=BATCH_SIZES, type=parse_int_list,
                   help="batch sizes to sweep (default 1,4,8,16,32)")
    o = p.add_argument_group("output")
    o.add_argument("--out-dir")
    o.add_argument("--print-config", action="store_true", help="print the resolved config as JSON and exit")
    o.add_argument("-v", "--verbose", action="store_true")
    return p


_FLAG_FIELDS = {
    "memory_mode": "memory_mode",
    "batch_size": "batch_size",
    "epochs": "epochs",
    "stop_gradient": "stop_gradient",
    "deterministic": "deterministic",
    "augmentation": "augmentation",
    "rule_set": "rule_set",
    "dataset": "dataset",
    "fresh_probe_epochs": "fresh_probe_epochs",
    "val_fraction": "val_fraction",
    "data_dir": "data_dir",
    "subset": "subset",
    "test_subset": "test_subset",
    "out_dir": "out_dir",
}


def parse_config(args) -> RunConfig:
    """Defaults, then the preset, then the config file, then explicit flags."""
    cfg = paper_preset(RunConfig()) if args.paper_preset else RunConfig()
    if args.config:
        try:
            cfg = from_dict({**cfg.to_dict(), **load_config_file(args.config)})
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    changes = {field: getattr(args, flag) for flag, field in _FLAG_FIELDS.items() if getattr(args, flag) is not None}
    if args.seed is not None and args.seeds is not None:
        raise ConfigError("use either --seed or --seeds")
    if args.seed is not None:
        changes["seeds"] = (args.seed,)
    if args.seeds is not None:
        changes["seeds"] = parse_seeds(args.seeds)
    cfg = cfg.replace(**changes)
    return validate(cfg)


def _ablation_names(text):
    if text.strip() == "all":
        return list(ABLATIONS)
    names = [t.strip() for t in text.split(",") if t.strip()]
    for n in names:
        if n not in ABLATIONS:
            raise ConfigError(f"unknown ablation {n!r}; expected one of {', '.join(ABLATIONS)}")
    return names


def _pairs(text):
    out = []
    for item in (text or "").split(","):
        if not item.strip():
            continue
        a, sep, b = item.partition(":")
        if not sep:
            raise ConfigError(f"pair {item!r} must look like A:B")
        out.append((a.strip(), b.strip()))
    return out


def run(args, barrier=DEFAULT_BARRIER):
    cfg = parse_config(args)
    if args.print_config:
        print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
        return 0
    validate(cfg, for_run=True)
    bundle = load_bundle(cfg, strict=not args.any_size)
    out_dir = cfg.out_dir
    if args.ablate or args.pairs:
        names = _ablation_names(args.ablate) if args.ablate else []
        report = run_ablation(cfg, names, bundle, pairs=_pairs(args.pairs), barrier=barrier, out_dir=out_dir)
    elif args.greedy_replay:
        report = run_greedy_replay(cfg, bundle, barrier=barrier, out_dir=out_dir)
    elif args.batch_sweep:
        report = run_batch_sweep(cfg, bundle, tuple(args.batch_sweep), barrier=barrier, out_dir=out_dir)
    else:
        report = run_config(cfg, bundle, barrier=barrier, out_dir=out_dir)
    paths = emit_reports(report, out_dir)
    sys.stdout.write(TABLES[report["kind"]](report))
    for kind, path in sorted(paths.items()):
        print(f"{kind}: {path}")
    return 0


def main(argv=None, barrier=DEFAULT_BARRIER):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return run(args, barrier=barrier)
    except LocalVisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
