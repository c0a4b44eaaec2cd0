"""Command-line entry point: ``python -m artifact <subcommand> ...``.

Exit codes: 0 success, 1 contract violation, 2 I/O or dataset error,
3 configuration error (including unknown flags).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import replace
from importlib import metadata

import numpy as np

from . import analysis, artifacts, theorylab
from .config import ConfigError, load_config
from .encoder import embed_dataset
from .evaluation import ProbeConfig, linear_probe
from .graphcore import (
    DatasetFormatError,
    SplitResult,
    SplitSpec,
    dataset_fingerprint,
    generate_synthetic_imbalanced,
    load_tu_dataset,
    make_imbalanced_split,
    write_tu_dataset,
)
from .numerics import ContractError
from .trainer import SELECTORS, TOGGLES, TrainConfig, evaluate, train

EXIT_OK, EXIT_CONTRACT, EXIT_IO, EXIT_CONFIG = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(f"{self.prog}: {message}")


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _ratio(text: str) -> tuple:
    try:
        a, b = text.split(":")
        return int(a), int(b)
    except ValueError:
        raise ConfigError(f"ratio must look like 5:45, got {text!r}") from None


def _add_data_args(p):
    p.add_argument("--data", required=True, help="directory holding the TU files")
    p.add_argument("--name", default=None, help="TU dataset name (default: directory basename)")


def _load(args):
    name = args.name or os.path.basename(os.path.normpath(args.data))
    return load_tu_dataset(args.data, name)


def _make_split(ds, args) -> SplitResult:
    if getattr(args, "split", None):
        with open(args.split) as fh:
            return SplitResult.from_dict(json.load(fh))
    lo, hi = _ratio(args.ratio)
    spec = SplitSpec(lo, hi, validation_fraction=args.validation_fraction, seed=args.split_seed)
    return make_imbalanced_split(ds, spec)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="artifact", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=_version())
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic imbalanced dataset in TU format")
    p.add_argument("--counts", default="900,100", help="graphs per class, comma separated")
    p.add_argument("--min-nodes", type=int, default=6)
    p.add_argument("--max-nodes", type=int, default=12)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default="SYNTH")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("split", help="draw an imbalanced split and write it as JSON")
    _add_data_args(p)
    p.add_argument("--ratio", default="5:45", help="minority:majority training counts")
    p.add_argument("--validation-fraction", type=float, default=0.25)
    p.add_argument("--seed", dest="split_seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output JSON path")

    p = sub.add_parser("train", help="train, score, probe and write run artifacts")
    _add_data_args(p)
    p.add_argument("--split", default=None, help="split JSON from the split subcommand")
    p.add_argument("--ratio", default="5:45")
    p.add_argument("--validation-fraction", type=float, default=0.25)
    p.add_argument("--split-seed", type=int, default=None, help="defaults to --seed")
    p.add_argument("--config", default=None, help="INI config file")
    p.add_argument("--selector", choices=SELECTORS, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--alpha0", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--ablate", default="", help=f"comma separated toggles to switch off: {','.join(TOGGLES)}")
    p.add_argument("--dump-masks", action="store_true")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("evaluate", help="linear probe on embeddings saved by train")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--probe-epochs", type=int, default=None)
    p.add_argument("--probe-lr", type=float, default=None)
    p.add_argument("--probe-l2", type=float, default=None)
    p.add_argument("--out", default=None, help="default: <run-dir>/eval_report.json")

    p = sub.add_parser("trace", help="export the score-trace matrix of a run")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--lag", type=int, default=10)
    p.add_argument("--out", default=None, help="default: <run-dir>/trace.csv")

    p = sub.add_parser("verify-theorem", help="check the subset-gradient bound on random convex problems")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--seeds", type=int, default=1, help="policy seeds per instance")
    p.add_argument("--horizon", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    return parser


def cmd_generate(args) -> int:
    try:
        counts = tuple(int(c) for c in args.counts.split(","))
    except ValueError:
        raise ConfigError(f"--counts must be integers, got {args.counts!r}") from None
    ds = generate_synthetic_imbalanced(counts, (args.min_nodes, args.max_nodes), args.noise, args.seed)
    target = os.path.join(args.out_dir, args.name)
    write_tu_dataset(ds, target, args.name)
    print(f"wrote {len(ds.graphs)} graphs to {target}")
    return EXIT_OK


def cmd_split(args) -> int:
    ds = _load(args)
    split = _make_split(ds, args)
    parent = os.path.dirname(os.path.abspath(args.out))
    artifacts.ensure_dir(parent)
    artifacts.write_json(args.out, split.to_dict())
    print(f"train={len(split.train)} validation={len(split.validation)} test={len(split.test)}")
    return EXIT_OK


def _train_config(args) -> TrainConfig:
    overrides = {
        "selector": args.selector,
        "epochs": args.epochs,
        "alpha0": args.alpha0,
        "epsilon": args.epsilon,
        "seed": args.seed,
        "workers": args.workers,
    }
    for toggle in filter(None, (t.strip() for t in args.ablate.split(","))):
        if toggle not in TOGGLES:
            raise ConfigError(f"--ablate: unknown toggle {toggle!r} (choose from {', '.join(TOGGLES)})")
        overrides[toggle] = False
    return load_config(args.config, overrides)


def cmd_train(args) -> int:
    cfg = _train_config(args)
    if args.split_seed is None:
        args.split_seed = cfg.seed
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    ds = _load(args)
    split = _make_split(ds, args)
    result = train(ds, split, cfg)
    report, where = evaluate(ds, split, result, cfg)
    out = artifacts.ensure_dir(args.out_dir)

    artifacts.write_metrics(os.path.join(out, "metrics.jsonl"), result)
    artifacts.write_scores(os.path.join(out, "scores.csv"), result)
    if args.dump_masks:
        artifacts.write_masks(os.path.join(out, "masks.json"), result)
    eval_ids = split.test if where == "test" else split.train
    np.savez(
        os.path.join(out, "embeddings.npz"),
        train_x=embed_dataset(ds, split.train, result.params, result.mask),
        train_y=ds.labels[split.train],
        train_ids=np.asarray(split.train),
        eval_x=embed_dataset(ds, eval_ids, result.params, result.mask),
        eval_y=ds.labels[eval_ids],
        eval_ids=np.asarray(eval_ids),
        class_count=np.int64(ds.class_count),
    )
    fingerprint = dataset_fingerprint(ds)
    artifacts.write_json(os.path.join(out, "report.json"), {
        "metrics": report.to_dict(),
        "eval_set": where,
        "budget": result.budget(),
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "dataset_fingerprint": fingerprint,
        "split": split.to_dict(),
    })
    artifacts.write_json(os.path.join(out, "manifest.json"), {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "dataset": {"path": os.path.abspath(args.data), "name": args.name, "fingerprint": fingerprint},
        "split": split.to_dict(),
        "version": _version(),
        "started": started,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    })
    print(f"{cfg.selector}: f1_macro={report.f1_macro:.4f} balanced_accuracy={report.balanced_accuracy:.4f} "
          f"budget={result.budget():.3f} ({where} set)")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    path = os.path.join(args.run_dir, "embeddings.npz")
    with np.load(path) as z:
        data = {k: z[k] for k in z.files}
    probe = ProbeConfig()
    manifest_path = os.path.join(args.run_dir, "manifest.json")
    if os.path.exists(manifest_path):
        with open(manifest_path) as fh:
            saved = json.load(fh)["config"]
        probe = TrainConfig(**saved).probe()
    probe = replace(
        probe,
        epochs=args.probe_epochs if args.probe_epochs is not None else probe.epochs,
        lr=args.probe_lr if args.probe_lr is not None else probe.lr,
        l2=args.probe_l2 if args.probe_l2 is not None else probe.l2,
    )
    report = linear_probe(data["train_x"], data["train_y"], data["eval_x"], data["eval_y"],
                          int(data["class_count"]), probe)
    out = args.out or os.path.join(args.run_dir, "eval_report.json")
    artifacts.write_json(out, {"metrics": report.to_dict()})
    print(json.dumps(report.to_dict(), sort_keys=True))
    return EXIT_OK


def cmd_trace(args) -> int:
    records = artifacts.read_scores(os.path.join(args.run_dir, "scores.csv"))
    matrix, order = analysis.score_trace_matrix(records)
    out = args.out or os.path.join(args.run_dir, "trace.csv")
    artifacts.write_matrix_csv(out, matrix, order, [r.epoch for r in records])
    line = f"wrote {matrix.shape[0]}x{matrix.shape[1]} trace to {out}"
    if len(records) > args.lag:
        line += f"; churn(lag={args.lag})={analysis.churn(records, args.lag):.4f}"
    print(line)
    return EXIT_OK


def cmd_verify_theorem(args) -> int:
    if args.instances < 1 or args.seeds < 1 or args.horizon < 1:
        raise ConfigError("--instances, --seeds and --horizon must be >= 1")
    out = artifacts.ensure_dir(args.out_dir)
    path = os.path.join(out, "theorem_report.csv")
    failures = 0
    cols = ["instance", "family", "policy", "seed", "lhs", "rhs", "holds", "mean_err"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in theorylab.run_suite(args.instances, range(args.seeds), horizon=args.horizon, base_seed=args.seed):
            failures += not row["holds"]
            w.writerow([
                row["instance"], row["family"], row["policy"], row["seed"],
                repr(row["lhs"]), repr(row["rhs"]), str(row["holds"]).lower(), repr(row["mean_err"]),
            ])
    print(f"wrote {path}; violations: {failures}")
    return EXIT_CONTRACT if failures else EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "split": cmd_split,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "trace": cmd_trace,
    "verify-theorem": cmd_verify_theorem,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, DatasetFormatError, json.JSONDecodeError, KeyError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ContractError, theorylab.OracleError) as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
