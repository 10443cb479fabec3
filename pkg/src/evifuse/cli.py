"""Command line entry point: ``evifuse {gen,train,eval,fuse,density,report}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, config_help, load_config
from .dataio import export_features, fmt, ingest_features, load_heads, save_heads, write_csv
from .errors import ConfigError, EvifuseError, NumericalError
from .fusion import FusionStrategy, conflict_degree_arrays, fuse_evidence_arrays, predicted_class_arrays
from .harness import evaluate, load_dataset, metrics_json, run_experiment
from .metrics import uncertainty_density
from .opinion import opinions_from_evidence
from .toymodel import train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS keeps a flag given before the subcommand from being reset by the subparser.
    common = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", metavar="PATH", help="flat 'section.key = value' config file")
    common.add_argument("--seed", type=int, help="override data, split and pipeline seeds")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides output.dir)")

    p = _Parser(
        prog="evifuse",
        description="Conflict-aware evidential fusion: synthetic experiments, training and reports.",
        epilog="config keys:\n" + config_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
        parents=[common],
    )
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("gen", parents=[common], help="write the synthetic dataset as per-view CSV files")

    t = sub.add_parser("train", parents=[common], help="train heads and write heads.txt and loss_trace.csv")
    t.add_argument("--data", nargs="+", metavar="CSV", help="per-view feature files (default: configured dataset)")

    e = sub.add_parser("eval", parents=[common], help="evaluate saved heads on a dataset")
    e.add_argument("--heads", required=True, metavar="PATH")
    e.add_argument("--data", nargs="+", metavar="CSV", help="per-view feature files (default: configured dataset)")

    f = sub.add_parser("fuse", parents=[common], help="fuse evidence vectors given inline or in a CSV file")
    src = f.add_mutually_exclusive_group(required=True)
    src.add_argument("--evidence", action="append", metavar="E1,E2,...", help="one view's evidence; repeat per view")
    src.add_argument("--file", metavar="CSV", help="one row of evidence per view, no header")
    f.add_argument("--strategy", default="cmam,average,harmonic", help="comma-separated strategies")

    d = sub.add_parser("density", parents=[common], help="histogram of uncertainties in [0, 1]")
    dsrc = d.add_mutually_exclusive_group(required=True)
    dsrc.add_argument("--values", metavar="U1,U2,...")
    dsrc.add_argument("--file", metavar="PATH", help="one value per line, or a CSV whose first column holds them")
    d.add_argument("--bins", type=int, default=20)

    sub.add_parser("report", parents=[common], help="full experiment: train, evaluate, write CSV/JSON/PNG bundle")
    return p


def _load_cfg(args) -> ExperimentConfig:
    path, seed, out = (getattr(args, k, None) for k in ("config", "seed", "out"))
    cfg = load_config(path) if path else ExperimentConfig()
    if seed is not None:
        cfg = cfg.with_seed(seed)
    if out is not None:
        cfg = replace(cfg, out_dir=out)
    return cfg


def _dataset(cfg, paths):
    return ingest_features(paths, cfg.n_classes) if paths else load_dataset(cfg)


def _parse_vector(text: str) -> np.ndarray:
    try:
        return np.asarray([float(x) for x in text.split(",") if x.strip()])
    except ValueError:
        raise ConfigError(f"cannot parse numbers from {text!r}") from None


def cmd_gen(cfg, args) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = load_dataset(cfg)
    paths = export_features(ds, [out / f"view_{v}.csv" for v in range(len(ds.views))])
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_train(cfg, args) -> int:
    ds = _dataset(cfg, args.data)
    res = train(cfg.pipeline, ds)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_heads(res.pipeline, out / "heads.txt")
    names = [h.name for h in res.pipeline.heads]
    write_csv(
        out / "loss_trace.csv",
        ["epoch", "lambda_t", *names, "total"],
        ([r.epoch, r.lambda_t, *r.totals, r.total] for r in res.trace),
    )
    last = res.trace[-1].total if res.trace else float("nan")
    print(f"trained {len(names)} heads on {len(ds)} samples, final loss {fmt(last)}")
    print(out / "heads.txt")
    return EXIT_OK


def cmd_eval(cfg, args) -> int:
    pipe = load_heads(args.heads)
    ds = _dataset(cfg, args.data)
    _, metrics = evaluate(pipe, ds, cfg.pipeline.fusion)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(metrics_json(metrics), encoding="utf-8")
    print("strategy,acc,mf1,n_samples")
    for s, m in metrics.items():
        print(f"{s.value},{fmt(m.accuracy)},{fmt(m.macro_f1)},{m.n_samples}")
    return EXIT_OK


def cmd_fuse(cfg, args) -> int:
    if args.file:
        with open(args.file, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r]
        vectors = [_parse_vector(",".join(r)) for r in rows]
    else:
        vectors = [_parse_vector(v) for v in args.evidence]
    if not vectors or len({v.size for v in vectors}) != 1:
        raise ConfigError("all evidence vectors must have the same, non-zero length")
    views = [v[None, :] for v in vectors]
    b, _ = zip(*(opinions_from_evidence(v) for v in views))
    k = vectors[0].size
    print("strategy,prediction,u," + ",".join(f"b{j}" for j in range(k)))
    try:
        strategies = [FusionStrategy.parse(n) for n in args.strategy.split(",")]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    for s in strategies:
        jb, ju = fuse_evidence_arrays(views, s)
        pred = int(predicted_class_arrays(jb, ju)[0])
        print(f"{s.value},{pred},{fmt(ju[0])}," + ",".join(fmt(x) for x in jb[0]))
    for i in range(len(views)):
        for j in range(i + 1, len(views)):
            print(f"conflict,{i},{j},{fmt(conflict_degree_arrays(b[i], b[j])[0])}")
    return EXIT_OK


def cmd_density(cfg, args) -> int:
    if args.values:
        u = _parse_vector(args.values)
    else:
        with open(args.file, newline="", encoding="utf-8") as fh:
            cells = [r[0] for r in csv.reader(fh) if r and r[0].strip()]
        try:
            u = np.asarray([float(c) for c in cells])
        except ValueError:
            u = np.asarray([float(c) for c in cells[1:]])  # first line was a header
    centers, dens = uncertainty_density(u, args.bins)
    print("bin_center,density")
    for c, d in zip(centers, dens):
        print(f"{fmt(c)},{fmt(d)}")
    return EXIT_OK


def cmd_report(cfg, args) -> int:
    res = run_experiment(cfg)
    print("strategy,acc,mf1,n_samples")
    for s, m in res.metrics.items():
        print(f"{s.value},{fmt(m.accuracy)},{fmt(m.macro_f1)},{m.n_samples}")
    print(f"report written to {res.out_dir}")
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "fuse": cmd_fuse,
    "density": cmd_density,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_cfg(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"evifuse: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"evifuse: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (EvifuseError, ValueError, OSError) as exc:
        print(f"evifuse: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
