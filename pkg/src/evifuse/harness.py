"""Experiment orchestration: data, training, evaluation and the report bundle.

A report directory holds::

    config.txt                      effective configuration, one key per line
    metrics.json                    {strategy: {acc, mf1, per_class_f1, n_samples}}
    confusion_<strategy>.csv        true class (rows) x predicted class
    conflict_stats.csv              mean pairwise conflict, bucketed, with injected/clean counts
    uncertainty_density_<strategy>.csv
    loss_trace.csv                  per-epoch losses of every head
    predictions.csv                 per test sample: label, flags, predictions and joint u
    heads.txt                       trained heads (see dataio)
    loss_trace.png, uncertainty_density.png, conflict_buckets.png   (when png is enabled)

All strategies are evaluated on the same trained heads.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ExperimentConfig
from .dataio import fmt, ingest_features, save_heads, write_csv
from .errors import EvifuseError
from .fusion import FusionStrategy
from .metrics import BUCKET_NAMES, ConflictReport, MetricsReport, compute_metrics, conflict_statistics, uncertainty_density
from .toymodel import (
    EpochRecord,
    Inference,
    MultiViewDataset,
    Pipeline,
    TrainResult,
    generate_dataset,
    infer,
    train,
    train_test_split,
)

__all__ = [
    "ExperimentResult",
    "load_dataset",
    "evaluate",
    "expected_files",
    "metrics_json",
    "run_experiment",
]


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    out_dir: Path
    files: tuple[str, ...]
    metrics: dict[FusionStrategy, MetricsReport]
    conflict: ConflictReport
    inference: Inference
    train_result: TrainResult | None
    test: MultiViewDataset


def load_dataset(cfg: ExperimentConfig) -> MultiViewDataset:
    if cfg.source == "csv":
        return ingest_features(cfg.csv_paths, cfg.n_classes)
    return generate_dataset(cfg.synthetic)


def evaluate(pipeline: Pipeline, ds: MultiViewDataset, strategies: Sequence[FusionStrategy]):
    inf = infer(pipeline, ds.views, tuple(strategies))
    metrics = {s: compute_metrics(inf.predictions[s], ds.labels, ds.n_classes) for s in inf.predictions}
    return inf, metrics


def _round9(x: float) -> float:
    return float(fmt(x))


def metrics_json(metrics: dict[FusionStrategy, MetricsReport]) -> str:
    doc = {
        s.value: {
            "acc": _round9(m.accuracy),
            "mf1": _round9(m.macro_f1),
            "per_class_f1": [_round9(v) for v in m.per_class_f1],
            "n_samples": m.n_samples,
        }
        for s, m in metrics.items()
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def expected_files(cfg: ExperimentConfig) -> tuple[str, ...]:
    names = ["config.txt", "metrics.json", "heads.txt", "predictions.csv", "loss_trace.csv", "conflict_stats.csv"]
    for s in cfg.pipeline.fusion:
        names += [f"confusion_{s.value}.csv", f"uncertainty_density_{s.value}.csv"]
    if "png" in cfg.formats:
        names += ["loss_trace.png", "uncertainty_density.png", "conflict_buckets.png"]
    return tuple(sorted(names))


def _write_text(path: Path, text: str) -> None:
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text, encoding="utf-8", newline="\n")
    os.replace(tmp, path)


def _loss_rows(trace: Sequence[EpochRecord], head_names: Sequence[str]):
    header = ["epoch", "lambda_t", *(f"l_acc_{h}" for h in head_names), *(f"l_kl_{h}" for h in head_names), "total"]
    rows = [[r.epoch, r.lambda_t, *r.l_acc, *r.l_kl, r.total] for r in trace]
    return header, rows


def _conflict_rows(rep: ConflictReport):
    header = ["bucket", "count", "percent", "clean", "injected", "mean_conflict"]
    rows = [
        [name, int(rep.counts[i]), rep.percent[i], int(rep.crosstab[i, 0]), int(rep.crosstab[i, 1]), rep.bucket_mean[i]]
        for i, name in enumerate(BUCKET_NAMES)
    ]
    rows.append(["all", rep.n_samples, 100.0, int(rep.crosstab[:, 0].sum()), int(rep.crosstab[:, 1].sum()), rep.mean])
    return header, rows


def _prediction_rows(ds: MultiViewDataset, inf: Inference):
    strategies = list(inf.predictions)
    header = [
        "sample",
        "label",
        "conflict_view",
        *(f"pred_{s.value}" for s in strategies),
        *(f"u_{s.value}" for s in strategies),
        "mean_conflict",
    ]
    mc = inf.mean_conflict
    rows = [
        [i, int(ds.labels[i]), int(ds.conflict_view[i]), *(int(inf.predictions[s][i]) for s in strategies),
         *(inf.joint_uncertainty[s][i] for s in strategies), mc[i]]
        for i in range(len(ds))
    ]
    return header, rows


def run_experiment(cfg: ExperimentConfig, pipeline: Pipeline | None = None) -> ExperimentResult:
    """Train (unless ``pipeline`` is given), evaluate every configured strategy and write the report."""
    out = Path(cfg.out_dir)
    try:
        return _run(cfg, out, pipeline)
    except EvifuseError as exc:
        raise type(exc)(f"experiment '{out}': {exc}") from exc


def _run(cfg: ExperimentConfig, out: Path, pipeline: Pipeline | None) -> ExperimentResult:
    ds = load_dataset(cfg)
    train_ds, test_ds = train_test_split(ds, cfg.test_fraction, cfg.split_seed)
    result = None
    if pipeline is None:
        result = train(cfg.pipeline, train_ds)
        pipeline = result.pipeline
    inf, metrics = evaluate(pipeline, test_ds, cfg.pipeline.fusion)
    conflict = conflict_statistics(inf.mean_conflict, test_ds.conflicting)

    out.mkdir(parents=True, exist_ok=True)
    _write_text(out / "config.txt", cfg.to_text())
    _write_text(out / "metrics.json", metrics_json(metrics))
    save_heads(pipeline, out / "heads.txt")
    head_names = [h.name for h in pipeline.heads]
    write_csv(out / "loss_trace.csv", *_loss_rows(result.trace if result else [], head_names))
    write_csv(out / "conflict_stats.csv", *_conflict_rows(conflict))
    write_csv(out / "predictions.csv", *_prediction_rows(test_ds, inf))
    densities = {}
    for s, m in metrics.items():
        k = m.confusion.shape[0]
        write_csv(
            out / f"confusion_{s.value}.csv",
            ["true", *(f"pred_{j}" for j in range(k))],
            ([i, *m.confusion[i]] for i in range(k)),
        )
        centers, dens = uncertainty_density(inf.joint_uncertainty[s], cfg.density_bins)
        densities[s.value] = (centers, dens)
        write_csv(out / f"uncertainty_density_{s.value}.csv", ["bin_center", "density"], zip(centers, dens))

    if "png" in cfg.formats:
        from .plotting import plot_conflict_buckets, plot_loss_trace, plot_uncertainty_density

        trace = result.trace if result else []
        plot_loss_trace(
            [r.epoch for r in trace],
            np.asarray([r.totals for r in trace]).reshape(len(trace), len(head_names)),
            head_names,
            out / "loss_trace.png",
        )
        plot_uncertainty_density(densities, out / "uncertainty_density.png")
        plot_conflict_buckets(conflict, out / "conflict_buckets.png")

    return ExperimentResult(out, expected_files(cfg), metrics, conflict, inf, result, test_ds)
