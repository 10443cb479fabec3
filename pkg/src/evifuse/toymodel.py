"""Synthetic two-view data, linear evidence heads and a deterministic trainer.

View A carries all five fine classes; view B only separates the coarse
groups W / NREM / REM (N1, N2 and N3 share one mean). The ``hybrid`` head
layout mirrors the four-network design:

    f1  view A       -> 5 fine classes
    f2  views A + B  -> 5 fine classes
    f3  view B       -> 3 coarse classes
    f4  views A + B  -> 3 coarse classes

Coarse heads are trained on collapsed labels and their evidence is mapped
onto the fine classes only at inference time. The ``flat`` layout puts one
fine head on each view and works for any number of views and classes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import DataError, DimensionError, NumericalError
from .fusion import FusionStrategy, conflict_degree_arrays, fuse_evidence_arrays, predicted_class_arrays
from .loss import annealing, loss_and_grad_arrays
from .mapping import FINE_TO_COARSE, MappingMatrix, MappingStrategy, build_mapping, map_evidence
from .opinion import opinions_from_evidence

__all__ = [
    "N_FINE",
    "MEAN_SCALE",
    "SyntheticConfig",
    "MultiViewDataset",
    "generate_dataset",
    "train_test_split",
    "EvidenceHead",
    "HeadSpec",
    "head_specs",
    "softplus",
    "forward",
    "forward_batch",
    "PipelineConfig",
    "Pipeline",
    "EpochRecord",
    "TrainResult",
    "init_pipeline",
    "train",
    "Inference",
    "infer",
    "head_evidence",
    "with_fusion",
]

N_FINE = 5
MEAN_SCALE = 2.0


def _per_view(value, n_views=2) -> tuple[float, ...]:
    if np.ndim(value) == 0:
        return (float(value),) * n_views
    vals = tuple(float(v) for v in value)
    if len(vals) != n_views:
        raise ValueError(f"expected {n_views} per-view values, got {len(vals)}")
    return vals


@dataclass(frozen=True)
class SyntheticConfig:
    """Generator settings; ``noise_sigma`` and ``conflict_rate`` are per view.

    For view ``v`` exactly ``floor(conflict_rate[v] * N)`` samples have that
    view resampled from a different class. The selections are disjoint, so
    a flagged sample has one corrupted view and one faithful one.
    """

    n_features: int = 8
    samples_per_class: int = 200
    noise_sigma: tuple[float, float] = (1.0, 1.0)
    conflict_rate: tuple[float, float] = (0.3, 0.3)
    seed: int = 0
    n_classes: int = N_FINE

    def __post_init__(self):
        object.__setattr__(self, "noise_sigma", _per_view(self.noise_sigma))
        object.__setattr__(self, "conflict_rate", _per_view(self.conflict_rate))
        if self.n_classes != N_FINE:
            raise ValueError("the synthetic generator has exactly 5 fine classes")
        if self.n_features < N_FINE:
            raise ValueError(f"n_features must be >= {N_FINE}")
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be >= 1")
        if any(s < 0 or not math.isfinite(s) for s in self.noise_sigma):
            raise ValueError("noise_sigma must be finite and >= 0")
        if any(not 0.0 <= r <= 1.0 for r in self.conflict_rate):
            raise ValueError("conflict_rate must lie in [0, 1]")
        if sum(self.conflict_rate) > 1.0 + 1e-12:
            raise ValueError("per-view conflict rates must sum to at most 1")


@dataclass(frozen=True, eq=False)
class MultiViewDataset:
    """Row-aligned views with integer labels.

    ``conflict_view[i]`` is the index of the corrupted view for injected
    samples and -1 for clean ones.
    """

    views: tuple[np.ndarray, ...]
    labels: np.ndarray
    n_classes: int
    conflict_view: np.ndarray | None = None
    feature_names: tuple[tuple[str, ...], ...] | None = None

    def __post_init__(self):
        views = tuple(np.asarray(v, dtype=np.float64) for v in self.views)
        labels = np.asarray(self.labels, dtype=np.int64)
        if not views:
            raise DataError("dataset needs at least one view")
        n = labels.shape[0]
        for i, v in enumerate(views):
            if v.ndim != 2 or v.shape[0] != n:
                raise DataError(f"view {i} has shape {v.shape}, expected ({n}, d)")
        if n and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise DataError(f"labels must lie in [0, {self.n_classes})")
        cv = np.full(n, -1, dtype=np.int64) if self.conflict_view is None else np.asarray(self.conflict_view, dtype=np.int64)
        if cv.shape != (n,):
            raise DataError("conflict_view must align with labels")
        names = self.feature_names
        if names is None:
            names = tuple(tuple(f"f{j}" for j in range(v.shape[1])) for v in views)
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "conflict_view", cv)
        object.__setattr__(self, "feature_names", tuple(tuple(n_) for n_ in names))

    def __len__(self):
        return int(self.labels.shape[0])

    @property
    def conflicting(self) -> np.ndarray:
        return self.conflict_view >= 0

    def subset(self, idx) -> "MultiViewDataset":
        idx = np.asarray(idx)
        return MultiViewDataset(
            tuple(v[idx] for v in self.views), self.labels[idx], self.n_classes, self.conflict_view[idx], self.feature_names
        )

    def identical_to(self, other: "MultiViewDataset") -> bool:
        return (
            self.n_classes == other.n_classes
            and len(self.views) == len(other.views)
            and all(np.array_equal(a, b) for a, b in zip(self.views, other.views))
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.conflict_view, other.conflict_view)
        )


def _class_means(n_features: int) -> tuple[np.ndarray, np.ndarray]:
    eye = np.eye(N_FINE, n_features) * MEAN_SCALE
    means_a = eye
    means_b = np.eye(3, n_features)[FINE_TO_COARSE] * MEAN_SCALE
    return means_a, means_b


def generate_dataset(cfg: SyntheticConfig) -> MultiViewDataset:
    """Gaussian class clusters on scaled simplex vertices, with injected view conflicts."""
    rng = np.random.default_rng(cfg.seed)
    means = _class_means(cfg.n_features)
    labels = np.repeat(np.arange(N_FINE), cfg.samples_per_class)
    n = labels.size
    # Source class per view; conflicting samples draw one view from a wrong class.
    source = np.stack([labels, labels])
    conflict_view = np.full(n, -1, dtype=np.int64)
    counts = [int(math.floor(r * n + 1e-9)) for r in cfg.conflict_rate]
    if sum(counts):
        picked = rng.choice(n, size=sum(counts), replace=False)
        shift = rng.integers(1, N_FINE, size=picked.size)
        which = np.repeat([0, 1], counts)
        conflict_view[picked] = which
        source[which, picked] = (labels[picked] + shift) % N_FINE
    views = []
    for v in range(2):
        noise = rng.standard_normal((n, cfg.n_features)) * cfg.noise_sigma[v]
        views.append(means[v][source[v]] + noise)
    return MultiViewDataset(tuple(views), labels, N_FINE, conflict_view)


def train_test_split(ds: MultiViewDataset, test_fraction: float, seed: int):
    """Seeded random split; the test part holds ``round(test_fraction * N)`` samples."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ds))
    n_test = int(round(test_fraction * len(ds)))
    return ds.subset(np.sort(order[n_test:])), ds.subset(np.sort(order[:n_test]))


# ---------------------------------------------------------------- heads


@dataclass(frozen=True)
class HeadSpec:
    name: str
    inputs: tuple[int, ...]
    coarse: bool


def head_specs(layout: str, n_views: int) -> tuple[HeadSpec, ...]:
    if layout == "hybrid":
        if n_views != 2:
            raise DimensionError("the hybrid layout needs exactly two views")
        return (
            HeadSpec("f1", (0,), False),
            HeadSpec("f2", (0, 1), False),
            HeadSpec("f3", (1,), True),
            HeadSpec("f4", (0, 1), True),
        )
    if layout == "flat":
        return tuple(HeadSpec(f"f{v + 1}", (v,), False) for v in range(n_views))
    raise ValueError(f"unknown layout {layout!r}")


@dataclass(eq=False)
class EvidenceHead:
    """Linear map followed by softplus, so evidence is never negative."""

    weights: np.ndarray
    bias: np.ndarray
    name: str = "head"
    inputs: tuple[int, ...] = (0,)
    coarse: bool = False

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise DimensionError(f"weights {self.weights.shape} and bias {self.bias.shape} do not match")
        self.inputs = tuple(int(i) for i in self.inputs)

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    @property
    def k(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "EvidenceHead":
        return EvidenceHead(self.weights.copy(), self.bias.copy(), self.name, self.inputs, self.coarse)

    def same_as(self, other: "EvidenceHead") -> bool:
        return (
            np.array_equal(self.weights, other.weights)
            and np.array_equal(self.bias, other.bias)
            and (self.name, self.inputs, self.coarse) == (other.name, other.inputs, other.coarse)
        )


def softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def forward_batch(head: EvidenceHead, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != head.n_features:
        raise DimensionError(f"head {head.name} expects {head.n_features} features, got shape {x.shape}")
    return softplus(x @ head.weights + head.bias)


def forward(head: EvidenceHead, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError("forward takes one feature vector; use forward_batch for batches")
    return forward_batch(head, x[None, :])[0]


def _head_input(head_inputs: Sequence[int], views: Sequence[np.ndarray]) -> np.ndarray:
    if max(head_inputs) >= len(views):
        raise DimensionError(f"head needs view {max(head_inputs)}, dataset has {len(views)} views")
    parts = [views[i] for i in head_inputs]
    return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=1)


# ---------------------------------------------------------------- pipeline


@dataclass(frozen=True)
class PipelineConfig:
    layout: str = "hybrid"
    learning_rate: float = 0.05
    momentum: float = 0.9
    epochs: int = 40
    batch_size: int = 32
    init_scale: float = 0.01
    fusion: tuple[FusionStrategy, ...] = (FusionStrategy.CMAM, FusionStrategy.AVERAGE_EVIDENCE)
    mapping: MappingStrategy = MappingStrategy.UNIFORM
    seed: int = 0

    def __post_init__(self):
        fusion = self.fusion if isinstance(self.fusion, (tuple, list)) else (self.fusion,)
        object.__setattr__(self, "fusion", tuple(FusionStrategy.parse(f) for f in fusion))
        object.__setattr__(self, "mapping", MappingStrategy(self.mapping))
        if self.layout not in ("hybrid", "flat"):
            raise ValueError(f"layout must be 'hybrid' or 'flat', got {self.layout!r}")
        if self.learning_rate < 0 or not math.isfinite(self.learning_rate):
            raise ValueError("learning_rate must be finite and >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not self.fusion:
            raise ValueError("at least one fusion strategy is required")


@dataclass(eq=False)
class Pipeline:
    heads: list[EvidenceHead]
    mapping: MappingMatrix
    n_classes: int
    layout: str = "hybrid"

    def copy(self) -> "Pipeline":
        return Pipeline([h.copy() for h in self.heads], self.mapping, self.n_classes, self.layout)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    lambda_t: float
    l_acc: tuple[float, ...]
    l_kl: tuple[float, ...]

    @property
    def totals(self) -> tuple[float, ...]:
        return tuple(a + self.lambda_t * k for a, k in zip(self.l_acc, self.l_kl))

    @property
    def total(self) -> float:
        return float(sum(self.totals))


@dataclass
class TrainResult:
    pipeline: Pipeline
    trace: list[EpochRecord] = field(default_factory=list)

    @property
    def loss_non_increasing(self) -> bool:
        totals = [r.total for r in self.trace]
        return all(b <= a + 1e-12 for a, b in zip(totals, totals[1:]))


def init_pipeline(cfg: PipelineConfig, data: MultiViewDataset) -> Pipeline:
    specs = head_specs(cfg.layout, len(data.views))
    if cfg.layout == "hybrid" and data.n_classes != N_FINE:
        raise DataError(f"the hybrid layout needs {N_FINE} fine classes, dataset has {data.n_classes}")
    rng = np.random.default_rng(cfg.seed)
    heads = []
    for spec in specs:
        d = sum(data.views[i].shape[1] for i in spec.inputs)
        k = 3 if spec.coarse else data.n_classes
        w = rng.standard_normal((d, k)) * cfg.init_scale
        heads.append(EvidenceHead(w, np.zeros(k), spec.name, spec.inputs, spec.coarse))
    counts = np.bincount(data.labels, minlength=data.n_classes)
    mapping = build_mapping(cfg.mapping, counts) if cfg.layout == "hybrid" else build_mapping(MappingStrategy.UNIFORM)
    return Pipeline(heads, mapping, data.n_classes, cfg.layout)


def _head_labels(head: EvidenceHead, labels: np.ndarray) -> np.ndarray:
    return FINE_TO_COARSE[labels] if head.coarse else labels


def train(cfg: PipelineConfig, data: MultiViewDataset, pipeline: Pipeline | None = None) -> TrainResult:
    """Mini-batch gradient descent with momentum on ``L_acc + lambda_t L_KL`` per head.

    Heads share no parameters, so each is updated from its own loss. The
    batch order is reshuffled every epoch from ``cfg.seed``. Per-epoch
    losses are sample-weighted means over the batches seen in that epoch.
    """
    if len(data) == 0:
        raise DataError("cannot train on an empty dataset")
    pipe = init_pipeline(cfg, data) if pipeline is None else pipeline.copy()
    rng = np.random.default_rng([cfg.seed, 1])
    inputs = [_head_input(h.inputs, data.views) for h in pipe.heads]
    targets = [_head_labels(h, data.labels) for h in pipe.heads]
    velocity = [(np.zeros_like(h.weights), np.zeros_like(h.bias)) for h in pipe.heads]
    n = len(data)
    trace: list[EpochRecord] = []
    for epoch in range(cfg.epochs):
        lam = annealing(epoch)
        order = rng.permutation(n)
        acc_sum = np.zeros(len(pipe.heads))
        kl_sum = np.zeros(len(pipe.heads))
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            m = idx.size
            for h, head in enumerate(pipe.heads):
                x = inputs[h][idx]
                z = x @ head.weights + head.bias
                ev = softplus(z)
                if not np.all(np.isfinite(ev)):
                    raise NumericalError(f"non-finite evidence in head {head.name} at epoch {epoch}")
                la, lk, g = loss_and_grad_arrays(ev, targets[h][idx], lam)
                acc_sum[h] += la.sum()
                kl_sum[h] += lk.sum()
                dz = g * _sigmoid(z) / m
                gw = x.T @ dz
                gb = dz.sum(axis=0)
                if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(la)) and np.all(np.isfinite(lk))):
                    raise NumericalError(f"non-finite loss or gradient in head {head.name} at epoch {epoch}")
                vw, vb = velocity[h]
                vw *= cfg.momentum
                vw -= cfg.learning_rate * gw
                vb *= cfg.momentum
                vb -= cfg.learning_rate * gb
                head.weights += vw
                head.bias += vb
        trace.append(EpochRecord(epoch, lam, tuple((acc_sum / n).tolist()), tuple((kl_sum / n).tolist())))
        if not math.isfinite(trace[-1].total):
            raise NumericalError(f"non-finite total loss at epoch {epoch}")
    return TrainResult(pipe, trace)


# ---------------------------------------------------------------- inference


@dataclass(frozen=True, eq=False)
class Inference:
    """Per-head opinions (over the fine classes), joint opinions and conflict degrees.

    ``view_belief`` has shape ``(V, N, K)`` and ``view_uncertainty`` ``(V, N)``.
    ``pair_conflict`` holds one column per head pair in ``pairs`` order.
    """

    view_evidence: np.ndarray
    view_belief: np.ndarray
    view_uncertainty: np.ndarray
    joint_belief: dict[FusionStrategy, np.ndarray]
    joint_uncertainty: dict[FusionStrategy, np.ndarray]
    predictions: dict[FusionStrategy, np.ndarray]
    pairs: tuple[tuple[int, int], ...]
    pair_conflict: np.ndarray

    @property
    def mean_conflict(self) -> np.ndarray:
        return self.pair_conflict.mean(axis=1)

    def view_predictions(self) -> np.ndarray:
        return predicted_class_arrays(self.view_belief, self.view_uncertainty)


def head_evidence(pipeline: Pipeline, views: Sequence[np.ndarray]) -> np.ndarray:
    """Fine-granularity evidence of every head, shape ``(V, N, K)``."""
    out = []
    for head in pipeline.heads:
        ev = forward_batch(head, _head_input(head.inputs, views))
        out.append(map_evidence(ev, pipeline.mapping) if head.coarse else ev)
    return np.stack(out)


def infer(pipeline: Pipeline, views: Sequence[np.ndarray], strategies=(FusionStrategy.CMAM,)) -> Inference:
    """Evaluate all heads, fuse in head order (f1, f2, f3, f4) and measure pairwise conflict."""
    if isinstance(strategies, (str, FusionStrategy)):
        strategies = (strategies,)
    strategies = tuple(FusionStrategy.parse(s) for s in strategies)
    evidence = head_evidence(pipeline, views)
    beliefs, uncs = zip(*(opinions_from_evidence(e) for e in evidence))
    view_b = np.stack(beliefs)
    view_u = np.stack(uncs)
    joint_b, joint_u, preds = {}, {}, {}
    for s in strategies:
        b, u = fuse_evidence_arrays(list(evidence), s)
        joint_b[s], joint_u[s] = b, u
        preds[s] = predicted_class_arrays(b, u)
    pairs = tuple(combinations(range(len(pipeline.heads)), 2))
    n = evidence.shape[1]
    if pairs:
        conflict = np.stack([conflict_degree_arrays(view_b[i], view_b[j]) for i, j in pairs], axis=1)
    else:
        conflict = np.zeros((n, 1))
    return Inference(evidence, view_b, view_u, joint_b, joint_u, preds, pairs, conflict)


def with_fusion(cfg: PipelineConfig, *strategies) -> PipelineConfig:
    return replace(cfg, fusion=tuple(strategies))
