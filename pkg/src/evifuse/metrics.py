"""Classification metrics, conflict-degree buckets and uncertainty histograms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DomainError

__all__ = [
    "MetricsReport",
    "compute_metrics",
    "CONFLICT_EDGES",
    "BUCKET_NAMES",
    "ConflictReport",
    "conflict_statistics",
    "uncertainty_density",
]


@dataclass(frozen=True, eq=False)
class MetricsReport:
    accuracy: float
    macro_f1: float
    per_class_f1: np.ndarray
    confusion: np.ndarray  # rows: true class, columns: predicted class
    absent: np.ndarray  # classes missing from both labels and predictions

    @property
    def n_samples(self) -> int:
        return int(self.confusion.sum())

    @property
    def support(self) -> np.ndarray:
        return self.confusion.sum(axis=1)


def compute_metrics(predictions, labels, n_classes: int | None = None) -> MetricsReport:
    """Accuracy, one-vs-rest F1 per class and their unweighted mean.

    A class with no true and no predicted samples gets F1 = 0 and is
    flagged in ``absent``; it still counts towards the macro average.
    """
    pred = np.asarray(predictions, dtype=np.int64).ravel()
    true = np.asarray(labels, dtype=np.int64).ravel()
    if pred.size == 0 or true.size == 0:
        raise DataError("metrics need at least one sample")
    if pred.shape != true.shape:
        raise DataError(f"{pred.size} predictions but {true.size} labels")
    k = int(max(pred.max(), true.max()) + 1) if n_classes is None else int(n_classes)
    if min(pred.min(), true.min()) < 0 or max(pred.max(), true.max()) >= k:
        raise DataError(f"class indices must lie in [0, {k})")
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (true, pred), 1)
    tp = np.diag(confusion).astype(np.float64)
    n_true = confusion.sum(axis=1)
    n_pred = confusion.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(n_pred > 0, tp / n_pred, 0.0)
        recall = np.where(n_true > 0, tp / n_true, 0.0)
        f1 = np.where(precision + recall > 0, 2 * precision * recall / (precision + recall), 0.0)
    return MetricsReport(
        accuracy=float(tp.sum() / pred.size),
        macro_f1=float(f1.mean()),
        per_class_f1=f1,
        confusion=confusion,
        absent=(n_true == 0) & (n_pred == 0),
    )


CONFLICT_EDGES = (0.0, 0.3, 0.6, 1.0)
BUCKET_NAMES = ("low", "middle", "high")


@dataclass(frozen=True, eq=False)
class ConflictReport:
    """Bucketed conflict degrees.

    ``crosstab[b] = (clean, injected)`` counts for bucket ``b``.
    """

    counts: np.ndarray
    percent: np.ndarray
    bucket_mean: np.ndarray
    mean: float
    crosstab: np.ndarray

    @property
    def n_samples(self) -> int:
        return int(self.counts.sum())

    def injected_share(self) -> np.ndarray:
        """Fraction of each bucket that carries an injected conflict (nan for empty buckets)."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.crosstab[:, 1] / self.counts


def conflict_statistics(conflicts, flags=None) -> ConflictReport:
    """Buckets are [0, 0.3), [0.3, 0.6) and [0.6, 1]."""
    c = np.asarray(conflicts, dtype=np.float64).ravel()
    if c.size == 0:
        raise DataError("no conflict values given")
    if np.any(~np.isfinite(c)) or c.min() < -1e-12 or c.max() > 1 + 1e-12:
        raise DomainError("conflict degrees must lie in [0, 1]")
    flag = np.zeros(c.size, dtype=bool) if flags is None else np.asarray(flags, dtype=bool).ravel()
    if flag.shape != c.shape:
        raise DataError(f"{c.size} conflict values but {flag.size} flags")
    bucket = (c >= CONFLICT_EDGES[1]).astype(np.int64) + (c >= CONFLICT_EDGES[2])
    counts = np.bincount(bucket, minlength=3)
    crosstab = np.stack([np.bincount(bucket[~flag], minlength=3), np.bincount(bucket[flag], minlength=3)], axis=1)
    sums = np.bincount(bucket, weights=c, minlength=3)
    with np.errstate(invalid="ignore", divide="ignore"):
        bucket_mean = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return ConflictReport(
        counts=counts,
        percent=100.0 * counts / c.size,
        bucket_mean=bucket_mean,
        mean=float(c.mean()),
        crosstab=crosstab,
    )


def uncertainty_density(uncertainties, n_bins: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Equal-width histogram on [0, 1] normalized to unit area; returns (bin_centers, density)."""
    u = np.asarray(uncertainties, dtype=np.float64).ravel()
    if n_bins < 1:
        raise DomainError("n_bins must be >= 1")
    if u.size == 0:
        raise DataError("no uncertainty values given")
    if np.any(~np.isfinite(u)) or u.min() < 0.0 or u.max() > 1.0:
        raise DomainError("uncertainties must lie in [0, 1]")
    counts, edges = np.histogram(u, bins=n_bins, range=(0.0, 1.0))
    # bin width is exactly 1 / n_bins; dividing by the float edge spacing would not be
    return 0.5 * (edges[:-1] + edges[1:]), counts * n_bins / u.size
