"""Conflict degree and conflict-aware aggregation of opinions.

For two opinions ``(b^a, u^a)`` and ``(b^b, u^b)`` the conflict degree is

    C = 1 - sum_k b^a_k b^b_k / (sum_i b^a_i * sum_j b^b_j)

and the aggregated opinion is

    u = C * 2 u^a u^b / (u^a + u^b) + (1 - C) u^a u^b
    b_k = (u^a b^b_k + u^b b^a_k + (1 - C) u^a u^b (b^a_k + b^b_k)) / (u^a + u^b)

Consistent opinions (C = 0) multiply their uncertainties; fully conflicting
ones (C = 1) take the harmonic mean. More than two opinions are folded
strictly left to right, because the pairwise rule is not associative.
"""

from __future__ import annotations

import enum
from typing import Sequence

import numpy as np

from .errors import DimensionError, DomainError
from .opinion import Opinion, evidence_to_opinion, opinions_from_evidence, _as_evidence

__all__ = [
    "FusionStrategy",
    "conflict_degree",
    "conflict_degree_arrays",
    "cmam_fuse_pair",
    "cmam_fuse_pair_arrays",
    "cmam_fuse_many",
    "harmonic_fuse_pair",
    "harmonic_fuse_pair_arrays",
    "harmonic_fuse_many",
    "average_fuse",
    "fuse_evidence_arrays",
    "predicted_class",
    "predicted_class_arrays",
    "order_sensitivity",
]


class FusionStrategy(str, enum.Enum):
    CMAM = "cmam"
    AVERAGE_EVIDENCE = "average"
    HARMONIC_REFERENCE = "harmonic"

    @classmethod
    def parse(cls, name) -> "FusionStrategy":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("-", "_")
        aliases = {
            "cmam": cls.CMAM,
            "average": cls.AVERAGE_EVIDENCE,
            "average_evidence": cls.AVERAGE_EVIDENCE,
            "averageevidence": cls.AVERAGE_EVIDENCE,
            "harmonic": cls.HARMONIC_REFERENCE,
            "harmonic_reference": cls.HARMONIC_REFERENCE,
            "harmonicreference": cls.HARMONIC_REFERENCE,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown fusion strategy {name!r}") from None


def conflict_degree_arrays(b_a: np.ndarray, b_b: np.ndarray) -> np.ndarray:
    """Conflict degree over the last axis; 0 where either side has no belief."""
    b_a = np.asarray(b_a, dtype=np.float64)
    b_b = np.asarray(b_b, dtype=np.float64)
    if b_a.shape[-1] != b_b.shape[-1]:
        raise DimensionError(f"class counts differ: {b_a.shape[-1]} vs {b_b.shape[-1]}")
    num = np.sum(b_a * b_b, axis=-1)
    den = np.sum(b_a, axis=-1) * np.sum(b_b, axis=-1)
    safe = np.where(den > 0, den, 1.0)
    c = np.where(den > 0, 1.0 - num / safe, 0.0)
    return np.clip(c, 0.0, 1.0)


def conflict_degree(a: Opinion, b: Opinion) -> float:
    return float(conflict_degree_arrays(a.belief, b.belief))


def cmam_fuse_pair_arrays(b_a, u_a, b_b, u_b, conflict=None):
    """Vectorised pairwise aggregation; beliefs ``(..., K)``, uncertainties ``(...)``.

    ``conflict`` overrides the computed conflict degree (used by the
    harmonic reference rule and by tests that sweep C directly).
    """
    b_a = np.asarray(b_a, dtype=np.float64)
    b_b = np.asarray(b_b, dtype=np.float64)
    u_a = np.asarray(u_a, dtype=np.float64)
    u_b = np.asarray(u_b, dtype=np.float64)
    c = conflict_degree_arrays(b_a, b_b) if conflict is None else np.asarray(conflict, dtype=np.float64)
    prod = u_a * u_b
    total = u_a + u_b
    u = c * 2.0 * prod / total + (1.0 - c) * prod
    keep = ((1.0 - c) * prod)[..., None]
    b = (u_a[..., None] * b_b + u_b[..., None] * b_a + keep * (b_a + b_b)) / total[..., None]
    return b, u


def _check_pair(a: Opinion, b: Opinion):
    if a.k != b.k:
        raise DimensionError(f"cannot fuse opinions over {a.k} and {b.k} classes")


def _rebuild(b: np.ndarray, u: float) -> Opinion:
    # Rounding can leave the sum a few ulps off 1; both parts stay non-negative.
    b = np.clip(b, 0.0, None)
    return Opinion(b, max(float(u), 0.0))


def cmam_fuse_pair(a: Opinion, b: Opinion) -> Opinion:
    _check_pair(a, b)
    fb, fu = cmam_fuse_pair_arrays(a.belief, a.uncertainty, b.belief, b.uncertainty)
    return _rebuild(fb, fu)


def harmonic_fuse_pair_arrays(b_a, u_a, b_b, u_b):
    """Harmonic-mean uncertainty with beliefs taken at C = 1, whatever the actual conflict."""
    return cmam_fuse_pair_arrays(b_a, u_a, b_b, u_b, conflict=1.0)


def harmonic_fuse_pair(a: Opinion, b: Opinion) -> Opinion:
    _check_pair(a, b)
    fb, fu = harmonic_fuse_pair_arrays(a.belief, a.uncertainty, b.belief, b.uncertainty)
    return _rebuild(fb, fu)


def _fold(opinions: Sequence[Opinion], pair) -> Opinion:
    ops = list(opinions)
    if not ops:
        raise ValueError("cannot fuse an empty sequence of opinions")
    out = ops[0]
    for nxt in ops[1:]:
        out = pair(out, nxt)
    return out


def cmam_fuse_many(opinions: Sequence[Opinion]) -> Opinion:
    """Left fold ``((M1 * M2) * M3) * ...`` in the given order."""
    return _fold(opinions, cmam_fuse_pair)


def harmonic_fuse_many(opinions: Sequence[Opinion]) -> Opinion:
    return _fold(opinions, harmonic_fuse_pair)


def average_fuse(evidences) -> Opinion:
    evs = [_as_evidence(e) for e in evidences]
    if not evs:
        raise ValueError("cannot average an empty sequence of evidence")
    k = evs[0].k
    if any(e.k != k for e in evs):
        raise DimensionError("all evidence vectors must have the same length")
    return evidence_to_opinion(np.mean([e.values for e in evs], axis=0))


def fuse_evidence_arrays(evidences: Sequence[np.ndarray], strategy) -> tuple[np.ndarray, np.ndarray]:
    """Fuse per-view evidence batches ``[(N, K), ...]`` into joint (beliefs, uncertainty)."""
    strategy = FusionStrategy.parse(strategy)
    if not evidences:
        raise ValueError("need at least one view")
    shape = np.shape(evidences[0])
    if any(np.shape(e) != shape for e in evidences):
        raise DimensionError("all views must share the same (N, K) shape")
    if strategy is FusionStrategy.AVERAGE_EVIDENCE:
        return opinions_from_evidence(np.mean(np.stack(evidences), axis=0))
    pair = cmam_fuse_pair_arrays if strategy is FusionStrategy.CMAM else harmonic_fuse_pair_arrays
    b, u = opinions_from_evidence(evidences[0])
    for e in evidences[1:]:
        nb, nu = opinions_from_evidence(e)
        b, u = pair(b, u, nb, nu)
    return b, u


def predicted_class_arrays(b: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Argmax of projected probability; ``np.argmax`` already breaks ties low."""
    b = np.asarray(b, dtype=np.float64)
    p = b + np.asarray(u, dtype=np.float64)[..., None] / b.shape[-1]
    return np.argmax(p, axis=-1)


def predicted_class(o: Opinion) -> int:
    return int(np.argmax(o.projected()))


def order_sensitivity(opinions: Sequence[Opinion]) -> tuple[Opinion, Opinion, float]:
    """Fuse forward and reversed; return both results and their max abs difference.

    A non-zero difference is expected for three or more conflicting opinions.
    """
    ops = list(opinions)
    if not ops:
        raise DomainError("need at least one opinion")
    fwd = cmam_fuse_many(ops)
    rev = cmam_fuse_many(ops[::-1])
    diff = max(float(np.max(np.abs(fwd.belief - rev.belief))), abs(fwd.uncertainty - rev.uncertainty))
    return fwd, rev, diff
