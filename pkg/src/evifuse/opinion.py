"""Evidence, Dirichlet parameters and subjective-logic opinions.

A K-class evidence vector ``e >= 0`` parameterises a Dirichlet with
``alpha = e + 1`` and strength ``S = sum(alpha)``. The matching opinion has
belief ``b_k = e_k / S`` and uncertainty ``u = K / S``, so ``sum(b) + u = 1``.

The scalar types below describe one sample. The ``*_arrays`` helpers do the
same conversions over a batch of shape ``(N, K)`` and are what the training
and evaluation code uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, SimplexError
from .specfn import log_multinomial_beta

__all__ = [
    "SUM_TOL",
    "MIN_UNCERTAINTY",
    "Evidence",
    "DirichletParams",
    "Opinion",
    "evidence_to_dirichlet",
    "dirichlet_to_opinion",
    "opinion_to_dirichlet",
    "evidence_to_opinion",
    "vacuous",
    "dirichlet_log_pdf",
    "opinions_from_evidence",
]

SUM_TOL = 1e-9
MIN_UNCERTAINTY = 1e-12


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Evidence:
    """Non-negative per-class support of length K >= 2."""

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.values)
        if arr.ndim != 1 or arr.size < 2:
            raise DimensionError(f"evidence must be a vector of length >= 2, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("evidence must be finite")
        if np.any(arr < 0):
            raise DomainError("evidence must be non-negative")
        object.__setattr__(self, "values", arr)

    @property
    def k(self) -> int:
        return self.values.size

    def __eq__(self, other):
        return isinstance(other, Evidence) and np.array_equal(self.values, other.values)


@dataclass(frozen=True, eq=False)
class DirichletParams:
    alpha: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.alpha)
        if arr.ndim != 1 or arr.size < 2:
            raise DimensionError(f"alpha must be a vector of length >= 2, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 1):
            raise DomainError("every alpha_k must be finite and >= 1")
        object.__setattr__(self, "alpha", arr)

    @property
    def strength(self) -> float:
        return float(self.alpha.sum())

    @property
    def k(self) -> int:
        return self.alpha.size

    def __eq__(self, other):
        return isinstance(other, DirichletParams) and np.array_equal(self.alpha, other.alpha)


@dataclass(frozen=True, eq=False)
class Opinion:
    """Belief masses over K classes plus an uncertainty mass, summing to one.

    An uncertainty below ``MIN_UNCERTAINTY`` is raised to it and the beliefs
    rescaled so the total stays one; finite evidence never triggers this.
    """

    belief: np.ndarray
    uncertainty: float

    def __post_init__(self):
        b = np.array(self.belief, dtype=np.float64)
        u = float(self.uncertainty)
        if b.ndim != 1 or b.size < 2:
            raise DimensionError(f"belief must be a vector of length >= 2, got shape {b.shape}")
        if not (np.all(np.isfinite(b)) and np.isfinite(u)):
            raise DomainError("opinion components must be finite")
        if np.any(b < 0) or u < 0:
            raise DomainError("opinion components must be non-negative")
        total = b.sum() + u
        if abs(total - 1.0) > SUM_TOL:
            raise SimplexError(f"belief + uncertainty must sum to 1, got {total!r}")
        if u < MIN_UNCERTAINTY:
            b = b * (1.0 - MIN_UNCERTAINTY) / b.sum()
            u = MIN_UNCERTAINTY
        object.__setattr__(self, "belief", _frozen(b))
        object.__setattr__(self, "uncertainty", u)

    @property
    def k(self) -> int:
        return self.belief.size

    @property
    def is_vacuous(self) -> bool:
        return not np.any(self.belief > 0)

    def projected(self) -> np.ndarray:
        """Projected probabilities b_k + u/K (the Dirichlet mean)."""
        return self.belief + self.uncertainty / self.k

    def __eq__(self, other):
        return (
            isinstance(other, Opinion)
            and np.array_equal(self.belief, other.belief)
            and self.uncertainty == other.uncertainty
        )

    def __repr__(self):
        return f"Opinion(belief={self.belief.tolist()}, uncertainty={self.uncertainty!r})"


def _as_evidence(e) -> Evidence:
    return e if isinstance(e, Evidence) else Evidence(e)


def evidence_to_dirichlet(e) -> DirichletParams:
    return DirichletParams(_as_evidence(e).values + 1.0)


def dirichlet_to_opinion(d: DirichletParams) -> Opinion:
    s = d.strength
    return Opinion((d.alpha - 1.0) / s, d.k / s)


def evidence_to_opinion(e) -> Opinion:
    return dirichlet_to_opinion(evidence_to_dirichlet(e))


def opinion_to_dirichlet(o: Opinion, k: int | None = None) -> DirichletParams:
    """Invert :func:`dirichlet_to_opinion`: ``S = K/u`` and ``alpha = b S + 1``."""
    k = o.k if k is None else k
    if k != o.k:
        raise DimensionError(f"opinion has {o.k} classes, K={k} requested")
    if o.uncertainty <= 0:
        raise DomainError("uncertainty 0 corresponds to infinite Dirichlet strength")
    s = k / o.uncertainty
    return DirichletParams(o.belief * s + 1.0)


def vacuous(k: int) -> Opinion:
    return Opinion(np.zeros(k), 1.0)


def dirichlet_log_pdf(d: DirichletParams, p) -> float:
    """Log density of Dir(alpha) at a point of the unit simplex.

    Components with ``p_k = 0`` give ``-inf`` when ``alpha_k > 1`` and
    contribute nothing when ``alpha_k == 1``.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.shape != d.alpha.shape:
        raise DimensionError(f"p has shape {p.shape}, alpha has shape {d.alpha.shape}")
    if np.any(p < 0) or np.any(p > 1) or abs(p.sum() - 1.0) > SUM_TOL:
        raise SimplexError(f"p is not on the unit simplex (sum={p.sum()!r})")
    expo = d.alpha - 1.0
    active = expo > 0
    if np.any(p[active] == 0):
        return float("-inf")
    return float(-log_multinomial_beta(d.alpha) + np.sum(expo[active] * np.log(p[active])))


def opinions_from_evidence(evidence: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batch conversion: evidence ``(N, K)`` -> beliefs ``(N, K)``, uncertainty ``(N,)``."""
    e = np.asarray(evidence, dtype=np.float64)
    if e.ndim != 2 or e.shape[1] < 2:
        raise DimensionError(f"expected evidence of shape (N, K>=2), got {e.shape}")
    if not np.all(np.isfinite(e)) or np.any(e < 0):
        raise DomainError("evidence must be finite and non-negative")
    s = e.sum(axis=1) + e.shape[1]
    return e / s[:, None], e.shape[1] / s
