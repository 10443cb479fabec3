"""Coarse (W, NREM, REM) to fine (W, N1, N2, N3, REM) evidence redistribution.

Evidence is mapped by a row vector times a 3x5 row-stochastic matrix, so the
total evidence is unchanged, W and REM pass through, and the NREM mass is
split across N1, N2 and N3.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError

__all__ = [
    "FINE_CLASSES",
    "COARSE_CLASSES",
    "FINE_TO_COARSE",
    "MappingStrategy",
    "MappingMatrix",
    "uniform_mapping",
    "data_driven_mapping",
    "build_mapping",
    "map_evidence",
    "coarsen_labels",
]

FINE_CLASSES = ("W", "N1", "N2", "N3", "REM")
COARSE_CLASSES = ("W", "NREM", "REM")
FINE_TO_COARSE = np.array([0, 1, 1, 1, 2])
_NREM = slice(1, 4)


class MappingStrategy(str, enum.Enum):
    UNIFORM = "uniform"
    DATA_DRIVEN = "data_driven"


@dataclass(frozen=True, eq=False)
class MappingMatrix:
    entries: np.ndarray
    strategy: MappingStrategy = MappingStrategy.UNIFORM

    def __post_init__(self):
        u = np.array(self.entries, dtype=np.float64)
        if u.shape != (3, 5):
            raise DimensionError(f"mapping matrix must be 3x5, got {u.shape}")
        if np.any(u < 0) or not np.all(np.isfinite(u)):
            raise DomainError("mapping entries must be finite and non-negative")
        if np.max(np.abs(u.sum(axis=1) - 1.0)) > 1e-12:
            raise DomainError(f"mapping rows must sum to 1, got {u.sum(axis=1)}")
        if np.any(u[0, 1:] != 0) or np.any(u[2, :4] != 0) or u[1, 0] != 0 or u[1, 4] != 0:
            raise DomainError("W and REM must map to themselves; NREM only onto N1..N3")
        u.setflags(write=False)
        object.__setattr__(self, "entries", u)
        object.__setattr__(self, "strategy", MappingStrategy(self.strategy))


def _with_nrem_row(split) -> np.ndarray:
    u = np.zeros((3, 5))
    u[0, 0] = 1.0
    u[2, 4] = 1.0
    u[1, _NREM] = split
    return u


def uniform_mapping() -> MappingMatrix:
    return MappingMatrix(_with_nrem_row(1.0 / 3.0), MappingStrategy.UNIFORM)


def data_driven_mapping(class_counts) -> MappingMatrix:
    """Split NREM evidence in proportion to the N1:N2:N3 training frequencies.

    ``class_counts`` has one entry per fine class in (W, N1, N2, N3, REM)
    order. All-zero NREM counts fall back to the uniform split with a warning.
    """
    counts = np.asarray(class_counts, dtype=np.float64)
    if counts.shape != (5,):
        raise DimensionError(f"expected 5 fine-class counts, got shape {counts.shape}")
    if np.any(counts < 0):
        raise DomainError("class counts must be non-negative")
    nrem = counts[_NREM]
    if nrem.sum() == 0:
        warnings.warn("no N1/N2/N3 samples; falling back to uniform mapping", RuntimeWarning, stacklevel=2)
        return uniform_mapping()
    split = nrem / nrem.sum()
    u = _with_nrem_row(split)
    # Absorb rounding so the row sums to 1 within the matrix tolerance.
    u[1, 2] = 1.0 - u[1, 1] - u[1, 3]
    return MappingMatrix(u, MappingStrategy.DATA_DRIVEN)


def build_mapping(strategy, class_counts=None) -> MappingMatrix:
    strategy = MappingStrategy(strategy)
    if strategy is MappingStrategy.UNIFORM:
        return uniform_mapping()
    if class_counts is None:
        raise ValueError("data_driven mapping needs training class counts")
    return data_driven_mapping(class_counts)


def map_evidence(e3, mapping: MappingMatrix | None = None) -> np.ndarray:
    """Map coarse evidence (length 3, or a batch ``(N, 3)``) onto the 5 fine classes."""
    mapping = uniform_mapping() if mapping is None else mapping
    e = np.asarray(getattr(e3, "values", e3), dtype=np.float64)
    if e.shape[-1] != 3 or e.ndim not in (1, 2):
        raise DimensionError(f"coarse evidence must have 3 components, got shape {e.shape}")
    if np.any(e < 0) or not np.all(np.isfinite(e)):
        raise DomainError("evidence must be finite and non-negative")
    out = e @ mapping.entries
    # W and REM pass through bit-exactly.
    out[..., 0] = e[..., 0]
    out[..., 4] = e[..., 2]
    return out


def coarsen_labels(labels) -> np.ndarray:
    """Fine labels 0..4 -> coarse labels 0..2 (N1, N2, N3 collapse to NREM)."""
    lab = np.asarray(labels)
    if np.any(lab < 0) or np.any(lab > 4):
        raise DomainError("fine labels must lie in [0, 5)")
    return FINE_TO_COARSE[lab]
