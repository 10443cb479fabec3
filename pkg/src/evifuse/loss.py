"""Evidential classification losses and their analytic gradients.

Per sample, with ``alpha = e + 1``, ``S = sum(alpha)`` and true class ``y``:

    L_acc = psi(S) - psi(alpha_y)

The KL regulariser only sees misleading evidence ``e~ = (1 - onehot(y)) * e``,
``alpha~ = e~ + 1``, ``S~ = sum(alpha~)``:

    L_KL = log G(S~) - log G(K) - sum_k log G(alpha~_k)
           + sum_k (alpha~_k - 1) (psi(alpha~_k) - psi(S~))

Gradients with respect to the evidence:

    dL_acc/de_k = psi'(S) - [k == y] psi'(alpha_y)
    dL_KL/de_k  = [k != y] ((alpha~_k - 1) psi'(alpha~_k) - (S~ - K) psi'(S~))

The per-view objective is ``L_acc + lambda_t L_KL`` with
``lambda_t = min(1, t / 10)`` for zero-based epoch ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError, DomainError
from .mapping import FINE_TO_COARSE
from .opinion import Evidence
from .specfn import digamma, log_gamma, trigamma

__all__ = [
    "LabelEncoding",
    "LossReport",
    "encode_label",
    "annealing",
    "l_acc",
    "l_kl",
    "joint_loss",
    "loss_gradient",
    "l_acc_arrays",
    "l_kl_arrays",
    "loss_and_grad_arrays",
]


@dataclass(frozen=True, eq=False)
class LabelEncoding:
    one_hot: np.ndarray

    def __post_init__(self):
        y = np.array(self.one_hot, dtype=np.float64)
        if y.ndim != 1 or y.size < 2 or not np.all((y == 0) | (y == 1)) or y.sum() != 1:
            raise DomainError(f"not a one-hot vector: {self.one_hot!r}")
        y.setflags(write=False)
        object.__setattr__(self, "one_hot", y)

    @classmethod
    def of(cls, index: int, k: int) -> "LabelEncoding":
        if not 0 <= index < k:
            raise DomainError(f"class index {index} outside [0, {k})")
        y = np.zeros(k)
        y[index] = 1.0
        return cls(y)

    @property
    def index(self) -> int:
        return int(np.argmax(self.one_hot))

    @property
    def k(self) -> int:
        return self.one_hot.size


@dataclass(frozen=True)
class LossReport:
    l_acc: float
    l_kl: float
    lambda_t: float
    total: float


def encode_label(fine_label: int, coarse: bool = False) -> LabelEncoding:
    """One-hot label for a fine-granularity head, or for a coarse head after collapsing N1-N3."""
    if coarse:
        return LabelEncoding.of(int(FINE_TO_COARSE[fine_label]), 3)
    return LabelEncoding.of(int(fine_label), 5)


def annealing(t) -> float:
    if t < 0:
        raise DomainError("epoch index must be >= 0")
    return min(1.0, t / 10.0)


def _check_batch(evidence, labels):
    e = np.asarray(evidence, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if e.ndim != 2 or y.shape != (e.shape[0],):
        raise DimensionError(f"evidence {e.shape} and labels {y.shape} do not align")
    if np.any(y < 0) or np.any(y >= e.shape[1]):
        raise DimensionError(f"labels must lie in [0, {e.shape[1]})")
    return e, y


def l_acc_arrays(evidence, labels) -> np.ndarray:
    """Per-sample L_acc for evidence ``(N, K)`` and integer labels ``(N,)``."""
    e, y = _check_batch(evidence, labels)
    s = e.sum(axis=1) + e.shape[1]
    true_alpha = e[np.arange(e.shape[0]), y] + 1.0
    return digamma(s) - digamma(true_alpha)


def _misleading(e, y):
    mask = np.ones_like(e)
    mask[np.arange(e.shape[0]), y] = 0.0
    return e * mask, mask


def l_kl_arrays(evidence, labels) -> np.ndarray:
    """Per-sample KL of Dir(misleading evidence + 1) from the uniform Dirichlet."""
    e, y = _check_batch(evidence, labels)
    k = e.shape[1]
    et, _ = _misleading(e, y)
    at = et + 1.0
    st = at.sum(axis=1)
    out = (
        log_gamma(st)
        - math.lgamma(k)
        - log_gamma(at).sum(axis=1)
        + np.sum(et * (digamma(at) - digamma(st)[:, None]), axis=1)
    )
    # Exact zero when there is nothing misleading; also guards -1e-16 drift.
    return np.where(et.any(axis=1), np.maximum(out, 0.0), 0.0)


def loss_and_grad_arrays(evidence, labels, lambda_t: float):
    """Per-sample (l_acc, l_kl, gradient of l_acc + lambda_t l_kl wrt evidence).

    Same formulas as :func:`l_acc_arrays` and :func:`l_kl_arrays`, with every
    special-function argument packed into one array per function.
    """
    e, y = _check_batch(evidence, labels)
    n, k = e.shape
    rows = np.arange(n)
    s = e.sum(axis=1) + k
    true_alpha = e[rows, y] + 1.0
    et, mask = _misleading(e, y)
    at = et + 1.0
    st = at.sum(axis=1)

    packed = np.concatenate([s, true_alpha, st, at.ravel()])
    psi = digamma(packed)
    dpsi = trigamma(packed)
    lg = log_gamma(packed[2 * n :])
    psi_s, psi_true, psi_st, psi_at = psi[:n], psi[n : 2 * n], psi[2 * n : 3 * n], psi[3 * n :].reshape(n, k)
    tri_s, tri_true, tri_st, tri_at = dpsi[:n], dpsi[n : 2 * n], dpsi[2 * n : 3 * n], dpsi[3 * n :].reshape(n, k)
    lg_st, lg_at = lg[:n], lg[n:].reshape(n, k)

    la = psi_s - psi_true
    lk = lg_st - math.lgamma(k) - lg_at.sum(axis=1) + np.sum(et * (psi_at - psi_st[:, None]), axis=1)
    lk = np.where(et.any(axis=1), np.maximum(lk, 0.0), 0.0)

    g = np.repeat(tri_s[:, None], k, axis=1)
    g[rows, y] -= tri_true
    if lambda_t:
        g_kl = et * tri_at - ((st - k) * tri_st)[:, None]
        g = g + lambda_t * g_kl * mask
    return la, lk, g


def _single(e, y):
    ev = e if isinstance(e, Evidence) else Evidence(e)
    lab = y if isinstance(y, LabelEncoding) else LabelEncoding.of(int(y), ev.k)
    if lab.k != ev.k:
        raise DimensionError(f"label has {lab.k} classes, evidence has {ev.k}")
    return ev.values[None, :], np.array([lab.index])


def l_acc(e, y) -> float:
    ev, lab = _single(e, y)
    return float(l_acc_arrays(ev, lab)[0])


def l_kl(e, y) -> float:
    ev, lab = _single(e, y)
    return float(l_kl_arrays(ev, lab)[0])


def loss_gradient(e, y, t) -> np.ndarray:
    """Gradient of ``L_acc + lambda_t L_KL`` with respect to the evidence vector."""
    ev, lab = _single(e, y)
    return loss_and_grad_arrays(ev, lab, annealing(t))[2][0]


def joint_loss(evidences: Sequence, labels: Sequence, t) -> tuple[list[LossReport], float]:
    """Per-view loss reports and their sum for one sample across all views."""
    if len(evidences) != len(labels):
        raise DimensionError(f"{len(evidences)} views but {len(labels)} labels")
    if not evidences:
        raise DimensionError("need at least one view")
    lam = annealing(t)
    reports = []
    for e, y in zip(evidences, labels):
        a, kl = l_acc(e, y), l_kl(e, y)
        reports.append(LossReport(a, kl, lam, a + lam * kl))
    return reports, float(sum(r.total for r in reports))
