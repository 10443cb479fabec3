"""Log-gamma, digamma, trigamma and the log multinomial beta function.

All functions shift small arguments upward with the functional recurrence
until they clear ``recurrence_threshold`` and then evaluate the Stirling
(Bernoulli-number) asymptotic series. They accept scalars or numpy arrays
and return the same shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import DomainError

__all__ = [
    "SpecFnConfig",
    "DEFAULT_CONFIG",
    "log_gamma",
    "digamma",
    "trigamma",
    "log_multinomial_beta",
]

# B_2, B_4, ..., B_22
_BERNOULLI = [
    Fraction(1, 6),
    Fraction(-1, 30),
    Fraction(1, 42),
    Fraction(-1, 30),
    Fraction(5, 66),
    Fraction(-691, 2730),
    Fraction(7, 6),
    Fraction(-3617, 510),
    Fraction(43867, 798),
    Fraction(-174611, 330),
    Fraction(854513, 138),
]

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class SpecFnConfig:
    recurrence_threshold: float = 6.0
    series_terms: int = 10

    def __post_init__(self):
        if not self.recurrence_threshold >= 6:
            raise ValueError("recurrence_threshold must be >= 6")
        if not 1 <= self.series_terms <= len(_BERNOULLI):
            raise ValueError(f"series_terms must be in [1, {len(_BERNOULLI)}]")


DEFAULT_CONFIG = SpecFnConfig()


@lru_cache(maxsize=None)
def _coefficients(terms: int) -> tuple[tuple[float, ...], tuple[float, ...], tuple[float, ...]]:
    """Series coefficients for (log_gamma, digamma, trigamma), lowest order first."""
    ks = range(1, terms + 1)
    lg = tuple(float(_BERNOULLI[k - 1] / (2 * k * (2 * k - 1))) for k in ks)
    dg = tuple(float(_BERNOULLI[k - 1] / (2 * k)) for k in ks)
    tg = tuple(float(_BERNOULLI[k - 1]) for k in ks)
    return lg, dg, tg


def _horner(coeffs, w):
    """sum_i coeffs[i] * w**i."""
    out = np.full_like(w, coeffs[-1])
    for c in reversed(coeffs[:-1]):
        out = out * w + c
    return out


def _prepare(x, name):
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"{name} requires finite x > 0")
    return arr


def _finish(out, x):
    return float(out) if np.ndim(x) == 0 else out


def _shift(x, threshold):
    """Shift every element up by whole steps until it reaches ``threshold``.

    Returns the shifted array and, per step, the mask of elements that moved
    together with their value before the move.
    """
    z = np.array(x, dtype=np.float64, copy=True)
    steps = []
    mask = z < threshold
    while mask.any():
        steps.append((mask, z.copy()))
        z += mask
        mask = z < threshold
    return z, steps


def log_gamma(x, config: SpecFnConfig = DEFAULT_CONFIG):
    """Natural log of the gamma function for x > 0."""
    arr = _prepare(x, "log_gamma")
    z, steps = _shift(arr, config.recurrence_threshold)
    # log G(x) = log G(x + n) - log(x (x+1) ... (x+n-1))
    prod = np.ones_like(z)
    for mask, zk in steps:
        prod = np.where(mask, prod * zk, prod)
    inv = 1.0 / z
    series = inv * _horner(_coefficients(config.series_terms)[0], inv * inv)
    out = (z - 0.5) * np.log(z) - z + _HALF_LOG_2PI + series - np.log(prod)
    return _finish(out, x)


def digamma(x, config: SpecFnConfig = DEFAULT_CONFIG):
    """psi(x) = d/dx log Gamma(x) for x > 0."""
    arr = _prepare(x, "digamma")
    z, steps = _shift(arr, config.recurrence_threshold)
    correction = np.zeros_like(z)
    for mask, zk in steps:
        correction = np.where(mask, correction + 1.0 / zk, correction)
    inv = 1.0 / z
    inv2 = inv * inv
    series = inv2 * _horner(_coefficients(config.series_terms)[1], inv2)
    out = np.log(z) - 0.5 * inv - series - correction
    return _finish(out, x)


def trigamma(x, config: SpecFnConfig = DEFAULT_CONFIG):
    """psi'(x), the derivative of the digamma function, for x > 0."""
    arr = _prepare(x, "trigamma")
    z, steps = _shift(arr, config.recurrence_threshold)
    correction = np.zeros_like(z)
    for mask, zk in steps:
        correction = np.where(mask, correction + 1.0 / (zk * zk), correction)
    inv = 1.0 / z
    inv2 = inv * inv
    series = inv2 * inv * _horner(_coefficients(config.series_terms)[2], inv2)
    out = inv + 0.5 * inv2 + series + correction
    return _finish(out, x)


def log_multinomial_beta(alpha, axis: int = -1, config: SpecFnConfig = DEFAULT_CONFIG):
    """log B(alpha) = sum_k log Gamma(alpha_k) - log Gamma(sum_k alpha_k)."""
    arr = np.asarray(alpha, dtype=np.float64)
    if arr.ndim == 0:
        raise DomainError("log_multinomial_beta needs a vector of concentrations")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError("log_multinomial_beta requires all components > 0")
    out = np.sum(log_gamma(arr, config), axis=axis) - log_gamma(np.sum(arr, axis=axis), config)
    return float(out) if np.ndim(out) == 0 else out
