"""Core types and exact statistics for the Bernoulli product feature model.

Every observation displays feature ``j`` independently with probability
``p_j``.  Only the per-feature occurrence counts are ever needed, so the
types here carry counts, never individual observations.

All expectation calculators work in log space: ``(1 - p)**n`` is evaluated as
``exp(n * log1p(-p))`` and binomial coefficients through ``betaln``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.special import betaln

from .errors import AlignmentError, DomainError

DEFAULT_R = 10


@dataclass(frozen=True, eq=False)
class ProbabilityVector:
    """Truncated, non-increasing feature probabilities plus a tail-mass bound.

    ``tail_mass_bound`` is an upper bound on the probability mass of the
    features dropped by truncation (0 for intrinsically finite families).
    """

    values: np.ndarray
    tail_mass_bound: float = 0.0
    tail_descriptor: Mapping[str, Any] | None = None

    def __post_init__(self) -> None:
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise DomainError("values must be one-dimensional")
        if v.size and not (np.all(v > 0.0) and np.all(v <= 1.0)):
            raise DomainError("every probability must lie in (0, 1]")
        if v.size > 1 and np.any(np.diff(v) > 0.0):
            raise DomainError("values must be sorted non-increasing")
        tail = float(self.tail_mass_bound)
        if not (tail >= 0.0 and math.isfinite(tail)):
            raise DomainError("tail_mass_bound must be finite and non-negative")
        if not math.isfinite(float(v.sum())):
            raise DomainError("sum of probabilities overflows")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "tail_mass_bound", tail)
        if self.tail_descriptor is not None:
            object.__setattr__(self, "tail_descriptor", dict(self.tail_descriptor))

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def total_mass(self) -> float:
        """Sum of retained probabilities (compensated summation)."""
        return math.fsum(self.values)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProbabilityVector):
            return NotImplemented
        return (
            np.array_equal(self.values, other.values)
            and self.tail_mass_bound == other.tail_mass_bound
            and self.tail_descriptor == other.tail_descriptor
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class SufficientStats:
    """Occurrence counts ``X_{n,j}`` at sample size ``n``."""

    n: int
    counts: np.ndarray

    def __post_init__(self) -> None:
        if int(self.n) < 1:
            raise DomainError("n must be a positive integer")
        c = np.ascontiguousarray(self.counts, dtype=np.int64)
        if c.ndim != 1:
            raise DomainError("counts must be one-dimensional")
        if c.size and (c.min() < 0 or c.max() > self.n):
            raise DomainError("counts must lie in [0, n]")
        c.setflags(write=False)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "counts", c)


@dataclass(frozen=True)
class StatisticsRecord:
    """One replicate at one sample size.

    ``k_nr[r - 1]`` is the number of features seen exactly ``r`` times.
    """

    n: int
    k_n: int
    k_nr: tuple[int, ...]
    m_n_oracle: float
    m_hat: float = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "k_nr", tuple(int(k) for k in self.k_nr))
        if not self.k_nr:
            raise DomainError("k_nr needs at least r = 1")
        object.__setattr__(self, "m_hat", self.k_nr[0] / self.n)


def check_aligned(p: ProbabilityVector, s: SufficientStats) -> None:
    if len(p) != s.counts.size:
        raise AlignmentError(
            f"counts has {s.counts.size} entries but the probability vector has {len(p)}"
        )


def missing_mass(p: ProbabilityVector, s: SufficientStats) -> float:
    """Probability mass of unseen features; the truncated tail counts as unseen."""
    check_aligned(p, s)
    return math.fsum(p.values[s.counts == 0]) + p.tail_mass_bound


def log_binom(n: int, r: int) -> float:
    """``log C(n, r)``, accurate to a few ulps for all ``0 <= r <= n``."""
    if r < 0 or r > n:
        raise DomainError(f"r={r} outside [0, n={n}]")
    k = min(r, n - r)
    if k == 0:
        return 0.0
    if k <= 64:
        return math.fsum(math.log((n - k + i) / i) for i in range(1, k + 1))
    return -math.log(n + 1) - float(betaln(n - k + 1, k + 1))


def _log1mp_pow(values: np.ndarray, m: float) -> np.ndarray:
    """``m * log(1 - p)`` with the convention ``0 * log(0) = 0``."""
    with np.errstate(divide="ignore"):
        lg = np.log1p(-values)
    if m == 0:
        return np.zeros_like(values)
    return m * lg


def binomial_pmf_terms(values: np.ndarray, n: int, r: int) -> np.ndarray:
    """Per-feature ``P(X_{n,j} = r)``."""
    if r < 0 or r > n:
        raise DomainError(f"r={r} outside [0, n={n}]")
    with np.errstate(divide="ignore"):
        logp = np.log(values) * r if r else np.zeros_like(values)
    return np.exp(log_binom(n, r) + logp + _log1mp_pow(values, n - r))


def expected_k_nr(p: ProbabilityVector, n: int, r: int) -> float:
    """``E[K_{n,r}] = sum_j C(n, r) p_j^r (1 - p_j)^(n - r)``."""
    if n < 1:
        raise DomainError("n must be positive")
    return math.fsum(binomial_pmf_terms(p.values, n, r))


def expected_k_n(p: ProbabilityVector, n: int) -> float:
    """``E[K_n] = sum_j 1 - (1 - p_j)^n``."""
    if n < 1:
        raise DomainError("n must be positive")
    return math.fsum(-np.expm1(_log1mp_pow(p.values, n)))


def expected_m_n(p: ProbabilityVector, n: int) -> float:
    """``E[M_n]`` including the tail bound, since truncated features are never seen."""
    if n < 1:
        raise DomainError("n must be positive")
    terms = np.exp(np.log(p.values) + _log1mp_pow(p.values, n))
    return math.fsum(terms) + p.tail_mass_bound


def sum_p2_survival(p: ProbabilityVector, n: int) -> float:
    """``sum_j p_j^2 (1 - p_j)^n``, computed directly."""
    terms = np.exp(2.0 * np.log(p.values) + _log1mp_pow(p.values, n))
    return math.fsum(terms)


def phi_nr(p: ProbabilityVector, n: int, r: int) -> float:
    """Poissonized frequency count ``sum_j (n p_j)^r exp(-n p_j) / r!``."""
    if n < 1 or r < 1:
        raise DomainError("n and r must be positive")
    x = n * p.values
    return math.fsum(np.exp(r * np.log(x) - x - math.lgamma(r + 1)))


def phi_n(p: ProbabilityVector, n: int) -> float:
    """Poissonized distinct count ``sum_j 1 - exp(-n p_j)``."""
    if n < 1:
        raise DomainError("n must be positive")
    return math.fsum(-np.expm1(-n * p.values))


def as_probability_vector(values: Sequence[float], tail_mass_bound: float = 0.0) -> ProbabilityVector:
    """Sort arbitrary probabilities into a ``ProbabilityVector``."""
    v = np.sort(np.asarray(values, dtype=np.float64))[::-1]
    return ProbabilityVector(v, tail_mass_bound)
