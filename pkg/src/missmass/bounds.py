"""Exponential tail bounds for the missing mass and the frequency counts.

The left tail of ``M_n`` is sub-Gaussian with variance factor
``v_minus = sum_j p_j^2 (1 - p_j)^n``; the right tail is sub-Gamma with
variance factor ``v_plus = 2 E[K_n] / (n^2 - 2n)`` and scale ``1/n``.  Each
``K_{n,r}`` is sub-Poisson with variance factor ``E[K_{n,r}]``.

``mm_right_tail_bound`` evaluates the right-tail expression in the form it is
usually stated for this model; ``mm_right_tail_chernoff`` is the independent
numerical Chernoff optimisation of the sub-Gamma log-Laplace bound and is
reported next to it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import AlignmentError, DomainError
from .model import ProbabilityVector, expected_k_n, expected_k_nr, expected_m_n
from .sampler import ReplicateDataset

VIOLATION_SIGMAS = 4.0


def variance_factor_minus(p: ProbabilityVector, n: int) -> float:
    if n < 1:
        raise DomainError("n must be positive")
    return 2.0 * expected_k_nr(p, n + 2, 2) / ((n + 2) * (n + 1))


def variance_factor_plus(p: ProbabilityVector, n: int) -> float:
    if n <= 2:
        raise DomainError(f"v_plus needs n > 2 (n^2 - 2n = {n * n - 2 * n})")
    return 2.0 * expected_k_n(p, n) / (n * n - 2 * n)


def _left(x: float, v: float) -> float:
    if x < 0:
        raise DomainError("x must be non-negative")
    if v == 0.0:
        return 1.0 if x == 0 else 0.0
    return min(1.0, math.exp(-x * x / (2.0 * v)))


def _right_raw(x: float, v: float, n: int) -> float:
    if x < 0:
        raise DomainError("x must be non-negative")
    if v == 0.0:
        return 1.0 if x == 0 else 0.0
    u = x / (n * v)
    # 1 + u - sqrt(1 + u), rearranged to avoid cancellation at small u
    gap = u - u / (1.0 + math.sqrt(1.0 + u))
    return math.exp(-v * n * n * gap)


def mm_left_tail_bound(p: ProbabilityVector, n: int, x: float) -> float:
    """Bound on ``P(M_n - E[M_n] <= -x)``."""
    return _left(x, variance_factor_minus(p, n))


def mm_right_tail_bound(p: ProbabilityVector, n: int, x: float) -> float:
    """Bound on ``P(M_n - E[M_n] >= x)``, clamped to ``[0, 1]``."""
    return min(1.0, _right_raw(x, variance_factor_plus(p, n), n))


def sub_gamma_chernoff(x: float, v: float, scale: float) -> float:
    """``exp(-sup_{0 <= l < 1/scale} [l x - l^2 v / (2 (1 - scale l))])`` by numerical search."""
    if x <= 0.0:
        return 1.0
    if v == 0.0:
        return 0.0

    def neg_rate(lam: float) -> float:
        return -(lam * x - lam * lam * v / (2.0 * (1.0 - scale * lam)))

    hi = 1.0 / scale
    res = minimize_scalar(neg_rate, bounds=(0.0, hi * (1.0 - 1e-12)), method="bounded", options={"xatol": hi * 1e-12})
    return min(1.0, math.exp(min(0.0, float(res.fun))))


def mm_right_tail_chernoff(p: ProbabilityVector, n: int, x: float) -> float:
    return sub_gamma_chernoff(x, variance_factor_plus(p, n), 1.0 / n)


def knr_tail_bound(p: ProbabilityVector, n: int, r: int, x: float) -> float:
    """Bound on ``P(|K_{n,r} - E[K_{n,r}]| >= x)``."""
    if x < 0:
        raise DomainError("x must be non-negative")
    e = expected_k_nr(p, n, r)
    if x == 0:
        return 1.0
    return min(1.0, 2.0 * math.exp(-x * x / (2.0 * (e + x / 3.0))))


def sub_poisson_rate(lam: float) -> float:
    return math.expm1(lam) - lam


@dataclass
class BoundReport:
    n: int
    x_grid: np.ndarray
    v_minus: float
    v_plus: float
    expected_m: float
    left_bounds: np.ndarray
    right_bounds: np.ndarray
    right_bounds_chernoff: np.ndarray
    empirical_left: np.ndarray
    empirical_right: np.ndarray
    stderr_left: np.ndarray
    stderr_right: np.ndarray
    k_grid: np.ndarray
    r: int
    expected_knr: float
    knr_bounds: np.ndarray
    empirical_knr: np.ndarray
    stderr_knr: np.ndarray
    m: int
    violations: list[tuple[str, float]] = field(default_factory=list)

    @property
    def violation_left(self) -> np.ndarray:
        return self.empirical_left - VIOLATION_SIGMAS * self.stderr_left > self.left_bounds

    @property
    def violation_right(self) -> np.ndarray:
        return self.empirical_right - VIOLATION_SIGMAS * self.stderr_right > self.right_bounds

    @property
    def violation_knr(self) -> np.ndarray:
        return self.empirical_knr - VIOLATION_SIGMAS * self.stderr_knr > self.knr_bounds


def _freq(events: np.ndarray) -> tuple[float, float]:
    m = events.size
    f = float(np.count_nonzero(events)) / m
    return f, math.sqrt(f * (1.0 - f) / m)


def default_x_grid(dev: np.ndarray, points: int = 11) -> np.ndarray:
    sd = float(np.std(dev))
    return np.linspace(0.0, 5.0 * sd, points) if sd > 0 else np.zeros(1)


def empirical_tail_compare(
    dataset: ReplicateDataset,
    p: ProbabilityVector,
    n: int,
    x_grid: Sequence[float] | None = None,
    k_grid: Sequence[float] | None = None,
    r: int = 1,
) -> BoundReport:
    """Compare empirical tail frequencies at sample size ``n`` with the analytic bounds.

    A grid point is a violation when the empirical frequency exceeds its bound
    by more than four binomial standard errors.
    """
    if len(dataset) == 0:
        raise AlignmentError("dataset is empty")
    sub = dataset.at(n)
    if len(sub) == 0:
        raise AlignmentError(f"dataset holds no records at n={n}")
    if r > dataset.R:
        raise AlignmentError(f"dataset tracks r <= {dataset.R}, asked for r={r}")
    if not np.all(sub.tail_mass_bound == p.tail_mass_bound):
        raise AlignmentError("dataset tail mass bound differs from the probability vector's")
    m = len(sub)
    em = expected_m_n(p, n)
    dev = sub.m_oracle - em
    xs = np.asarray(default_x_grid(dev) if x_grid is None else x_grid, dtype=np.float64)
    if np.any(xs < 0) or np.any(np.diff(xs) <= 0):
        raise DomainError("x_grid must be non-negative and strictly increasing")
    ek = expected_k_nr(p, n, r)
    kdev = np.abs(sub.k_nr[:, r - 1] - ek)
    if k_grid is None:
        ks = np.arange(0.0, math.ceil(float(kdev.max(initial=0.0))) + 2.0)
    else:
        ks = np.asarray(k_grid, dtype=np.float64)

    vm = variance_factor_minus(p, n)
    vp = variance_factor_plus(p, n) if n > 2 else math.nan
    left = np.array([_left(x, vm) for x in xs])
    if n > 2:
        right = np.array([min(1.0, _right_raw(x, vp, n)) for x in xs])
        right_c = np.array([sub_gamma_chernoff(x, vp, 1.0 / n) for x in xs])
    else:
        right = np.full(xs.size, np.nan)
        right_c = np.full(xs.size, np.nan)
    el, sl, er, sr = (np.empty(xs.size) for _ in range(4))
    for i, x in enumerate(xs):
        el[i], sl[i] = _freq(dev <= -x)
        er[i], sr[i] = _freq(dev >= x)
    kb = np.array([knr_tail_bound(p, n, r, x) for x in ks])
    ke, kse = (np.empty(ks.size) for _ in range(2))
    for i, x in enumerate(ks):
        ke[i], kse[i] = _freq(kdev >= x)

    report = BoundReport(
        n=n, x_grid=xs, v_minus=vm, v_plus=vp, expected_m=em,
        left_bounds=left, right_bounds=right, right_bounds_chernoff=right_c,
        empirical_left=el, empirical_right=er, stderr_left=sl, stderr_right=sr,
        k_grid=ks, r=r, expected_knr=ek, knr_bounds=kb, empirical_knr=ke, stderr_knr=kse, m=m,
    )
    for name, flags, grid in (
        ("m_left", report.violation_left, xs),
        ("m_right", report.violation_right, xs),
        (f"k_{r}", report.violation_knr, ks),
    ):
        report.violations.extend((name, float(g)) for g in grid[flags])
    return report
