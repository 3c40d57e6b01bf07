"""Karlin-type asymptotics of the frequency counts and consistency diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .errors import DomainError, UnsupportedSpecError
from .generators import RegVarSpec, _last_index_above
from .model import ProbabilityVector, expected_k_n, expected_k_nr, log_binom, phi_n, phi_nr
from .sampler import ReplicateDataset

EXPLICIT_LIMIT = 50_000_000


def karlin_constant(alpha: float, r: int) -> float:
    """``alpha * Gamma(r - alpha) / r!``."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha={alpha} must lie strictly inside (0, 1)")
    if r < 1:
        raise DomainError("r must be positive")
    return alpha * math.exp(float(gammaln(r - alpha)) - math.lgamma(r + 1))


def slowly_varying_part(spec: RegVarSpec, n: float) -> float:
    """``l(n)`` in ``E[K_{n,r}] ~ C_r n^alpha l(n)``.

    Exact (``c^alpha``) for a pure power law; for ``beta != 0`` only the
    first-order form ``c^alpha (1 + alpha log(c n))^(alpha beta)``.
    """
    base = spec.scale**spec.alpha
    if spec.log_exponent == 0.0:
        return base
    return base * (1.0 + spec.alpha * math.log(spec.scale * n)) ** (spec.alpha * spec.log_exponent)


def expected_k_nr_power_law(spec: RegVarSpec, n: int, r: int) -> float:
    """``E[K_{n,r}]`` for the untruncated sequence.

    Terms with ``n p_j > 1e-4`` are summed explicitly; the remaining smooth tail
    ``sum_{j > J} f(j)`` is replaced by ``int_{J + 1/2}^inf f(x) dx``.
    """
    if r < 0 or r > n:
        raise DomainError(f"r={r} outside [0, n={n}]")
    cut = RegVarSpec(spec.alpha, spec.scale, spec.log_exponent, min(1e-4 / n, spec.scale))
    J = max(_last_index_above(cut), int(math.ceil(spec.monotone_from)))
    if J > EXPLICIT_LIMIT:
        raise DomainError(f"explicit range {J} exceeds {EXPLICIT_LIMIT}")
    head = ProbabilityVector(np.sort(spec.prob(np.arange(1, J + 1, dtype=np.float64)))[::-1])
    explicit = expected_k_nr(head, n, r)

    lc = log_binom(n, r)
    lscale = math.log(spec.scale)
    inv = 1.0 / spec.alpha

    def integrand(u: float) -> float:
        # x = e^u; returns f(x) * x
        lp = lscale - u * inv + spec.log_exponent * math.log1p(u)
        if lp < -745.0:
            return 0.0
        return math.exp(lc + r * lp + (n - r) * math.log1p(-math.exp(lp)) + u)

    tail, _ = integrate.quad(integrand, math.log(J + 0.5), np.inf, epsabs=0.0, epsrel=1e-11, limit=400)
    return explicit + tail


def karlin_ratio(spec: RegVarSpec, n: int, r: int, approximate_slow_variation: bool = False) -> float:
    """``E[K_{n,r}] / (C_r n^alpha l(n))``; tends to 1 as ``n`` grows."""
    if spec.log_exponent != 0.0 and not approximate_slow_variation:
        raise UnsupportedSpecError(
            "l(n) is only known exactly for log_exponent = 0; pass approximate_slow_variation=True"
        )
    e = expected_k_nr_power_law(spec, n, r)
    return e / (karlin_constant(spec.alpha, r) * n**spec.alpha * slowly_varying_part(spec, n))


@dataclass(frozen=True)
class GapReport:
    """``|Phi_n - E[K_n]|`` against ``(2/n) Phi_{n,2}``, plus the per-r gap.

    ``implied_c`` is the smallest ``c`` with
    ``|E[K_{n,r}] - Phi_{n,r}| <= (c/n) max(Phi_{n,r}, Phi_{n,r+2})``.
    """

    gap: float
    budget: float
    r_gap: float
    implied_c: float

    @property
    def holds(self) -> bool:
        return self.gap <= self.budget

    def __iter__(self):
        yield self.gap
        yield self.budget


def phi_vs_ek_gap(p: ProbabilityVector, n: int, r: int = 1) -> GapReport:
    if n <= 2:
        raise DomainError("the gap comparison needs n > 2")
    gap = abs(phi_n(p, n) - expected_k_n(p, n))
    budget = 2.0 / n * phi_nr(p, n, 2)
    r_gap = abs(expected_k_nr(p, n, r) - phi_nr(p, n, r))
    scale = max(phi_nr(p, n, r), phi_nr(p, n, r + 2))
    implied = n * r_gap / scale if scale > 0 else math.inf
    return GapReport(gap, budget, r_gap, implied)


@dataclass(frozen=True)
class ConsistencyDiagnostic:
    """Per sample size summary of ``M_hat_n / M_n`` across replicates."""

    epsilon: float
    n_grid: np.ndarray
    count: np.ndarray
    degenerate: np.ndarray
    mean: np.ndarray
    median: np.ndarray
    std: np.ndarray
    frac_within: np.ndarray

    @property
    def frac_outside(self) -> np.ndarray:
        return 1.0 - self.frac_within


def ratio_summary(dataset: ReplicateDataset, epsilon: float):
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    grid = np.unique(dataset.n)
    rows = []
    for n in grid:
        sub = dataset.at(int(n))
        ok = sub.m_oracle > 0
        ratio = sub.m_hat[ok] / sub.m_oracle[ok]
        if ratio.size:
            within = np.abs(ratio - 1.0) <= epsilon
            row = (ratio.size, int(np.count_nonzero(~ok)), ratio.mean(), np.median(ratio), ratio.std(), within.mean())
        else:
            row = (0, int(np.count_nonzero(~ok)), math.nan, math.nan, math.nan, math.nan)
        rows.append(row)
    cols = list(zip(*rows)) if rows else [()] * 6
    return grid, [np.asarray(c) for c in cols]


def consistency_diagnostic(dataset: ReplicateDataset, epsilon: float = 0.1) -> ConsistencyDiagnostic:
    """Records with ``M_n = 0`` are counted in ``degenerate`` and left out of the ratios."""
    grid, (count, degenerate, mean, median, std, within) = ratio_summary(dataset, epsilon)
    return ConsistencyDiagnostic(
        float(epsilon),
        grid.astype(np.int64),
        count.astype(np.int64),
        degenerate.astype(np.int64),
        mean.astype(np.float64),
        median.astype(np.float64),
        std.astype(np.float64),
        within.astype(np.float64),
    )
