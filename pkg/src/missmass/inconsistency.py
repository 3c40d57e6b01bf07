"""Failure of the missing-mass estimator under a gamma-process prior.

No single estimator can be multiplicatively consistent for every summable
sequence.  A runtime cannot quantify over estimators, so this module fixes
the estimator ``K_{n,1}/n`` and shows its ratio to the true missing mass does
not settle at 1 when the probabilities are drawn from the gamma-process prior
(Levy intensity ``exp(-s)/s``).  It also checks the posterior facts the
argument rests on: the unobserved jump mass ``S_n`` is Exponential with rate
``n + 1`` and ``1 - S_n/2 <= M_n/S_n <= 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DomainError
from .generators import GammaProcessSpec, RegVarSpec, gamma_process_jumps, power_law
from .model import DEFAULT_R
from .sampler import ReplicateDataset, derive_seed, replicate_seed, run_replicates

DEFAULT_JUMP_TRUNCATION = 1e-10
NOISE_FLOOR_FACTOR = 10.0
KS_THRESHOLD = 0.02
HEADER = (
    "estimator fixed to K_{n,1}/n; failure shown distributionally over gamma-process "
    "prior draws rather than for a single worst-case sequence"
)


def _f(y: float, eps_bar: float) -> float:
    return 1.0 + math.exp(-(1.0 + 3.0 * eps_bar) * y) - math.exp(-(1.0 - 3.0 * eps_bar) * y)


def minimizer_y(eps_bar: float) -> float:
    if not 0.0 < eps_bar < 1.0 / 3.0:
        raise DomainError(f"epsilon={eps_bar} must lie in (0, 1/3)")
    return math.log((1.0 + 3.0 * eps_bar) / (1.0 - 3.0 * eps_bar)) / (6.0 * eps_bar)


def constant_C(eps_bar: float) -> float:
    """Minimum over ``y > 0`` of ``1 + exp(-(1+3e) y) - exp(-(1-3e) y)``.

    This is a lower bound on the posterior probability that ``S_n`` falls
    outside any multiplicative ``3e``-band, whatever its centre.
    """
    return _f(minimizer_y(eps_bar), eps_bar)


@dataclass(frozen=True)
class PosteriorCheck:
    n: int
    m: int
    ks_distance: float
    ks_pvalue: float
    threshold: float
    mean: float
    mean_stderr: float
    sandwich_violations: int
    empty_draws: int

    @property
    def passed(self) -> bool:
        return self.ks_distance < self.threshold and self.sandwich_violations == 0

    @property
    def mean_z(self) -> float:
        return (self.mean - 1.0 / (self.n + 1)) / self.mean_stderr


def posterior_total_mass_check(
    n: int,
    m_draws: int,
    seed: int,
    jump_truncation: float = DEFAULT_JUMP_TRUNCATION,
    threshold: float = KS_THRESHOLD,
) -> PosteriorCheck:
    """KS distance of the tilted total jump mass to Exponential(rate ``n + 1``)."""
    if n < 0:
        raise DomainError("n must be >= 0")
    if m_draws < 1:
        raise DomainError("m_draws must be >= 1")
    spec = GammaProcessSpec(jump_truncation, n)
    totals = np.empty(m_draws)
    bad = empty = 0
    for i in range(m_draws):
        s = gamma_process_jumps(spec, replicate_seed(seed, i))
        S = math.fsum(s)
        totals[i] = S
        if S == 0.0:
            empty += 1
            continue
        M = math.fsum(-np.expm1(-s))
        slack = 4.0 * np.finfo(float).eps * S
        if not (S - S * S / 2.0 - slack <= M <= S + slack):
            bad += 1
    ks = stats.kstest(totals, stats.expon(scale=1.0 / (n + 1)).cdf)
    return PosteriorCheck(
        n=n,
        m=m_draws,
        ks_distance=float(ks.statistic),
        ks_pvalue=float(ks.pvalue),
        threshold=threshold,
        mean=float(totals.mean()),
        mean_stderr=float(totals.std(ddof=1) / math.sqrt(m_draws)) if m_draws > 1 else math.inf,
        sandwich_violations=bad,
        empty_draws=empty,
    )


@dataclass
class InconsistencyReport:
    epsilon: float
    n_grid: np.ndarray
    count: np.ndarray
    degenerate: np.ndarray
    frac_outside: np.ndarray
    quantiles: np.ndarray  # rows: n, columns: QUANTILES
    mean_ratio: np.ndarray
    analytic_floor: float
    control_frac_outside: np.ndarray | None = None
    header: str = HEADER
    min_fraction: float = 0.05
    separation: float = 5.0
    notes: dict = field(default_factory=dict)

    @property
    def epsilon_bar(self) -> float:
        return 2.0 * self.epsilon

    @property
    def persists(self) -> bool:
        return bool(np.all(self.frac_outside >= self.min_fraction))

    @property
    def separated(self) -> bool | None:
        if self.control_frac_outside is None:
            return None
        return bool(self.frac_outside[-1] >= self.separation * self.control_frac_outside[-1])


QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


def outside_band(dataset: ReplicateDataset, epsilon: float, floor_factor: float = NOISE_FLOOR_FACTOR):
    """Per-n fraction with ``|M_hat/M - 1| >= epsilon``; near-zero ``M_n`` counted apart."""
    grid = np.unique(dataset.n)
    count, degenerate, frac, quant, mean = [], [], [], [], []
    for n in grid:
        sub = dataset.at(int(n))
        ok = sub.m_oracle > floor_factor * sub.tail_mass_bound
        ok &= sub.m_oracle > 0
        ratio = sub.m_hat[ok] / sub.m_oracle[ok]
        count.append(ratio.size)
        degenerate.append(int(np.count_nonzero(~ok)))
        if ratio.size:
            frac.append(float(np.mean(np.abs(ratio - 1.0) >= epsilon)))
            quant.append(np.quantile(ratio, QUANTILES))
            mean.append(float(ratio.mean()))
        else:
            frac.append(math.nan)
            quant.append(np.full(len(QUANTILES), math.nan))
            mean.append(math.nan)
    return grid, np.asarray(count), np.asarray(degenerate), np.asarray(frac), np.vstack(quant), np.asarray(mean)


def inconsistency_experiment(
    n_grid,
    m_priors: int,
    epsilon: float,
    seed: int,
    jump_truncation: float = DEFAULT_JUMP_TRUNCATION,
    control: RegVarSpec | None = None,
    R: int = DEFAULT_R,
    workers: int = 1,
) -> tuple[InconsistencyReport, ReplicateDataset, ReplicateDataset | None]:
    if not 0.0 < epsilon < 1.0 / 6.0:
        raise DomainError(f"epsilon={epsilon} must lie in (0, 1/6)")
    if m_priors < 100:
        raise DomainError(f"m_priors={m_priors} must be at least 100")
    data = run_replicates(GammaProcessSpec(jump_truncation, 0), n_grid, m_priors, seed, R=R, workers=workers)
    grid, count, degenerate, frac, quant, mean = outside_band(data, epsilon)
    control_data = None
    control_frac = None
    if control is not None:
        control_data = run_replicates(power_law(control), n_grid, m_priors, derive_seed(seed, 2), R=R, workers=workers)
        control_frac = outside_band(control_data, epsilon)[3]
    report = InconsistencyReport(
        epsilon=float(epsilon),
        n_grid=grid.astype(np.int64),
        count=count.astype(np.int64),
        degenerate=degenerate.astype(np.int64),
        frac_outside=frac,
        quantiles=quant,
        mean_ratio=mean,
        analytic_floor=constant_C(2.0 * epsilon),
        control_frac_outside=control_frac,
    )
    return report, data, control_data
