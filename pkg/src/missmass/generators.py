"""Constructors for feature-probability sequences.

Families:

* ``power_law`` -- regularly varying ``p_j = c j^(-1/alpha) (1 + log j)^beta``
* ``geometric`` -- ``p_j = q^j``, light tailed, outside the regularly varying class
* ``finite_uniform`` -- ``J`` equal probabilities
* ``gamma_process_draw`` -- a random draw ``p_k = 1 - exp(-s_k)`` where the ``s_k``
  are the jumps of a gamma process with (optionally tilted) Levy intensity
  ``exp(-s (1 + tilt)) / s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import exp1

from .errors import DomainError, NumericalError
from .model import ProbabilityVector

DEFAULT_THRESHOLD = 1e-12
MAX_FEATURES = 50_000_000

# relative slack when comparing a probability against a truncation threshold,
# so that e.g. 0.01**3 is retained at threshold 1e-6
_THRESHOLD_SLACK = 1e-12


@dataclass(frozen=True)
class RegVarSpec:
    alpha: float
    scale: float
    log_exponent: float = 0.0
    truncation_threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha={self.alpha} must lie strictly inside (0, 1)")
        if not self.scale > 0.0:
            raise DomainError(f"scale={self.scale} must be positive")
        if not self.truncation_threshold > 0.0:
            raise DomainError("truncation_threshold must be positive")
        if not math.isfinite(self.log_exponent):
            raise DomainError("log_exponent must be finite")

    def prob(self, x: np.ndarray | float) -> np.ndarray:
        """Continuous extension ``c x^(-1/alpha) (1 + log x)^beta`` for ``x >= 1``."""
        x = np.asarray(x, dtype=np.float64)
        out = self.scale * np.power(x, -1.0 / self.alpha)
        if self.log_exponent:
            out = out * np.power(1.0 + np.log(x), self.log_exponent)
        return out

    def log_prob(self, x: np.ndarray | float) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        out = math.log(self.scale) - np.log(x) / self.alpha
        if self.log_exponent:
            out = out + self.log_exponent * np.log1p(np.log(x))
        return out

    @property
    def monotone_from(self) -> float:
        """Smallest ``x >= 1`` beyond which ``prob`` is decreasing."""
        # d/dx log p = (-1/alpha + beta / (1 + log x)) / x
        ab = self.alpha * self.log_exponent
        return max(1.0, math.exp(ab - 1.0)) if ab > 0 else 1.0


@dataclass(frozen=True)
class GammaProcessSpec:
    jump_truncation: float = 1e-10
    tilt: int = 0

    def __post_init__(self) -> None:
        if not self.jump_truncation > 0.0:
            raise DomainError("jump_truncation must be positive")
        if int(self.tilt) != self.tilt or self.tilt < 0:
            raise DomainError("tilt must be a non-negative integer")


def _last_index_above(spec: RegVarSpec) -> int:
    """Largest ``j`` with ``p_j >= threshold`` (``p`` is eventually decreasing)."""
    thr = math.log(spec.truncation_threshold * (1.0 - _THRESHOLD_SLACK))
    x0 = spec.monotone_from
    if float(spec.log_prob(x0)) < thr:
        # the whole monotone part is below threshold; only the initial bump may remain
        xs = np.arange(1, int(math.ceil(x0)) + 1, dtype=np.float64)
        keep = np.nonzero(spec.log_prob(xs) >= thr)[0]
        return int(keep[-1]) + 1 if keep.size else 0
    if spec.log_exponent == 0.0:
        guess = (spec.scale / spec.truncation_threshold) ** spec.alpha
    else:
        lo, hi = x0, max(2.0 * x0, 2.0)
        while float(spec.log_prob(hi)) >= thr:
            lo, hi = hi, hi * 2.0
            if hi > 1e300:
                raise NumericalError("could not bracket the truncation index")
        for _ in range(200):
            mid = math.sqrt(lo * hi)
            if float(spec.log_prob(mid)) >= thr:
                lo = mid
            else:
                hi = mid
            if hi - lo < 0.5:
                break
        guess = lo
    j = max(1, int(math.floor(guess)))
    # repair floating error in the continuous solution
    while j > 1 and float(spec.log_prob(float(j))) < thr:
        j -= 1
    while float(spec.log_prob(float(j + 1))) >= thr:
        j += 1
    return j


def power_law_tail_integral(spec: RegVarSpec, start: float) -> float:
    """Certified upper bound on ``integral_start^inf p(x) dx`` (``start`` in the monotone range)."""
    inv = 1.0 / spec.alpha
    if spec.log_exponent == 0.0:
        return spec.scale * start ** (1.0 - inv) / (inv - 1.0)
    # substitute x = start * e^u to tame the infinite range
    ls = math.log(start)
    lc = math.log(spec.scale)

    def integrand(u: float) -> float:
        lx = ls + u
        return math.exp(lc + lx * (1.0 - inv) + spec.log_exponent * math.log1p(lx))

    val, err = integrate.quad(integrand, 0.0, np.inf, epsabs=0.0, epsrel=1e-10, limit=200)
    return (val + abs(err)) * (1.0 + 1e-9)


def power_law(spec: RegVarSpec, max_features: int = MAX_FEATURES) -> ProbabilityVector:
    p1 = float(spec.prob(1.0))
    if p1 > 1.0:
        raise DomainError(f"largest probability scale*l(1)={p1} exceeds 1")
    J = _last_index_above(spec)
    if J > max_features:
        raise DomainError(
            f"truncation_threshold={spec.truncation_threshold} retains {J} features "
            f"(limit {max_features}); raise the threshold"
        )
    j = np.arange(1, J + 1, dtype=np.float64)
    values = spec.prob(j) if J else np.empty(0)
    start = max(float(J), spec.monotone_from)
    tail = power_law_tail_integral(spec, start)
    if J < spec.monotone_from:
        # terms between J and the start of the monotone range
        extra = np.arange(J + 1, int(math.ceil(spec.monotone_from)) + 1, dtype=np.float64)
        tail += float(spec.prob(extra).sum()) if extra.size else 0.0
    values = np.sort(values)[::-1] if spec.log_exponent > 0.0 else values
    return ProbabilityVector(
        values,
        tail,
        {
            "family": "power_law",
            "alpha": spec.alpha,
            "scale": spec.scale,
            "log_exponent": spec.log_exponent,
            "truncation_threshold": spec.truncation_threshold,
            "pure": spec.log_exponent == 0.0,
        },
    )


def geometric(q: float, truncation_threshold: float = DEFAULT_THRESHOLD) -> ProbabilityVector:
    if not 0.0 < q < 1.0:
        raise DomainError(f"q={q} must lie in (0, 1)")
    if not truncation_threshold > 0.0:
        raise DomainError("truncation_threshold must be positive")
    J = int(math.floor(math.log(truncation_threshold) / math.log(q))) + 2
    j = np.arange(1, J + 1, dtype=np.float64)
    values = np.power(q, j)
    values = values[values >= truncation_threshold * (1.0 - _THRESHOLD_SLACK)]
    J = values.size
    tail = q ** (J + 1) / (1.0 - q)
    return ProbabilityVector(
        values, tail, {"family": "geometric", "q": q, "truncation_threshold": truncation_threshold}
    )


def finite_uniform(J: int, p: float) -> ProbabilityVector:
    if int(J) != J or J < 1:
        raise DomainError(f"J={J} must be a positive integer")
    if not 0.0 < p <= 1.0:
        raise DomainError(f"p={p} must lie in (0, 1]")
    return ProbabilityVector(np.full(int(J), float(p)), 0.0, {"family": "finite_uniform", "J": int(J), "p": p})


# --- gamma process -------------------------------------------------------------


def levy_tail(x: np.ndarray | float, tilt: int = 0) -> np.ndarray:
    """``int_x^inf exp(-s (1 + tilt)) / s ds = E1((1 + tilt) x)``."""
    return exp1((1.0 + tilt) * np.asarray(x, dtype=np.float64))


def invert_levy_tail(g: np.ndarray, tilt: int, lower: float, rtol: float = 1e-12) -> np.ndarray:
    """Solve ``levy_tail(s) = g`` for each ``g`` in ``(0, levy_tail(lower))`` by bisection.

    Bisection runs on ``log s``; the bracket is ``[lower, s_hi]`` where
    ``E1(z) <= exp(-z)`` for ``z >= 1`` gives ``(1 + tilt) s_hi = max(1, -log g)``.
    """
    g = np.asarray(g, dtype=np.float64)
    if g.size == 0:
        return g.copy()
    a = 1.0 + tilt
    if np.any(g <= 0.0) or np.any(g >= levy_tail(lower, tilt)):
        raise NumericalError("arrival time outside the invertible range of the Levy tail")
    lo = np.full(g.shape, math.log(lower))
    hi = np.log(np.maximum(1.0, -np.log(g)) / a)
    if np.any(levy_tail(np.exp(hi), tilt) > g):
        raise NumericalError("failed to bracket the Levy tail inverse")
    tol = math.log1p(rtol)
    for _ in range(400):
        if np.all(hi - lo <= tol):
            break
        mid = 0.5 * (lo + hi)
        above = levy_tail(np.exp(mid), tilt) > g
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    else:  # pragma: no cover - 400 halvings of a finite log-bracket always converge
        raise NumericalError("bisection did not converge")
    return np.exp(0.5 * (lo + hi))


def gamma_process_jumps(spec: GammaProcessSpec, seed: int) -> np.ndarray:
    """Jumps ``s_1 > s_2 > ... >= jump_truncation`` by the Ferguson-Klass construction."""
    rng = np.random.default_rng(np.random.PCG64(seed))
    horizon = float(levy_tail(spec.jump_truncation, spec.tilt))
    chunk = max(16, int(horizon * 1.5) + 16)
    arrivals: list[np.ndarray] = []
    last = 0.0
    while True:
        g = last + np.cumsum(rng.standard_exponential(chunk))
        inside = g[g < horizon]
        arrivals.append(inside)
        if inside.size < g.size:
            break
        last = float(g[-1])
    gam = np.concatenate(arrivals)
    return invert_levy_tail(gam, spec.tilt, spec.jump_truncation)


def gamma_process_draw(spec: GammaProcessSpec, seed: int) -> ProbabilityVector:
    jumps = gamma_process_jumps(spec, seed)
    values = -np.expm1(-jumps)
    return ProbabilityVector(
        values,
        spec.jump_truncation,
        {
            "family": "gamma_process",
            "jump_truncation": spec.jump_truncation,
            "tilt": spec.tilt,
            "seed": int(seed),
            "raw_mass": math.fsum(jumps),
        },
    )
