"""Monte Carlo simulation of the Bernoulli product model.

Counts are drawn feature by feature as ``Binomial(n, p_j)``.  Long truncated
sequences (hundreds of thousands of features, almost all unseen) would make a
dense draw the bottleneck, so features are split in two:

* head features, ``P(X_j >= 1) >= 1/4``: one vectorised binomial draw;
* tail features: grouped into blocks whose hit probabilities
  ``q_j = 1 - (1 - p_j)^n`` lie within a factor two of the block maximum
  ``q*``.  A block of length ``L`` yields ``Binomial(L, q*)`` uniformly placed
  candidates, each kept with probability ``q_j / q*`` (thinning), and every
  kept feature gets a count from the zero-truncated binomial by inversion.

Both routes are exact in law; no probability is ever rounded to zero.
Trajectories over short vectors (at most ``DENSE_LIMIT`` features) skip the
split and draw every feature's increment directly.

Seeding: replicate ``i`` of a run with master seed ``S`` uses
``replicate_seed(S, i)``, a SplitMix64 mix of ``S + (i + 1) * 0x9E3779B97F4A7C15``.
Sub-streams of a replicate (feature-probability draw, counts) come from
``derive_seed(seed, k)`` with the same mixer.  These functions are fixed; changing
them changes every stored result.
"""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Sequence, Union

import numpy as np

from .errors import AlignmentError, DomainError
from .generators import GammaProcessSpec, RegVarSpec, gamma_process_draw, power_law
from .model import DEFAULT_R, ProbabilityVector, StatisticsRecord, SufficientStats, check_aligned

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
HEAD_CUT = 0.25
DIRECT_MASS_LIMIT = 4096
# short vectors: one dense binomial draw per step beats the sparse bookkeeping
DENSE_LIMIT = 256

Source = Union[ProbabilityVector, RegVarSpec, GammaProcessSpec]


def splitmix64(x: int) -> int:
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def replicate_seed(master_seed: int, index: int) -> int:
    return splitmix64((master_seed + (index + 1) * GOLDEN) & MASK64)


def derive_seed(seed: int, stream: int) -> int:
    return splitmix64((seed ^ splitmix64(stream)) & MASK64)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed & MASK64))


def _zero_truncated_binomial(rng: np.random.Generator, n: int, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Draw ``X ~ Binomial(n, p) | X >= 1`` by inversion; ``q = P(X >= 1)``."""
    u = rng.random(p.size)
    k = np.ones(p.size, dtype=np.int64)
    if n == 1 or p.size == 0:
        return k
    odds = p / (1.0 - p)
    cur = np.exp(math.log(n) + np.log(p) + (n - 1) * np.log1p(-p)) / q
    cum = cur.copy()
    active = u > cum
    j = 1
    while j < n and active.any():
        cur = cur * ((n - j) / (j + 1)) * odds
        j += 1
        cum = cum + cur
        k[active] = j
        active &= u > cum
    return k


class IncrementPlan:
    """Precomputed sampling layout for ``Binomial(dn, p_j)`` over a fixed vector."""

    def __init__(self, values: np.ndarray, dn: int) -> None:
        if dn < 1:
            raise DomainError("sample size increment must be positive")
        self.dn = int(dn)
        self.size = values.size
        with np.errstate(divide="ignore"):
            q = -np.expm1(dn * np.log1p(-values))
        self.n_head = int(np.count_nonzero(q >= HEAD_CUT))
        self.head_p = values[: self.n_head]
        self.tail_p = values[self.n_head :]
        self.tail_q = q[self.n_head :]
        neg_q = -self.tail_q
        starts, lengths, qmax = [], [], []
        i = 0
        m = self.tail_q.size
        while i < m and self.tail_q[i] > 0.0:
            qs = float(self.tail_q[i])
            end = int(np.searchsorted(neg_q, -0.5 * qs, side="left"))
            end = max(end, i + 1)
            starts.append(i)
            lengths.append(end - i)
            qmax.append(qs)
            i = end
        self.block_start = np.asarray(starts, dtype=np.int64)
        self.block_len = np.asarray(lengths, dtype=np.int64)
        self.block_q = np.asarray(qmax, dtype=np.float64)

    def draw(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(indices, counts)`` of features with a non-zero count."""
        head = rng.binomial(self.dn, self.head_p)
        hidx = np.flatnonzero(head)
        if self.block_len.size == 0:
            return hidx, head[hidx].astype(np.int64)
        cand = rng.binomial(self.block_len, self.block_q)
        picks = []
        for b in np.flatnonzero(cand):
            pos = rng.choice(int(self.block_len[b]), int(cand[b]), replace=False)
            picks.append(self.block_start[b] + np.sort(pos))
        if not picks:
            return hidx, head[hidx].astype(np.int64)
        cidx = np.concatenate(picks)
        qstar = np.repeat(self.block_q, cand)
        keep = rng.random(cidx.size) * qstar < self.tail_q[cidx]
        tidx = cidx[keep]
        tcnt = _zero_truncated_binomial(rng, self.dn, self.tail_p[tidx], self.tail_q[tidx])
        return (
            np.concatenate([hidx, tidx + self.n_head]),
            np.concatenate([head[hidx].astype(np.int64), tcnt]),
        )


def _merge_sparse(i1: np.ndarray, c1: np.ndarray, i2: np.ndarray, c2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if i1.size == 0:
        order = np.argsort(i2, kind="stable")
        return i2[order], c2[order]
    idx, inv = np.unique(np.concatenate([i1, i2]), return_inverse=True)
    cnt = np.zeros(idx.size, dtype=np.int64)
    np.add.at(cnt, inv, np.concatenate([c1, c2]))
    return idx, cnt


def _unseen_mass(p: ProbabilityVector, observed: np.ndarray, total: float) -> float:
    if len(p) <= DIRECT_MASS_LIMIT:
        mask = np.ones(len(p), dtype=bool)
        mask[observed] = False
        return math.fsum(p.values[mask]) + p.tail_mass_bound
    return (total - math.fsum(p.values[observed])) + p.tail_mass_bound


def _summary_row(p: ProbabilityVector, n: int, idx: np.ndarray, cnt: np.ndarray, R: int, total: float):
    knr = np.bincount(cnt, minlength=R + 1)[1 : R + 1]
    return int(idx.size), knr, _unseen_mass(p, idx, total)


def summarize(p: ProbabilityVector, s: SufficientStats, R: int = DEFAULT_R) -> StatisticsRecord:
    check_aligned(p, s)
    if R < 1:
        raise DomainError("R must be positive")
    idx = np.flatnonzero(s.counts)
    k_n, knr, m = _summary_row(p, s.n, idx, s.counts[idx], R, p.total_mass)
    return StatisticsRecord(s.n, k_n, tuple(int(x) for x in knr), m)


def sample_counts(p: ProbabilityVector, n: int, seed: int) -> SufficientStats:
    idx, cnt = IncrementPlan(p.values, n).draw(make_rng(seed))
    counts = np.zeros(len(p), dtype=np.int64)
    counts[idx] = cnt
    return SufficientStats(n, counts)


def _check_grid(n_grid: Sequence[int]) -> list[int]:
    grid = [int(n) for n in n_grid]
    if not grid or grid[0] < 1 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise DomainError("n_grid must be a non-empty strictly increasing sequence of positive integers")
    return grid


def _dense_rows(p, grid, rng, R):
    counts = np.zeros(len(p), dtype=np.int64)
    prev = 0
    out = []
    for n in grid:
        counts += rng.binomial(n - prev, p.values)
        seen = counts > 0
        knr = np.bincount(counts, minlength=R + 1)[1 : R + 1]
        out.append((n, int(np.count_nonzero(seen)), knr, math.fsum(p.values[~seen]) + p.tail_mass_bound))
        prev = n
    return out


def _trajectory_rows(p, grid, rng, R, plans, total):
    if len(p) <= DENSE_LIMIT:
        return _dense_rows(p, grid, rng, R)
    idx = np.empty(0, dtype=np.int64)
    cnt = np.empty(0, dtype=np.int64)
    prev = 0
    out = []
    for n in grid:
        dn = n - prev
        plan = plans.get(dn)
        if plan is None:
            plan = plans[dn] = IncrementPlan(p.values, dn)
        i2, c2 = plan.draw(rng)
        idx, cnt = _merge_sparse(idx, cnt, i2, c2)
        out.append((n,) + _summary_row(p, n, idx, cnt, R, total))
        prev = n
    return out


def _rowwise_rows(p, grid, rng, R, total):
    counts = np.zeros(len(p), dtype=np.int64)
    prev = 0
    out = []
    for n in grid:
        for _ in range(n - prev):
            counts += rng.random(len(p)) < p.values
        idx = np.flatnonzero(counts)
        out.append((n,) + _summary_row(p, n, idx, counts[idx], R, total))
        prev = n
    return out


def sample_trajectory(
    p: ProbabilityVector,
    n_grid: Sequence[int],
    seed: int,
    R: int = DEFAULT_R,
    method: str = "increments",
) -> list[StatisticsRecord]:
    """One growing sample observed at every ``n`` in ``n_grid``.

    ``method="increments"`` adds ``Binomial(n_i - n_{i-1}, p_j)`` to each count
    (the row sums of the new observations); ``method="rows"`` adds explicit
    Bernoulli rows one at a time and is only practical for small problems.
    """
    grid = _check_grid(n_grid)
    rng = make_rng(seed)
    total = p.total_mass
    if method == "increments":
        rows = _trajectory_rows(p, grid, rng, R, {}, total)
    elif method == "rows":
        rows = _rowwise_rows(p, grid, rng, R, total)
    else:
        raise ValueError(f"unknown method {method!r}")
    return [StatisticsRecord(n, k, tuple(int(x) for x in knr), m) for n, k, knr, m in rows]


@dataclass(frozen=True, eq=False)
class ReplicateDataset:
    """Column store of per-replicate statistics, ordered by (replicate, n)."""

    config_digest: str
    R: int
    replicate: np.ndarray
    n: np.ndarray
    k_n: np.ndarray
    k_nr: np.ndarray
    m_oracle: np.ndarray
    m_hat: np.ndarray
    tail_mass_bound: np.ndarray

    def __len__(self) -> int:
        return int(self.replicate.size)

    @property
    def n_replicates(self) -> int:
        return int(np.unique(self.replicate).size)

    def record(self, i: int) -> StatisticsRecord:
        return StatisticsRecord(int(self.n[i]), int(self.k_n[i]), tuple(int(x) for x in self.k_nr[i]), float(self.m_oracle[i]))

    def records(self) -> Iterator[tuple[int, int, StatisticsRecord]]:
        for i in range(len(self)):
            yield int(self.replicate[i]), int(self.n[i]), self.record(i)

    def at(self, n: int) -> "ReplicateDataset":
        """Rows observed at sample size ``n``."""
        mask = self.n == n
        return self.select(mask)

    def select(self, mask: np.ndarray) -> "ReplicateDataset":
        return ReplicateDataset(
            self.config_digest,
            self.R,
            self.replicate[mask],
            self.n[mask],
            self.k_n[mask],
            self.k_nr[mask],
            self.m_oracle[mask],
            self.m_hat[mask],
            self.tail_mass_bound[mask],
        )

    def to_bytes(self) -> bytes:
        h = [self.config_digest.encode(), str(self.R).encode()]
        for col in (self.replicate, self.n, self.k_n, self.k_nr, self.m_oracle, self.m_hat, self.tail_mass_bound):
            h.append(np.ascontiguousarray(col).tobytes())
        return b"|".join(h)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ReplicateDataset) and self.to_bytes() == other.to_bytes()

    __hash__ = None  # type: ignore[assignment]


def empty_dataset(config_digest: str, R: int) -> ReplicateDataset:
    z = np.empty(0, dtype=np.int64)
    f = np.empty(0, dtype=np.float64)
    return ReplicateDataset(config_digest, R, z, z, z, np.empty((0, R), dtype=np.int64), f, f, f)


def _resolve_fixed(source: Source) -> ProbabilityVector | None:
    if isinstance(source, ProbabilityVector):
        return source
    if isinstance(source, RegVarSpec):
        return power_law(source)
    if isinstance(source, GammaProcessSpec):
        return None
    raise TypeError(f"unsupported source {type(source).__name__}")


def _run_chunk(args) -> tuple[np.ndarray, ...]:
    source, fixed, grid, indices, master_seed, R = args
    plans: dict[int, IncrementPlan] = {}
    total = fixed.total_mass if fixed is not None else 0.0
    rep, ns, kn, knr, mo, tails = [], [], [], [], [], []
    for i in indices:
        seed = replicate_seed(master_seed, i)
        if fixed is None:
            p = gamma_process_draw(source, derive_seed(seed, 0))
            rows = _trajectory_rows(p, grid, make_rng(derive_seed(seed, 1)), R, {}, p.total_mass)
        else:
            p = fixed
            rows = _trajectory_rows(p, grid, make_rng(derive_seed(seed, 1)), R, plans, total)
        for n, k, kr, m in rows:
            rep.append(i)
            ns.append(n)
            kn.append(k)
            knr.append(kr)
            mo.append(m)
            tails.append(p.tail_mass_bound)
    return (
        np.asarray(rep, dtype=np.int64),
        np.asarray(ns, dtype=np.int64),
        np.asarray(kn, dtype=np.int64),
        np.asarray(knr, dtype=np.int64).reshape(-1, R),
        np.asarray(mo, dtype=np.float64),
        np.asarray(tails, dtype=np.float64),
    )


def default_digest(source: Source, grid: Sequence[int], m: int, master_seed: int, R: int) -> str:
    if isinstance(source, ProbabilityVector):
        src = hashlib.sha256(source.values.tobytes() + repr(source.tail_mass_bound).encode()).hexdigest()
    else:
        src = repr(source)
    payload = repr((src, list(grid), m, master_seed, R)).encode()
    return hashlib.sha256(payload).hexdigest()


def resolve_workers(workers: int) -> int:
    if workers < 0:
        raise DomainError("workers must be >= 0")
    return workers or (os.cpu_count() or 1)


def run_replicates(
    source: Source,
    n_grid: Sequence[int],
    m: int,
    master_seed: int,
    R: int = DEFAULT_R,
    workers: int = 1,
    config_digest: str | None = None,
) -> ReplicateDataset:
    """Simulate ``m`` independent trajectories.

    ``source`` is either a fixed probability vector (or a power-law spec), or a
    ``GammaProcessSpec``, in which case every replicate draws its own
    probabilities.  The output does not depend on ``workers``.
    """
    if m < 1:
        raise DomainError("replicate count m must be >= 1")
    if R < 1:
        raise DomainError("R must be positive")
    grid = _check_grid(n_grid)
    master_seed = int(master_seed) & MASK64
    fixed = _resolve_fixed(source)
    digest = config_digest or default_digest(source, grid, m, master_seed, R)
    workers = min(resolve_workers(workers), m)
    bounds = np.linspace(0, m, max(workers * 4, 1) + 1 if workers > 1 else 2).astype(int)
    tasks = [
        (source, fixed, grid, range(int(a), int(b)), master_seed, R)
        for a, b in zip(bounds[:-1], bounds[1:])
        if b > a
    ]
    if workers == 1:
        parts = [_run_chunk(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_chunk, tasks))
    rep, ns, kn, knr, mo, tails = (np.concatenate(cols) for cols in zip(*parts))
    m_hat = knr[:, 0] / ns
    return ReplicateDataset(digest, R, rep, ns, kn, knr, mo, m_hat, tails)


def check_dataset_n(dataset: ReplicateDataset, n: int) -> ReplicateDataset:
    sub = dataset.at(n)
    if len(sub) == 0:
        raise AlignmentError(f"dataset holds no records at n={n}")
    return sub
