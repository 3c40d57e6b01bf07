import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from missmass.bounds import (
    empirical_tail_compare,
    knr_tail_bound,
    mm_left_tail_bound,
    mm_right_tail_bound,
    mm_right_tail_chernoff,
    sub_gamma_chernoff,
    variance_factor_minus,
    variance_factor_plus,
)
from missmass.errors import AlignmentError, DomainError
from missmass.generators import finite_uniform, geometric
from missmass.model import ProbabilityVector, as_probability_vector, expected_k_n, expected_m_n, sum_p2_survival
from missmass.sampler import empty_dataset, run_replicates

probs = st.lists(st.floats(1e-4, 1.0), min_size=1, max_size=20).map(as_probability_vector)


def pv(*v):
    return ProbabilityVector(np.array(v, dtype=float))


def closed_form_sub_gamma(x, v, c):
    # Legendre transform of l^2 v / (2 (1 - c l)): (v / c^2) h(c x / v), h(u) = 1 + u - sqrt(1 + 2u)
    u = c * x / v
    return math.exp(-v / c**2 * (1 + u - math.sqrt(1 + 2 * u)))


class TestVarianceFactors:
    def test_minus_examples(self):
        assert variance_factor_minus(pv(0.5), 3) == pytest.approx(0.03125, rel=1e-14)
        assert variance_factor_minus(pv(1.0), 7) == 0.0
        assert variance_factor_minus(pv(0.3, 0.2), 2) == pytest.approx(0.0697, rel=1e-13)

    def test_plus_examples(self):
        assert variance_factor_plus(pv(1.0), 4) == 0.25
        assert variance_factor_plus(pv(0.5), 3) == pytest.approx(0.583333, abs=5e-7)
        with pytest.raises(DomainError):
            variance_factor_plus(pv(0.5), 2)

    @given(probs, st.integers(1, 500))
    def test_minus_identity(self, p, n):
        assert variance_factor_minus(p, n) == pytest.approx(sum_p2_survival(p, n), rel=1e-12, abs=1e-300)

    @given(probs, st.integers(3, 500))
    def test_nonnegative(self, p, n):
        assert variance_factor_minus(p, n) >= 0 and variance_factor_plus(p, n) >= 0


class TestTailBounds:
    def test_left_examples(self):
        assert mm_left_tail_bound(pv(0.5), 3, 0.0) == 1.0
        assert mm_left_tail_bound(pv(0.5), 3, 0.1) == pytest.approx(0.852144, abs=5e-7)
        assert mm_left_tail_bound(pv(0.5), 3, 0.1) == pytest.approx(math.exp(-0.16), rel=1e-14)

    def test_right_examples(self):
        assert mm_right_tail_bound(pv(0.5), 3, 0.0) == 1.0
        assert mm_right_tail_bound(pv(0.5), 3, 0.5) == pytest.approx(0.4506, abs=1e-4)
        v, n, x = 7 / 12, 3, 0.5
        u = x / (n * v)
        assert mm_right_tail_bound(pv(0.5), 3, 0.5) == pytest.approx(math.exp(-v * n * n * (1 + u - math.sqrt(1 + u))), rel=1e-13)

    def test_knr_examples(self):
        assert knr_tail_bound(pv(0.5), 2, 1, 0.0) == 1.0
        assert knr_tail_bound(pv(0.5), 2, 1, 1.0) == 1.0
        assert knr_tail_bound(pv(0.5), 2, 1, 3.0) == pytest.approx(2 * math.exp(-3), rel=1e-14)
        assert knr_tail_bound(pv(0.5), 2, 1, 3.0) == pytest.approx(0.09957, abs=5e-6)

    def test_negative_x(self):
        for f in (mm_left_tail_bound, mm_right_tail_bound):
            with pytest.raises(DomainError):
                f(pv(0.5), 3, -0.1)

    @given(probs, st.integers(3, 300), st.lists(st.floats(0, 2), min_size=2, max_size=15))
    def test_monotone_and_in_unit_interval(self, p, n, xs):
        xs = sorted(set(xs))
        for f in (mm_left_tail_bound, mm_right_tail_bound, mm_right_tail_chernoff):
            vals = [f(p, n, x) for x in xs]
            assert all(0 <= v <= 1 for v in vals)
            assert all(b <= a * (1 + 1e-9) for a, b in zip(vals, vals[1:]))
        k = [knr_tail_bound(p, n, 1, 10 * x) for x in xs]
        assert all(0 <= v <= 1 for v in k) and all(b <= a for a, b in zip(k, k[1:]))

    @given(st.floats(1e-4, 10), st.floats(1e-4, 10), st.floats(1e-3, 1))
    def test_chernoff_matches_closed_form(self, x, v, c):
        want = closed_form_sub_gamma(x, v, c)
        assert sub_gamma_chernoff(x, v, c) == pytest.approx(want, rel=1e-6, abs=1e-300)

    @given(st.floats(1e-3, 5), st.floats(1e-3, 5), st.integers(3, 1000))
    def test_printed_right_tail_vs_chernoff(self, x, v, n):
        # the printed exponent uses sqrt(1 + u) and is never weaker than the Chernoff exponent
        from missmass.bounds import _right_raw

        assert _right_raw(x, v, n) <= sub_gamma_chernoff(x, v, 1 / n) * (1 + 1e-6)


@pytest.fixture(scope="module")
def small_exact_sample():
    p = pv(0.6, 0.3, 0.1)
    n = 5
    ds = run_replicates(p, [n], 100_000, 8)
    return p, n, ds.m_oracle - expected_m_n(p, n)


class TestLogLaplace:
    """Direct check of the moment generating function inequalities behind the bounds."""

    @pytest.mark.parametrize("scale", [-5.0, -1.0, -0.1])
    def test_left_sub_gaussian(self, small_exact_sample, scale):
        p, n, dev = small_exact_sample
        lam = scale / expected_m_n(p, n)
        z = np.exp(lam * dev)
        se = z.std(ddof=1) / math.sqrt(z.size)
        assert z.mean() <= math.exp(lam**2 * variance_factor_minus(p, n) / 2) + 5 * se

    @pytest.mark.parametrize("frac", [0.1, 0.5, 0.9])
    def test_right_sub_gamma(self, small_exact_sample, frac):
        p, n, dev = small_exact_sample
        lam = frac * n
        z = np.exp(lam * dev)
        se = z.std(ddof=1) / math.sqrt(z.size)
        assert z.mean() <= math.exp(lam**2 * variance_factor_plus(p, n) / (2 * (1 - lam / n))) + 5 * se


class TestEmpiricalCompare:
    def test_empty_dataset(self):
        with pytest.raises(AlignmentError):
            empirical_tail_compare(empty_dataset("d", 10), pv(0.5), 3)

    def test_missing_n(self):
        ds = run_replicates(pv(0.5), [4], 10, 1)
        with pytest.raises(AlignmentError):
            empirical_tail_compare(ds, pv(0.5), 5)

    def test_beyond_observed_deviation(self):
        p = geometric(0.5, 1e-6)
        ds = run_replicates(p, [20], 2000, 4)
        rep = empirical_tail_compare(ds, p, 20, x_grid=[0.0, 10.0], k_grid=[0.0, 1e3])
        assert rep.empirical_left[1] == rep.empirical_right[1] == rep.empirical_knr[1] == 0.0
        assert rep.left_bounds[0] == rep.right_bounds[0] == 1.0

    @pytest.mark.parametrize("p", [geometric(0.5), finite_uniform(100, 0.01), finite_uniform(5, 0.3)])
    @pytest.mark.parametrize("n", [10, 100])
    def test_proven_bounds_hold(self, p, n):
        ds = run_replicates(p, [n], 20_000, 13)
        rep = empirical_tail_compare(ds, p, n)
        assert not rep.violation_left.any()
        assert not rep.violation_knr.any()
        emp, se = rep.empirical_right, rep.stderr_right
        assert np.all(emp <= rep.right_bounds_chernoff + 4 * se)

    def test_report_shapes(self):
        p = finite_uniform(10, 0.1)
        ds = run_replicates(p, [10], 500, 2)
        rep = empirical_tail_compare(ds, p, 10, x_grid=np.linspace(0, 0.3, 7))
        assert rep.left_bounds.shape == rep.empirical_right.shape == (7,)
        assert rep.v_minus == variance_factor_minus(p, 10)
        assert rep.v_plus == pytest.approx(2 * expected_k_n(p, 10) / 80)
        assert rep.m == 500
