import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import gamma as gamma_fn

from missmass.asymptotics import (
    consistency_diagnostic,
    expected_k_nr_power_law,
    karlin_constant,
    karlin_ratio,
    phi_vs_ek_gap,
    slowly_varying_part,
)
from missmass.errors import DomainError, UnsupportedSpecError
from missmass.generators import RegVarSpec, finite_uniform, geometric, power_law
from missmass.model import ProbabilityVector, as_probability_vector, expected_k_nr, phi_nr
from missmass.sampler import ReplicateDataset, run_replicates

probs = st.lists(st.floats(1e-5, 1.0), min_size=1, max_size=25).map(as_probability_vector)


def pv(*v):
    return ProbabilityVector(np.array(v, dtype=float))


class TestKarlinConstant:
    def test_examples(self):
        assert karlin_constant(0.5, 1) == pytest.approx(0.5 * math.sqrt(math.pi), rel=1e-14)
        assert karlin_constant(0.5, 1) == pytest.approx(0.886227, abs=5e-7)
        assert karlin_constant(0.5, 2) == pytest.approx(0.221557, abs=5e-7)

    @given(st.floats(0.001, 0.999))
    def test_recurrence(self, a):
        assert karlin_constant(a, 2) / karlin_constant(a, 1) == pytest.approx((1 - a) / 2, rel=1e-10)

    def test_recurrence_twenty_alphas(self):
        rng = np.random.default_rng(4)
        for a in rng.uniform(0.01, 0.99, 20):
            assert abs(karlin_constant(a, 2) / karlin_constant(a, 1) - (1 - a) / 2) <= 1e-10 * (1 - a) / 2

    @pytest.mark.parametrize("a,r", [(0.3, 1), (0.7, 3), (0.5, 6)])
    def test_against_gamma(self, a, r):
        assert karlin_constant(a, r) == pytest.approx(a * gamma_fn(r - a) / math.factorial(r), rel=1e-13)

    def test_domain(self):
        with pytest.raises(DomainError):
            karlin_constant(1.0, 1)
        with pytest.raises(DomainError):
            karlin_constant(0.5, 0)


class TestKarlinRatio:
    @pytest.mark.parametrize("beta,thr", [(0.0, 1e-13), (1.0, 1e-12)])
    def test_untruncated_expectation_brackets_long_vector(self, beta, thr):
        # dropped features have p < thr: they add at most n * tail to K_{n,1}
        # and at most n^2/2 * thr * tail to K_{n,2}; the midpoint-rule tail adds ~1e-8 relative
        spec = RegVarSpec(0.5, 0.1 if beta == 0 else 0.05, beta, thr)
        p = power_law(spec)
        t = p.tail_mass_bound
        for n, r, slack in ((100, 1, 100 * t), (3000, 1, 3000 * t), (1000, 2, 1000**2 / 2 * thr * t)):
            e = expected_k_nr(p, n, r)
            d = expected_k_nr_power_law(spec, n, r) - e
            assert -1e-7 * e <= d <= slack + 1e-7 * e

    def test_close_to_one_at_large_n(self):
        spec = RegVarSpec(0.5, 0.1)
        r6 = karlin_ratio(spec, 10**6, 1)
        assert abs(r6 - 1) <= 0.05
        assert abs(karlin_ratio(spec, 100, 1) - 1) > abs(r6 - 1)

    def test_slow_variation_needs_flag(self):
        spec = RegVarSpec(0.5, 0.05, 1.0)
        with pytest.raises(UnsupportedSpecError):
            karlin_ratio(spec, 1000, 1)
        assert karlin_ratio(spec, 1000, 1, approximate_slow_variation=True) > 0

    def test_slowly_varying_constant(self):
        assert slowly_varying_part(RegVarSpec(0.25, 0.1), 1e9) == pytest.approx(0.1**0.25)

    def test_phi_against_asymptote(self):
        p = power_law(RegVarSpec(0.5, 0.1, 0.0, 1e-12))
        n = 10**4
        asym = 0.5 * math.gamma(0.5) * 0.1**0.5 * n**0.5
        assert phi_nr(p, n, 1) / asym == pytest.approx(1.0, abs=0.05)
        assert phi_nr(p, n, 1) == pytest.approx(expected_k_nr(p, n, 1), rel=0.01)


class TestGap:
    def test_examples(self):
        g = phi_vs_ek_gap(pv(0.5), 10)
        assert g.holds
        gap, budget = phi_vs_ek_gap(pv(1.0), 7)
        assert gap == pytest.approx(math.exp(-7), rel=1e-9) and gap <= budget

    def test_relative_gap_shrinks(self):
        p = power_law(RegVarSpec(0.5, 0.1, 0.0, 1e-10))
        rel = [phi_vs_ek_gap(p, n).r_gap / phi_nr(p, n, 1) for n in (10, 100, 1000, 10_000)]
        assert all(b < a for a, b in zip(rel, rel[1:]))

    def test_needs_n_above_two(self):
        with pytest.raises(DomainError):
            phi_vs_ek_gap(pv(0.5), 2)

    @pytest.mark.parametrize("p", [geometric(0.5), finite_uniform(100, 0.01), power_law(RegVarSpec(0.5, 0.1, 0.0, 1e-9))])
    @pytest.mark.parametrize("n", [3, 10, 100, 1000, 10_000])
    def test_aggregate_lemma_on_matrix(self, p, n):
        assert phi_vs_ek_gap(p, n).holds

    @given(probs, st.integers(3, 3000), st.integers(1, 3))
    def test_implied_constant_finite(self, p, n, r):
        g = phi_vs_ek_gap(p, n, r)
        assert g.implied_c >= 0 and (math.isfinite(g.implied_c) or g.r_gap == 0 or g.implied_c == math.inf)


def synthetic(ratios_by_n, m_oracle=0.1):
    rows = [(i, n, r) for n, ratios in ratios_by_n.items() for i, r in enumerate(ratios)]
    rep = np.array([r[0] for r in rows])
    ns = np.array([r[1] for r in rows])
    ratio = np.array([r[2] for r in rows], dtype=float)
    m = np.full(ratio.size, m_oracle)
    return ReplicateDataset("x", 1, rep, ns, np.zeros_like(ns), np.zeros((ns.size, 1), dtype=np.int64), m, ratio * m, np.zeros(ns.size))


class TestConsistencyDiagnostic:
    def test_all_ones(self):
        d = consistency_diagnostic(synthetic({10: [1.0] * 5, 20: [1.0] * 5}))
        np.testing.assert_array_equal(d.frac_within, [1.0, 1.0])
        np.testing.assert_array_equal(d.count, [5, 5])

    def test_fraction(self):
        d = consistency_diagnostic(synthetic({10: [1.0, 1.05, 1.2, 0.5]}), epsilon=0.1)
        assert d.frac_within[0] == 0.5 and d.frac_outside[0] == 0.5

    def test_zero_mass_is_degenerate(self):
        d = consistency_diagnostic(synthetic({10: [1.0, 1.0]}, m_oracle=0.0))
        assert d.degenerate[0] == 2 and d.count[0] == 0 and math.isnan(d.frac_within[0])

    def test_variance_shrinks_on_power_law(self):
        p = power_law(RegVarSpec(0.5, 0.1, 0.0, 1e-10))
        d = consistency_diagnostic(run_replicates(p, [100, 1000, 10_000], 300, 12))
        assert np.all(np.diff(d.std) < 0)
        assert np.all((0 <= d.frac_within) & (d.frac_within <= 1))
