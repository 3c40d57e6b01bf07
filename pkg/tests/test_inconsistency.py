import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from missmass.errors import DomainError
from missmass.generators import RegVarSpec
from missmass.inconsistency import (
    HEADER,
    constant_C,
    inconsistency_experiment,
    minimizer_y,
    outside_band,
    posterior_total_mass_check,
)
from missmass.sampler import ReplicateDataset


def f(y, e):
    return 1 + np.exp(-(1 + 3 * e) * y) - np.exp(-(1 - 3 * e) * y)


def grid_min(e):
    """Two-stage grid search over (0, 50]."""
    y = np.linspace(1e-6, 50, 500_001)
    i = int(np.argmin(f(y, e)))
    fine = np.linspace(y[max(i - 1, 0)], y[i + 1], 200_001)
    return float(f(fine, e).min())


class TestConstant:
    def test_frozen_value(self):
        assert minimizer_y(0.1) == pytest.approx(math.log(13 / 7) / 0.6, rel=1e-15)
        assert minimizer_y(0.1) == pytest.approx(1.031732, abs=5e-7)
        # 1 + exp(-1.3 y*) - exp(-0.7 y*) = 1 + 0.2615181 - 0.4856766
        assert constant_C(0.1) == pytest.approx(0.7758416, abs=1e-7)
        assert constant_C(0.1) == pytest.approx(grid_min(0.1), abs=1e-9)

    def test_against_grid_for_fifty_epsilons(self):
        for e in np.linspace(0.01, 0.32, 50):
            assert abs(constant_C(e) - grid_min(e)) < 1e-9

    def test_limits(self):
        # a narrower band is easier to miss: C rises to 1 as the band closes
        small = [constant_C(e) for e in (0.1, 0.03, 0.01, 0.001, 1e-5)]
        assert all(b > a for a, b in zip(small, small[1:]))
        assert 1 - small[-1] < 1e-3
        # and falls to 0 as 3e approaches 1
        wide = [constant_C(e) for e in (0.2, 0.3, 0.33, 0.3333)]
        assert all(b < a for a, b in zip(wide, wide[1:]))
        assert wide[-1] < 0.01 and all(v > 0 for v in wide)

    @given(st.floats(0.001, 0.333), st.floats(1e-6, 200))
    def test_global_minimum(self, e, y):
        assert constant_C(e) <= float(f(y, e)) + 1e-15

    @pytest.mark.parametrize("e", [0.0, -0.1, 1 / 3, 0.5])
    def test_domain(self, e):
        with pytest.raises(DomainError):
            constant_C(e)


class TestPosterior:
    @pytest.mark.parametrize("n", [0, 10])
    def test_small_run(self, n):
        chk = posterior_total_mass_check(n, 2000, seed=17, threshold=0.04)
        assert chk.passed
        assert chk.sandwich_violations == 0
        assert abs(chk.mean_z) < 4

    def test_domain(self):
        with pytest.raises(DomainError):
            posterior_total_mass_check(-1, 10, 0)
        with pytest.raises(DomainError):
            posterior_total_mass_check(0, 0, 0)

    @given(st.floats(0, 30))
    def test_sandwich_termwise(self, s):
        m = -math.expm1(-s)
        assert s - s * s / 2 <= m <= s


def toy_dataset(m_hat, m_oracle, tail=1e-10):
    k = len(m_hat)
    m_oracle = np.asarray(m_oracle, dtype=float)
    return ReplicateDataset(
        "t", 1, np.arange(k), np.full(k, 100), np.zeros(k, dtype=np.int64), np.zeros((k, 1), dtype=np.int64),
        m_oracle, np.asarray(m_hat, dtype=float), np.full(k, tail),
    )


class TestExperiment:
    def test_outside_band_counts_degenerate(self):
        ds = toy_dataset([0.1, 0.2, 0.0, 0.05], [0.1, 0.1, 5e-10, 0.1])
        grid, count, degenerate, frac, quant, mean = outside_band(ds, 0.1)
        assert list(grid) == [100] and count[0] == 3 and degenerate[0] == 1
        assert frac[0] == pytest.approx(2 / 3)
        assert quant.shape == (1, 5)

    def test_validation(self):
        with pytest.raises(DomainError):
            inconsistency_experiment([10], 0, 0.1, 1)
        with pytest.raises(DomainError):
            inconsistency_experiment([10], 100, 0.2, 1)

    def test_fraction_persists_and_control_shrinks(self):
        rep, data, control = inconsistency_experiment(
            [100, 1000, 10_000], 150, 0.1, 5, control=RegVarSpec(0.5, 0.1, 0.0, 1e-9)
        )
        assert rep.header == HEADER
        assert rep.epsilon_bar == 0.2
        assert rep.analytic_floor == constant_C(0.2)
        assert rep.persists
        assert np.all((rep.frac_outside >= 0) & (rep.frac_outside <= 1))
        assert rep.control_frac_outside[-1] < rep.control_frac_outside[0]
        assert len(data) == 450 and len(control) == 450
        assert rep.separated in (True, False)

    def test_no_control(self):
        rep, _, control = inconsistency_experiment([50], 100, 0.1, 2)
        assert control is None and rep.separated is None
