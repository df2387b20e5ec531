"""Tests for severity models, empirical distributions, and loss summaries."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from xolopt.errors import AllZero, DomainError, NonfiniteMoment
from xolopt.severity import (
    EmpiricalLosses,
    ParetoII,
    kde_density,
    summary_and_lorenz,
)

# Closed-form values for ParetoII(9, 8) at d = 1, frozen from 30-digit
# arithmetic on the survival-integral identities.
SBAR_1 = 0.346439416115
MU1_1 = 0.610255656871
MU2_1 = 0.504025859982
NU1_1 = 0.389744343129
NU2_1 = 1.00219973947


class TestParetoII:
    """Closed forms, sampling, and validation for the Pareto severity."""

    def setup_method(self):
        self.model = ParetoII(9.0, 8.0)

    def test_survival_basics(self):
        assert self.model.survival(0.0) == pytest.approx(1.0)
        assert self.model.survival(8.0) == pytest.approx(2.0 ** -9.0)
        assert self.model.survival(1e9) < 1e-60

    def test_mean_and_second_moment(self):
        assert self.model.mean() == pytest.approx(1.0, abs=1e-14)
        assert self.model.second_moment() == pytest.approx(16.0 / 7.0, abs=1e-13)

    def test_truncated_moments_closed_form(self):
        tm = self.model.truncated_moments(1.0)
        assert tm.sbar == pytest.approx(SBAR_1, abs=1e-10)
        assert tm.mu1 == pytest.approx(MU1_1, abs=1e-10)
        assert tm.mu2 == pytest.approx(MU2_1, abs=1e-10)
        assert tm.nu1 == pytest.approx(NU1_1, abs=1e-10)
        assert tm.nu2 == pytest.approx(NU2_1, abs=1e-10)

    @pytest.mark.parametrize("alpha,lam", [(9.0, 8.0), (2.5, 3.0), (5.0, 1.0)])
    @pytest.mark.parametrize("d", [0.3, 1.0, 4.0])
    def test_moments_match_quadrature(self, alpha, lam, d):
        """Survival-integral quadrature agrees with closed forms to 1e-8."""
        model = ParetoII(alpha, lam)
        tm = model.truncated_moments(d)
        mu1, _ = integrate.quad(model.survival, 0.0, d)
        nu1, _ = integrate.quad(model.survival, d, np.inf)
        mu2, _ = integrate.quad(lambda x: 2.0 * x * model.survival(x), 0.0, d)
        nu2, _ = integrate.quad(lambda x: 2.0 * (x - d) * model.survival(x), d, np.inf)
        assert tm.mu1 == pytest.approx(mu1, abs=1e-8)
        assert tm.nu1 == pytest.approx(nu1, abs=1e-8)
        assert tm.mu2 == pytest.approx(mu2, abs=1e-8)
        assert tm.nu2 == pytest.approx(nu2, abs=1e-8)

    @pytest.mark.parametrize("d", [0.2, 1.0, 3.0])
    def test_moment_derivatives_by_finite_difference(self, d):
        """mu1' = survival and nu2' = -2 nu1, central difference at 1e-4."""
        h = 1e-5
        lo = self.model.truncated_moments(d - h)
        hi = self.model.truncated_moments(d + h)
        mid = self.model.truncated_moments(d)
        assert (hi.mu1 - lo.mu1) / (2 * h) == pytest.approx(mid.sbar, abs=1e-4)
        assert (hi.nu2 - lo.nu2) / (2 * h) == pytest.approx(-2.0 * mid.nu1, abs=1e-4)
        assert (hi.mu2 - lo.mu2) / (2 * h) == pytest.approx(
            2.0 * d * mid.sbar, abs=1e-4
        )
        assert (hi.nu1 - lo.nu1) / (2 * h) == pytest.approx(-mid.sbar, abs=1e-4)

    @given(
        d=st.floats(0.05, 50.0),
        alpha=st.floats(2.2, 12.0),
        lam=st.floats(0.5, 20.0),
    )
    def test_moment_identities(self, d, alpha, lam):
        """Capped plus excess pieces recombine into the full moments."""
        model = ParetoII(alpha, lam)
        tm = model.truncated_moments(d)
        assert tm.mu1 + tm.nu1 == pytest.approx(model.mean(), rel=1e-10)
        full_m2 = model.second_moment()
        assert tm.mu2 + tm.nu2 + 2.0 * d * tm.nu1 == pytest.approx(full_m2, rel=1e-9)
        assert 0.0 < tm.sbar < 1.0
        assert tm.mu2 <= d * tm.mu1 + 1e-12

    def test_infinite_mean_rejected(self):
        with pytest.raises((DomainError, NonfiniteMoment)):
            ParetoII(0.9, 8.0).mean()

    def test_sampling_determinism_and_range(self):
        a = self.model.sample(500, 42)
        b = self.model.sample(500, 42)
        np.testing.assert_array_equal(a, b)
        assert np.all(a > 0.0)
        assert self.model.sample(500, 43)[0] != a[0]

    def test_sample_matches_survival(self):
        x = self.model.sample(200000, 12)
        for q in (0.5, 1.0, 2.0):
            frac = float(np.mean(x > q))
            assert frac == pytest.approx(self.model.survival(q), abs=0.005)

    def test_density_integrates_to_one(self):
        val, _ = integrate.quad(self.model.density, 0.0, np.inf)
        assert val == pytest.approx(1.0, abs=1e-9)


class TestHigherTruncatedMoments:
    def test_skewness_approaches_untruncated_value(self):
        """At a huge cap the capped skewness equals the full skewness."""
        hm = ParetoII(9.0, 8.0).higher_truncated_moments(1e6)
        assert hm.kappa3 == pytest.approx(2.93960, abs=1e-3)

    def test_kappa_positive_for_right_skewed(self):
        hm = ParetoII(9.0, 8.0).higher_truncated_moments(2.0)
        assert hm.kappa3 > 0.0
        assert np.isfinite(hm.kappa4)


class TestEmpiricalLosses:
    def test_survival_is_strict_count(self):
        emp = EmpiricalLosses([1.0, 2.0, 2.0, 5.0])
        assert emp.survival(0.5) == pytest.approx(1.0)
        assert emp.survival(2.0) == pytest.approx(0.25)
        assert emp.survival(5.0) == 0.0

    def test_quantile_order_statistic(self):
        emp = EmpiricalLosses([3.0, 1.0, 2.0, 4.0])
        # ceil(n p) rule: p = 0.5 picks the 2nd order statistic
        assert emp.quantile(0.5) == pytest.approx(2.0)
        assert emp.quantile(0.75) == pytest.approx(3.0)
        assert emp.quantile(0.76) == pytest.approx(4.0)

    def test_moment_grid_matches_direct_sums(self):
        rng = np.random.default_rng(3)
        x = rng.pareto(4.0, size=400) * 2.0
        emp = EmpiricalLosses(x)
        for d in (0.1, 0.7, 3.0):
            g = emp.moment_grid(np.array([d]))
            capped = np.minimum(x, d)
            assert g["mu1"][0] == pytest.approx(capped.mean(), rel=1e-12)
            assert g["mu2"][0] == pytest.approx((capped**2).mean(), rel=1e-12)
            assert g["nu1"][0] == pytest.approx(
                np.maximum(x - d, 0.0).mean(), rel=1e-12
            )
            assert g["nu2"][0] == pytest.approx(
                (np.maximum(x - d, 0.0) ** 2).mean(), rel=1e-12
            )
            assert g["sbar"][0] == pytest.approx(np.mean(x > d), rel=1e-12)

    def test_truncated_moments_agree_with_grid(self):
        x = np.array([0.2, 0.9, 1.4, 2.2, 7.0])
        emp = EmpiricalLosses(x)
        tm = emp.truncated_moments(1.0)
        g = emp.moment_grid(np.array([1.0]))
        assert tm.mu1 == pytest.approx(g["mu1"][0], rel=1e-14)
        assert tm.nu2 == pytest.approx(g["nu2"][0], rel=1e-14)

    def test_bootstrap_resampling_determinism(self):
        emp = EmpiricalLosses(np.arange(1.0, 51.0))
        rng1 = np.random.default_rng(9)
        rng2 = np.random.default_rng(9)
        np.testing.assert_array_equal(
            emp.sample_rng(30, rng1), emp.sample_rng(30, rng2)
        )

    def test_rejects_negative_losses(self):
        with pytest.raises(DomainError):
            EmpiricalLosses([1.0, -0.5, 2.0])


class TestKdeDensity:
    def test_matches_hand_gaussian_sum(self):
        x = np.array([1.0, 2.0])
        h = 0.5
        at = 1.5
        expected = np.mean(
            np.exp(-0.5 * ((at - x) / h) ** 2) / (h * math.sqrt(2 * math.pi))
        )
        got = kde_density(x, np.array([at]), bandwidth=h)
        assert got[0] == pytest.approx(expected, rel=1e-12)

    def test_integrates_to_one(self):
        rng = np.random.default_rng(5)
        x = rng.exponential(1.0, size=300)
        grid = np.linspace(-3.0, 15.0, 4000)
        dens = kde_density(x, grid, bandwidth=0.2)
        assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-3)


class TestSummaryAndLorenz:
    def test_explicit_small_sample(self):
        out = summary_and_lorenz([1.0, 1.0, 2.0])
        assert out.count == 3
        assert out.mean == pytest.approx(4.0 / 3.0)
        assert out.median == pytest.approx(1.0)
        assert out.max == pytest.approx(2.0)

    def test_lorenz_endpoints_and_shape(self):
        rng = np.random.default_rng(8)
        out = summary_and_lorenz(rng.pareto(3.0, size=250) + 0.01)
        lor = out.lorenz
        assert tuple(lor[0]) == (0.0, 0.0)
        assert tuple(lor[-1]) == pytest.approx((1.0, 1.0))
        shares = np.diff(lor[:, 1])
        assert np.all(shares >= -1e-15)
        # convexity: ordered claims make increments nondecreasing
        assert np.all(np.diff(shares) >= -1e-12)
        assert np.all(lor[:, 1] <= lor[:, 0] + 1e-12)

    def test_degenerate_inputs(self):
        with pytest.raises(DomainError):
            summary_and_lorenz([])
        with pytest.raises(AllZero):
            summary_and_lorenz([0.0, 0.0])
