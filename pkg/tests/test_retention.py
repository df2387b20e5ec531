"""Tests for retention solvers under the four premium loading rules."""

import numpy as np
import pytest

from xolopt import retention
from xolopt.distortion import DistortionMeasure
from xolopt.errors import (
    ConditionNotMet,
    ConditionViolated,
    DomainError,
    NonpositivePhi,
)
from xolopt.retention import (
    ConstantLoading,
    DecreasingLoading,
    SharpeLoading,
    StdDevLoading,
    condition_report,
    effective_rho,
    objective,
    solve_retention,
    solve_retention_edgeworth,
    stationarity_function,
    stop_loss_retention,
)
from xolopt.severity import ParetoII

VAR75 = DistortionMeasure.var(0.75)
PHI75 = 0.674489750196

# Stationary points for ParetoII(9, 8) at p = 0.75, frozen from 30-digit
# root finding on the closed-form moment identities.
D_DECREASING = 0.54724741814
D_STDDEV = 0.818944971281
D_SHARPE = 0.321769977934
D_CONSTANT = {10: 1.48506768838, 25: 2.68101897267, 100: 5.65568859629}


@pytest.fixture(scope="module")
def model():
    return ParetoII(9.0, 8.0)


class TestSolveRetention:
    def test_decreasing_frozen_optimum(self, model):
        sol = solve_retention(model, DecreasingLoading(0.5), VAR75, 100)
        assert sol.d_star == pytest.approx(D_DECREASING, abs=1e-8)
        assert sol.diagnostics.stationarity_residual < 1e-9

    def test_stddev_frozen_optimum(self, model):
        sol = solve_retention(model, StdDevLoading(0.5), VAR75, 100)
        assert sol.d_star == pytest.approx(D_STDDEV, abs=1e-5)
        assert sol.diagnostics.is_global_grid_min

    def test_sharpe_frozen_optimum(self, model):
        sol = solve_retention(model, SharpeLoading(0.5), VAR75, 100)
        assert sol.d_star == pytest.approx(D_SHARPE, abs=1e-5)

    @pytest.mark.parametrize("n", [10, 25, 100])
    def test_constant_frozen_optima(self, model, n):
        sol = solve_retention(model, ConstantLoading(0.3), VAR75, n)
        assert sol.d_star == pytest.approx(D_CONSTANT[n], abs=1e-8)

    @pytest.mark.parametrize("n", [10, 10000])
    def test_stddev_and_sharpe_minimizers_are_size_free(self, model, n):
        """The scaled objective drops the N factor, so d* ignores N."""
        sd = solve_retention(model, StdDevLoading(0.5), VAR75, n).d_star
        sh = solve_retention(model, SharpeLoading(0.5), VAR75, n).d_star
        assert sd == pytest.approx(D_STDDEV, abs=1e-5)
        assert sh == pytest.approx(D_SHARPE, abs=1e-5)

    @pytest.mark.parametrize(
        "rule", [ConstantLoading(0.3), DecreasingLoading(0.5)], ids=["const", "decr"]
    )
    def test_scale_equivariance(self, rule):
        """Scaling the severity by c scales the optimum by exactly c."""
        base = solve_retention(ParetoII(9.0, 8.0), rule, VAR75, 25).d_star
        scaled = solve_retention(ParetoII(9.0, 16.0), rule, VAR75, 25).d_star
        assert scaled == pytest.approx(2.0 * base, rel=1e-8)

    def test_monotone_in_loading(self, model):
        """A costlier reinsurer makes the insurer retain more."""
        d_delta = [
            solve_retention(model, DecreasingLoading(delta), VAR75, 100).d_star
            for delta in (0.2, 0.4, 0.6, 0.8)
        ]
        assert all(a < b for a, b in zip(d_delta, d_delta[1:]))
        d_rho = [
            solve_retention(model, ConstantLoading(rho), VAR75, 10).d_star
            for rho in (0.1, 0.2, 0.3)
        ]
        assert all(a < b for a, b in zip(d_rho, d_rho[1:]))

    def test_monotone_in_risk_level(self, model):
        """More tail-averse risk levels push the optimum down."""
        d_p = [
            solve_retention(
                model, DecreasingLoading(0.5), DistortionMeasure.var(p), 100
            ).d_star
            for p in (0.6, 0.75, 0.9, 0.95)
        ]
        assert all(a > b for a, b in zip(d_p, d_p[1:]))

    def test_es_is_more_conservative_than_var(self, model):
        """A larger volatility coefficient means ceding more."""
        d_var = solve_retention(model, DecreasingLoading(0.5), VAR75, 100).d_star
        d_es = solve_retention(
            model, DecreasingLoading(0.5), DistortionMeasure.es(0.75), 100
        ).d_star
        assert d_es < d_var

    def test_zero_phi_rejected(self, model):
        with pytest.raises(NonpositivePhi):
            solve_retention(model, ConstantLoading(0.3), DistortionMeasure.wang(0.0), 10)

    def test_bad_portfolio_size_rejected(self, model):
        with pytest.raises(DomainError):
            solve_retention(model, ConstantLoading(0.3), VAR75, 0)

    def test_json_payload_shape(self, model):
        out = solve_retention(model, DecreasingLoading(0.5), VAR75, 100).to_json_dict()
        assert out["rule"] == "decreasing"
        assert out["rule_params"] == {"delta": 0.5}
        assert out["measure"] == "var:0.75"
        assert set(out["diagnostics"]) >= {
            "bracket",
            "stationarity_residual",
            "condition_checks",
            "effective_rho",
        }


class TestStationarity:
    @pytest.mark.parametrize(
        "alpha,lam", [(9.0, 8.0), (2.5, 3.0), (5.0, 1.0)], ids=str
    )
    @pytest.mark.parametrize("p", [0.75, 0.9])
    @pytest.mark.parametrize(
        "rule",
        [DecreasingLoading(0.3), DecreasingLoading(0.8), ConstantLoading(0.1)],
        ids=["d03", "d08", "c01"],
    )
    def test_unique_sign_change_above_critical_quantile(self, alpha, lam, p, rule):
        """The stationarity quadratic crosses zero exactly once beyond d2."""
        model = ParetoII(alpha, lam)
        measure = DistortionMeasure.var(p)
        n = 10
        s = rule.rho * np.sqrt(n) if isinstance(rule, ConstantLoading) else rule.delta
        phi = measure.phi_normal()
        level = s * s / (s * s + phi * phi)
        d2 = lam * ((1.0 - level) ** (-1.0 / alpha) - 1.0)
        grid = np.geomspace(max(d2, 1e-9) * (1.0 + 1e-9), d2 * 1e4 + 10.0, 5000)
        vals = np.array(
            [stationarity_function(model, rule, measure, n, d) for d in grid]
        )
        flips = int(np.sum(np.sign(vals[:-1]) != np.sign(vals[1:])))
        assert flips == 1

    def test_residual_vanishes_at_solution(self, model):
        for rule in (ConstantLoading(0.3), DecreasingLoading(0.5)):
            sol = solve_retention(model, rule, VAR75, 25)
            resid = stationarity_function(model, rule, VAR75, 25, sol.d_star)
            assert abs(float(resid)) < 1e-9


class TestObjective:
    def test_decreasing_matches_moment_arithmetic(self, model):
        """Mean cost plus loaded premium plus the volatility term."""
        tm = model.truncated_moments(1.0)
        n = 100
        sigma = np.sqrt(tm.mu2 - tm.mu1**2)
        expected = (
            n * model.mean()
            + np.sqrt(n) * 0.5 * tm.nu1
            + np.sqrt(n) * sigma * PHI75
        )
        got = objective(model, DecreasingLoading(0.5), VAR75, n, 1.0)
        assert got == pytest.approx(expected, rel=1e-12)

    def test_value_at_optimum_is_minimal(self, model):
        sol = solve_retention(model, StdDevLoading(0.5), VAR75, 50)
        for d in (0.5 * sol.d_star, 2.0 * sol.d_star):
            assert objective(model, StdDevLoading(0.5), VAR75, 50, d) > sol.objective_value


class TestEffectiveRho:
    def test_constant_and_decreasing(self, model):
        assert effective_rho(model, ConstantLoading(0.3), 100, 1.0) == 0.3
        assert effective_rho(model, DecreasingLoading(0.5), 100, 1.0) == pytest.approx(
            0.05
        )

    def test_stddev_sharpe_product_identity(self, model):
        """The two spread-based loadings are reciprocal in sigma_nu."""
        d, n = 0.9, 64
        sd = effective_rho(model, StdDevLoading(0.5), n, d)
        sh = effective_rho(model, SharpeLoading(0.5), n, d)
        assert sd * sh == pytest.approx(0.25 / n, rel=1e-10)


class TestConditionReport:
    def test_pareto_all_pass(self, model):
        checks = condition_report(model, DecreasingLoading(0.5), VAR75, 100)
        assert checks == {"phi_positive": True, "atom_condition": True}
        checks = condition_report(model, StdDevLoading(0.5), VAR75, 100)
        assert checks["tail_index_gt_2"] is True
        checks = condition_report(model, SharpeLoading(0.5), VAR75, 100)
        assert checks["tail_index_in_2_4"] is None or isinstance(
            checks["tail_index_in_2_4"], bool
        )

    def test_sharpe_tail_window(self):
        inside = condition_report(ParetoII(3.0, 8.0), SharpeLoading(0.5), VAR75, 10)
        outside = condition_report(ParetoII(9.0, 8.0), SharpeLoading(0.5), VAR75, 10)
        assert inside["tail_index_in_2_4"] is True
        assert outside["tail_index_in_2_4"] is False

    def test_atom_violation_raises(self, model):
        """Too much probability mass at zero forbids a stationary point."""
        from xolopt.severity import EmpiricalLosses

        x = np.concatenate([np.zeros(60), np.linspace(0.5, 3.0, 40)])
        emp = EmpiricalLosses(x)
        checks = condition_report(emp, DecreasingLoading(0.5), VAR75, 100)
        assert checks["atom_condition"] is False
        with pytest.raises(ConditionViolated):
            solve_retention(emp, DecreasingLoading(0.5), VAR75, 100)


class TestEdgeworth:
    """Higher-order quantile corrections for the constant loading rule."""

    REFS_O1 = {10: 1.6276, 25: 2.9634, 100: 6.3361}
    REFS_O3 = {10: 1.5921, 25: 2.9969, 100: 6.6660}

    def test_calibration_constants(self):
        # pinned: this pair reproduces every reference optimum below; no
        # other sign/argument combination lands within 1e-2 of all of them
        assert retention.SKEW_TERM_SIGN == 1.0
        assert retention.HERMITE_AT_RISK_LEVEL is True

    @pytest.mark.parametrize("n", [10, 25, 100])
    def test_second_order_reference_optima(self, model, n):
        sol = solve_retention_edgeworth(model, ConstantLoading(0.3), 0.75, n, 2)
        assert sol.d_star == pytest.approx(self.REFS_O1[n], abs=1e-2)

    @pytest.mark.parametrize("n", [10, 25, 100])
    def test_third_order_reference_optima(self, model, n):
        sol = solve_retention_edgeworth(model, ConstantLoading(0.3), 0.75, n, 3)
        assert sol.d_star == pytest.approx(self.REFS_O3[n], abs=1e-2)

    def test_higher_order_shrinks_normal_approximation_gap(self, model):
        """Reference actual at N=100 is 7.1241; each order closes in on it."""
        actual = 7.1241
        plain = solve_retention(model, ConstantLoading(0.3), VAR75, 100).d_star
        order2 = solve_retention_edgeworth(model, ConstantLoading(0.3), 0.75, 100, 2).d_star
        order3 = solve_retention_edgeworth(model, ConstantLoading(0.3), 0.75, 100, 3).d_star
        assert abs(order2 - actual) < abs(plain - actual)
        assert abs(order3 - actual) < abs(order2 - actual)

    def test_sign_convention_is_load_bearing(self, model, monkeypatch):
        """Flipping the skew-term sign misses the frozen optimum."""
        monkeypatch.setattr(retention, "SKEW_TERM_SIGN", -1.0)
        try:
            got = solve_retention_edgeworth(
                model, ConstantLoading(0.3), 0.75, 100, 2
            ).d_star
        except Exception:
            return
        assert abs(got - self.REFS_O1[100]) > 1e-2

    def test_hermite_argument_is_load_bearing(self, model, monkeypatch):
        """Evaluating Hermite terms at the normal quantile misses too."""
        monkeypatch.setattr(retention, "HERMITE_AT_RISK_LEVEL", False)
        try:
            got = solve_retention_edgeworth(
                model, ConstantLoading(0.3), 0.75, 100, 2
            ).d_star
        except Exception:
            return
        assert abs(got - self.REFS_O1[100]) > 1e-2

    def test_rejects_unknown_order(self, model):
        with pytest.raises(DomainError):
            solve_retention_edgeworth(model, ConstantLoading(0.3), 0.75, 10, 5)


class TestStopLoss:
    def test_frozen_baseline(self, model):
        assert stop_loss_retention(model, 0.2, 0.75) == pytest.approx(
            0.163716285415, abs=1e-9
        )

    def test_loading_too_generous(self, model):
        """No finite retention when the premium beats the tail risk."""
        with pytest.raises(ConditionNotMet):
            stop_loss_retention(model, 5.0, 0.75)

    def test_monotone_in_loading(self, model):
        vals = [stop_loss_retention(model, rho, 0.75) for rho in (0.1, 0.2, 0.3)]
        assert all(a < b for a, b in zip(vals, vals[1:]))
