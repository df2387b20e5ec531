"""Nonparametric retention estimators with delta-method standard errors.

Each estimator plugs empirical moments into the corresponding retention
objective, solves for the minimiser, and then linearises the stationarity
condition around the estimate to obtain an asymptotic standard error and a
Wald confidence interval.  The three loading rules with nondegenerate
large-sample limits are covered: decreasing, standard-deviation, and
Sharpe-ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distortion import DistortionMeasure, normal_quantile
from .errors import (
    AtomConditionViolated,
    DegenerateVariance,
    DomainError,
    NoInteriorMinimum,
    NumericalFailure,
)
from .numerics import expand_and_solve, grid_then_golden, log_spaced_grid
from .retention import (
    DecreasingLoading,
    LoadingRule,
    SharpeLoading,
    StdDevLoading,
    condition_report,
)
from .severity import EmpiricalLosses, kde_density

MIN_SAMPLE = 30


@dataclass
class EstimationResult:
    """Point estimate, standard error, and Wald interval for d*."""

    d_hat: float
    std_error: float
    ci: tuple[float, float]
    level: float
    rule: LoadingRule
    measure: DistortionMeasure
    n: int
    coefficients: dict[str, float]
    sigma_hat: np.ndarray
    warnings: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        from .retention import _rule_params

        return {
            "rule": self.rule.name,
            "rule_params": _rule_params(self.rule),
            "measure": self.measure.describe(),
            "n": self.n,
            "d_hat": self.d_hat,
            "std_error": self.std_error,
            "ci": list(self.ci),
            "level": self.level,
            "coefficients": self.coefficients,
            "warnings": list(self.warnings),
        }


def _as_empirical(losses) -> EmpiricalLosses:
    emp = losses if isinstance(losses, EmpiricalLosses) else EmpiricalLosses(losses)
    if emp.n < MIN_SAMPLE:
        raise DomainError(
            f"need at least {MIN_SAMPLE} losses for asymptotic inference, got {emp.n}"
        )
    return emp


def _wald_ci(d_hat: float, se: float, level: float) -> tuple[float, float]:
    if not 0.0 < level < 1.0:
        raise DomainError(f"confidence level must be in (0, 1), got {level}")
    z = normal_quantile(0.5 * (1.0 + level))
    return (d_hat - z * se, d_hat + z * se)


def estimate_decreasing(
    losses,
    delta: float,
    measure: DistortionMeasure,
    level: float = 0.95,
) -> EstimationResult:
    """Estimate the optimal retention under the decreasing loading rule.

    The estimate is the root of the plug-in stationarity quadratic; the
    standard error comes from linearising that quadratic in the two capped
    moments.
    """
    emp = _as_empirical(losses)
    rule = DecreasingLoading(delta)
    checks = condition_report(emp, rule, measure, emp.n)
    phi = measure.phi_normal()
    if phi <= 0.0:
        from .errors import NonpositivePhi

        raise NonpositivePhi(f"phi_h(Z) = {phi:g} must be positive")
    q = (delta / phi) ** 2
    atom_level = delta * delta / (delta * delta + phi * phi)
    if not checks["atom_condition"]:
        raise AtomConditionViolated(
            f"share of zero losses {emp.prob_zero():g} >= critical level {atom_level:g}"
        )

    def station(d: float) -> float:
        g = emp.moment_grid(np.array([d]))
        return float((d - g["mu1"][0]) ** 2 - q * (g["mu2"][0] - g["mu1"][0] ** 2))

    d2 = emp.upper_quantile(atom_level)
    res = expand_and_solve(station, lo=d2, hi_start=max(2.0 * d2, 1.0))
    d_hat = res.root

    x = emp.losses
    n = emp.n
    tm = emp.truncated_moments(d_hat)
    sbar = tm.sbar
    c0 = 2.0 * (d_hat - tm.mu1) * (1.0 - sbar) - q * (2.0 * d_hat * sbar - 2.0 * tm.mu1 * sbar)
    c1 = 2.0 * (d_hat - tm.mu1) - 2.0 * q * tm.mu1
    c2 = q
    capped = np.minimum(x, d_hat)
    z = np.column_stack([capped, np.minimum(x * x, d_hat * d_hat)])
    sigma = _covariance(z)
    cvec = np.array([c1, c2])
    inner = float(cvec @ sigma @ cvec)
    if inner < 0.0 or c0 == 0.0:
        raise DegenerateVariance("stationarity linearisation is degenerate")
    se = math.sqrt(inner) / (abs(c0) * math.sqrt(n))
    return EstimationResult(
        d_hat=d_hat,
        std_error=se,
        ci=_wald_ci(d_hat, se, level),
        level=level,
        rule=rule,
        measure=measure,
        n=n,
        coefficients={"c0": c0, "c1": c1, "c2": c2},
        sigma_hat=sigma,
        warnings=[],
    )


def _covariance(z: np.ndarray) -> np.ndarray:
    # normalised by the sample size, matching the plug-in asymptotics
    centered = z - z.mean(axis=0)
    return centered.T @ centered / z.shape[0]


def _plug_in_minimum(
    emp: EmpiricalLosses,
    objective_grid,
    objective_scalar,
    grid_size: int = 1000,
) -> float:
    lo = emp.min_positive()
    hi = emp.quantile(0.999)
    if not hi > lo:
        raise NoInteriorMinimum(
            f"degenerate search range [{lo:g}, {hi:g}] for the plug-in objective"
        )
    grid = log_spaced_grid(lo, hi, grid_size)
    values = objective_grid(grid)
    res = grid_then_golden(objective_scalar, grid, values)
    if res.at_boundary:
        raise NoInteriorMinimum(
            f"plug-in objective minimised at the search boundary d={res.x:g}"
        )
    return res.x


def _sd_sharpe_common(emp: EmpiricalLosses, d_hat: float, bandwidth: float):
    tm = emp.truncated_moments(d_hat)
    var_mu = tm.mu2 - tm.mu1 ** 2
    var_nu = tm.nu2 - tm.nu1 ** 2
    if var_mu <= 0.0 or var_nu <= 0.0:
        raise DegenerateVariance(
            f"capped or ceded spread vanishes at d={d_hat:g}"
        )
    x = emp.losses
    excess = np.maximum(x - d_hat, 0.0)
    z = np.column_stack(
        [
            (x > d_hat).astype(float),
            np.minimum(x, d_hat),
            np.minimum(x * x, d_hat * d_hat),
            excess,
            excess * excess,
        ]
    )
    sigma = _covariance(z)
    fhat = kde_density(x, d_hat, bandwidth)
    return tm, var_mu, var_nu, sigma, float(fhat)


def estimate_sd(
    losses,
    rho0: float,
    measure: DistortionMeasure,
    level: float = 0.95,
    bandwidth: float = 0.1,
) -> EstimationResult:
    """Estimate the optimal retention under the standard-deviation loading."""
    emp = _as_empirical(losses)
    rule = StdDevLoading(rho0)
    checks = condition_report(emp, rule, measure, emp.n)
    phi = measure.phi_normal()
    if phi <= 0.0:
        from .errors import NonpositivePhi

        raise NonpositivePhi(f"phi_h(Z) = {phi:g} must be positive")

    def grid_values(grid: np.ndarray) -> np.ndarray:
        g = emp.moment_grid(grid)
        with np.errstate(invalid="ignore"):
            return phi * np.sqrt(g["mu2"] - g["mu1"] ** 2) + rho0 * g["nu1"] * np.sqrt(
                g["nu2"] - g["nu1"] ** 2
            )

    d_hat = _plug_in_minimum(
        emp, grid_values, lambda d: float(grid_values(np.array([d]))[0])
    )
    tm, var_mu, var_nu, sigma, fhat = _sd_sharpe_common(emp, d_hat, bandwidth)
    sbar, cdf = tm.sbar, 1.0 - tm.sbar
    sd_mu, sd_nu = math.sqrt(var_mu), math.sqrt(var_nu)
    gap = d_hat - tm.mu1
    b1 = phi * gap / sd_mu - rho0 * sd_nu + rho0 * tm.nu1 ** 2 / sd_nu
    b2 = phi * (-sbar / sd_mu + tm.mu1 * sbar * gap / sd_mu ** 3)
    b3 = -phi * sbar * gap / (2.0 * sd_mu ** 3)
    b4 = rho0 * tm.nu1 * (
        sbar / sd_nu - 2.0 * cdf / sd_nu - cdf * tm.nu1 ** 2 / sd_nu ** 3
    )
    b5 = rho0 * (-sbar / (2.0 * sd_nu) + cdf * tm.nu1 ** 2 / (2.0 * sd_nu ** 3))
    b0 = (
        phi * sbar / sd_mu
        - b1 * fhat
        + b2 * sbar
        + b3 * 2.0 * d_hat * sbar
        + b4 * (-sbar)
        + b5 * (-2.0 * tm.nu1)
    )
    bvec = np.array([b1, b2, b3, b4, b5])
    inner = float(bvec @ sigma @ bvec)
    if inner < 0.0 or b0 == 0.0:
        raise DegenerateVariance("stationarity linearisation is degenerate")
    se = math.sqrt(inner) / (abs(b0) * math.sqrt(emp.n))
    warnings = _condition_warnings(checks)
    return EstimationResult(
        d_hat=d_hat,
        std_error=se,
        ci=_wald_ci(d_hat, se, level),
        level=level,
        rule=rule,
        measure=measure,
        n=emp.n,
        coefficients={"b0": b0, "b1": b1, "b2": b2, "b3": b3, "b4": b4, "b5": b5},
        sigma_hat=sigma,
        warnings=warnings,
    )


def estimate_sharpe(
    losses,
    rho0: float,
    measure: DistortionMeasure,
    level: float = 0.95,
    bandwidth: float = 0.1,
) -> EstimationResult:
    """Estimate the optimal retention under the Sharpe-ratio loading."""
    emp = _as_empirical(losses)
    rule = SharpeLoading(rho0)
    checks = condition_report(emp, rule, measure, emp.n)
    phi = measure.phi_normal()
    if phi <= 0.0:
        from .errors import NonpositivePhi

        raise NonpositivePhi(f"phi_h(Z) = {phi:g} must be positive")

    def grid_values(grid: np.ndarray) -> np.ndarray:
        g = emp.moment_grid(grid)
        with np.errstate(invalid="ignore", divide="ignore"):
            spread = np.sqrt(g["nu2"] - g["nu1"] ** 2)
            load = np.where(spread > 0.0, rho0 * g["nu1"] / spread, np.inf)
            load = np.where(g["nu1"] == 0.0, np.inf, load)
            # the ratio degenerates once no loss exceeds d; exclude that range
            return phi * np.sqrt(g["mu2"] - g["mu1"] ** 2) + load

    d_hat = _plug_in_minimum(
        emp, grid_values, lambda d: float(grid_values(np.array([d]))[0])
    )
    tm, var_mu, var_nu, sigma, fhat = _sd_sharpe_common(emp, d_hat, bandwidth)
    sbar, cdf = tm.sbar, 1.0 - tm.sbar
    sd_mu, sd_nu = math.sqrt(var_mu), math.sqrt(var_nu)
    gap = d_hat - tm.mu1
    a1 = phi * gap / sd_mu - rho0 * tm.nu2 / sd_nu ** 3
    a2 = phi * (-sbar / sd_mu + tm.mu1 * sbar * gap / sd_mu ** 3)
    a3 = -phi * sbar * gap / (2.0 * sd_mu ** 3)
    a4 = rho0 * tm.nu1 * (
        (2.0 * cdf - sbar) / sd_nu ** 3 + 3.0 * cdf * tm.nu1 ** 2 / sd_nu ** 5
    )
    a5 = rho0 * (sbar / (2.0 * sd_nu ** 3) - 1.5 * cdf * tm.nu1 ** 2 / sd_nu ** 5)
    a0 = (
        phi * sbar / sd_mu
        - a1 * fhat
        + a2 * sbar
        + a3 * 2.0 * d_hat * sbar
        + a4 * (-sbar)
        + a5 * (-2.0 * tm.nu1)
    )
    avec = np.array([a1, a2, a3, a4, a5])
    inner = float(avec @ sigma @ avec)
    if inner < 0.0 or a0 == 0.0:
        raise DegenerateVariance("stationarity linearisation is degenerate")
    se = math.sqrt(inner) / (abs(a0) * math.sqrt(emp.n))
    warnings = _condition_warnings(checks)
    return EstimationResult(
        d_hat=d_hat,
        std_error=se,
        ci=_wald_ci(d_hat, se, level),
        level=level,
        rule=rule,
        measure=measure,
        n=emp.n,
        coefficients={"a0": a0, "a1": a1, "a2": a2, "a3": a3, "a4": a4, "a5": a5},
        sigma_hat=sigma,
        warnings=warnings,
    )


def _condition_warnings(checks: dict) -> list[str]:
    out = []
    for name, value in checks.items():
        if value is False:
            out.append(f"sufficient condition {name} is violated; estimate may sit at a boundary")
    return out


@dataclass(frozen=True)
class CurvePoint:
    param: float
    d_hat: float
    ci_lo: float
    ci_hi: float
    error: str | None = None


_FAMILIES = {
    "decreasing": estimate_decreasing,
    "stddev": estimate_sd,
    "sharpe": estimate_sharpe,
}


def retention_curve(
    losses,
    family: str,
    sweep: str,
    grid,
    fixed: float,
    level: float = 0.95,
    bandwidth: float = 0.1,
) -> list[CurvePoint]:
    """Estimated retention as a function of the loading or the risk level.

    sweep='rho' varies the effective loading at fixed risk level p=fixed;
    sweep='p' varies the risk level at fixed effective loading rho=fixed.
    Failed points become gap markers carrying the error text.
    """
    if family not in _FAMILIES:
        raise DomainError(f"unknown rule family {family!r}")
    if sweep not in ("rho", "p"):
        raise DomainError(f"sweep must be 'rho' or 'p', got {sweep!r}")
    emp = _as_empirical(losses)
    points: list[CurvePoint] = []
    rho0_guess: float | None = None
    for value in np.asarray(grid, dtype=float):
        rho = float(value) if sweep == "rho" else float(fixed)
        p = float(fixed) if sweep == "rho" else float(value)
        try:
            measure = DistortionMeasure.var(p)
            result, rho0_guess = _estimate_at_effective_rho(
                emp, family, rho, measure, level, bandwidth, rho0_guess
            )
            points.append(
                CurvePoint(float(value), result.d_hat, result.ci[0], result.ci[1])
            )
        except Exception as exc:  # gap marker, sweep continues
            points.append(
                CurvePoint(float(value), float("nan"), float("nan"), float("nan"),
                           error=f"{type(exc).__name__}: {exc}")
            )
    return points


def _estimate_at_effective_rho(
    emp: EmpiricalLosses,
    family: str,
    rho: float,
    measure: DistortionMeasure,
    level: float,
    bandwidth: float,
    rho0_guess: float | None,
):
    """Map a target effective loading to the rule parameter and estimate.

    The decreasing rule maps directly (delta = rho * sqrt(n)).  The other
    two depend on the solved retention, so a damped fixed-point iteration
    aligns the rule parameter with the target.
    """
    if rho <= 0.0:
        raise DomainError(f"effective loading must be positive, got {rho}")
    n = emp.n
    sqrt_n = math.sqrt(n)
    if family == "decreasing":
        return estimate_decreasing(emp, rho * sqrt_n, measure, level), None

    def spread_at(d: float) -> float:
        tm = emp.truncated_moments(d)
        s2 = tm.nu2 - tm.nu1 ** 2
        if s2 <= 0.0:
            raise DegenerateVariance(f"ceded spread vanishes at d={d:g}")
        return math.sqrt(s2)

    # initialise from the spread at the sample median
    start = spread_at(emp.quantile(0.5))
    if family == "stddev":
        rho0 = rho0_guess or rho * sqrt_n / start
        estimator = estimate_sd
    else:
        rho0 = rho0_guess or rho * sqrt_n * start
        estimator = estimate_sharpe
    result = None
    for _ in range(100):
        result = estimator(emp, rho0, measure, level, bandwidth)
        s = spread_at(result.d_hat)
        target = rho * sqrt_n / s if family == "stddev" else rho * sqrt_n * s
        if abs(target - rho0) <= 1e-8 * max(1.0, abs(rho0)):
            return result, rho0
        rho0 = 0.5 * rho0 + 0.5 * target
    raise NumericalFailure(
        f"effective-loading fixed point did not converge for rho={rho:g}"
    )
