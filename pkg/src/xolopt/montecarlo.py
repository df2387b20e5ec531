"""Seeded Monte Carlo oracle for retention studies.

Estimates the true quantile of the total cost by simulation, locates the
"actual" optimal retention by a common-random-number grid search, reproduces
the approximation and estimation study tables, and runs the insolvency and
turning-point analyses for small portfolios.

Every operation derives its randomness from named substreams of the config
seed, so results are bit-identical across runs and thread counts.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .distortion import DistortionMeasure
from .errors import DomainError, GridBoundaryMinimum, NotBracketed, XoloptError
from .inference import estimate_decreasing, estimate_sd, estimate_sharpe
from .numerics import grid_then_golden, log_spaced_grid
from .retention import (
    ConstantLoading,
    DecreasingLoading,
    LoadingRule,
    SharpeLoading,
    StdDevLoading,
    effective_rho,
    solve_retention,
    solve_retention_edgeworth,
)
from .severity import SeverityModel

# substream codes; replication indices are appended after these
_STREAM_VAR_COST = 1
_STREAM_ESTIMATION = 2
_STREAM_TURNING = 3
_RULE_STREAM = {"decreasing": 1, "stddev": 2, "sharpe": 3}

# cap on simultaneously materialised draws (elements, not bytes)
_CHUNK_ELEMENTS = 50_000_000


@dataclass(frozen=True)
class McConfig:
    """Simulation budget and seeding for the Monte Carlo oracle.

    b is the number of simulated portfolios behind each quantile estimate;
    m is the number of outer replications in estimator studies.  Defaults
    are desk scale; full_scale() returns the full-size configuration.
    """

    b: int = 20000
    m: int = 500
    seed: int = 0
    d_grid: tuple[float, ...] | None = None

    def __post_init__(self):
        if not (isinstance(self.b, (int, np.integer)) and self.b >= 1000):
            raise DomainError(f"quantile sample count must be >= 1000, got {self.b}")
        if not (isinstance(self.m, (int, np.integer)) and self.m >= 100):
            raise DomainError(f"replication count must be >= 100, got {self.m}")
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise DomainError(f"seed must be a nonnegative integer, got {self.seed}")
        if self.d_grid is not None:
            grid = np.asarray(self.d_grid, dtype=float)
            if grid.size == 0:
                raise DomainError("retention grid must be nonempty")
            if not (np.all(np.diff(grid) > 0.0) and grid[0] > 0.0):
                raise DomainError("retention grid must be strictly increasing and positive")

    def full_scale(self) -> "McConfig":
        return replace(self, b=50000, m=5000)


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a named position in the simulation plan."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class McTableRow:
    rule: str
    n: int
    approx_order: str
    d_actual: float
    d_approx: float
    rel_diff_pct: float


@dataclass(frozen=True)
class McEstimateRow:
    rule: str
    n: int
    d_true: float
    mean_d_hat: float
    bias_pct: float
    theo_se: float
    emp_se: float
    diff_pct: float
    coverage: float
    failures: int


@dataclass(frozen=True)
class BruteForceResult:
    d_actual: float
    var_at_optimum: float


@dataclass(frozen=True)
class InsolvencyResult:
    n: int
    d_star: float
    prob: float
    analytic_prob: float


class _CostOracle:
    """Total-cost quantile evaluator over a fixed set of simulated portfolios.

    All retentions are evaluated against the same draws (common random
    numbers), so the d -> VaR map is a deterministic function once the seed
    is fixed.  Draws are materialised when small enough and regenerated in
    chunks otherwise; both paths consume the stream in the same order.
    """

    def __init__(self, model: SeverityModel, n: int, cfg: McConfig, *key: int):
        self.model = model
        self.n = int(n)
        self.b = cfg.b
        self._seed = cfg.seed
        self._key = key
        total = self.b * self.n
        if total <= _CHUNK_ELEMENTS:
            rng = substream(self._seed, *key)
            self._matrix = model.sample_rng(total, rng).reshape(self.b, self.n)
        else:
            self._matrix = None

    def _blocks(self):
        if self._matrix is not None:
            yield self._matrix
            return
        rng = substream(self._seed, *self._key)
        rows_per = max(1, _CHUNK_ELEMENTS // self.n)
        done = 0
        while done < self.b:
            rows = min(rows_per, self.b - done)
            yield self.model.sample_rng(rows * self.n, rng).reshape(rows, self.n)
            done += rows

    def capped_stats(self, d_values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """p-free pieces: all capped sums (b per d) and pooled excess means."""
        d_values = np.asarray(d_values, dtype=float)
        sums = np.zeros((d_values.size, self.b))
        excess = np.zeros(d_values.size)
        row = 0
        for block in self._blocks():
            rows = block.shape[0]
            for j, d in enumerate(d_values):
                capped = np.minimum(block, d)
                sums[j, row:row + rows] = capped.sum(axis=1)
                excess[j] += (block - capped).sum()
            row += rows
        return sums, excess / (self.b * self.n)

    def quantile_index(self, p: float) -> int:
        k = int(math.ceil(p * self.b - 1e-9))
        return min(max(k, 1), self.b) - 1

    def var_values(self, rule: LoadingRule, p: float, d_values) -> np.ndarray:
        d_values = np.asarray(d_values, dtype=float)
        sums, nu1 = self.capped_stats(d_values)
        idx = self.quantile_index(p)
        out = np.empty(d_values.size)
        for j, d in enumerate(d_values):
            quant = np.partition(sums[j], idx)[idx]
            rho_eff = effective_rho(self.model, rule, self.n, float(d))
            out[j] = quant + (1.0 + rho_eff) * self.n * nu1[j]
        return out

    def var_scalar(self, rule: LoadingRule, p: float, d: float) -> float:
        return float(self.var_values(rule, p, np.array([d]))[0])


def mc_var_total_cost(
    model: SeverityModel,
    rule: LoadingRule,
    n: int,
    p: float,
    d: float,
    cfg: McConfig,
) -> float:
    """Simulated p-quantile of the total cost at retention d.

    The capped-loss quantile is the order statistic at ceil(p*b); the
    premium adds the effective loading on the pooled mean ceded loss.  The
    substream is keyed by the portfolio size only, so different retentions
    reuse identical draws.
    """
    if not d > 0.0:
        raise DomainError(f"retention must be positive, got {d}")
    if not 0.0 < p < 1.0:
        raise DomainError(f"risk level must be in (0, 1), got {p}")
    oracle = _CostOracle(model, n, cfg, _STREAM_VAR_COST, n)
    return oracle.var_scalar(rule, p, d)


def _default_grid(model: SeverityModel, size: int = 80) -> np.ndarray:
    return log_spaced_grid(model.quantile(0.01), model.quantile(1.0 - 1e-5), size)


# batches averaged into the quantile curve before taking its argmin
_VAR_BATCHES = 5


def brute_force_optimal(
    model: SeverityModel,
    rule: LoadingRule,
    n: int,
    p: float,
    cfg: McConfig,
) -> BruteForceResult:
    """Grid argmin of the simulated total-cost quantile, golden-refined.

    The quantile curve is flat near its minimum, so the argmin of a single
    batch is noisy; the curve is therefore averaged over a few independent
    common-random-number batches before the scan.  Within each batch every
    retention sees identical draws, keeping the averaged map deterministic
    through the refinement pass.
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"risk level must be in (0, 1), got {p}")
    grid = (
        np.asarray(cfg.d_grid, dtype=float)
        if cfg.d_grid is not None
        else _default_grid(model)
    )
    oracles = [
        _CostOracle(model, n, cfg, _STREAM_VAR_COST, n, batch)
        for batch in range(_VAR_BATCHES)
    ]
    values = np.mean([o.var_values(rule, p, grid) for o in oracles], axis=0)

    def averaged(d: float) -> float:
        return float(np.mean([o.var_scalar(rule, p, d) for o in oracles]))

    res = grid_then_golden(averaged, grid, values)
    if res.at_boundary:
        raise GridBoundaryMinimum(
            f"simulated optimum sits at the grid edge d={res.x:g}; widen the grid"
        )
    return BruteForceResult(d_actual=res.x, var_at_optimum=res.fx)


def insolvency_probability(
    model: SeverityModel,
    n: int,
    rho: float,
    p: float,
    cfg: McConfig,
) -> InsolvencyResult:
    """Chance that the total cost at the optimal retention exceeds its VaR.

    For small portfolios the capped sum places an atom at n*d; when that
    atom covers the p-quantile the exceedance probability collapses to zero
    instead of 1-p.  The analytic criterion compares the survival at d*
    with (1-p)^(1/n).
    """
    if not rho > 0.0:
        raise DomainError(f"loading must be positive, got {rho}")
    rule = ConstantLoading(rho)
    best = brute_force_optimal(model, rule, n, p, cfg)
    d_star = best.d_actual
    oracle = _CostOracle(model, n, cfg, _STREAM_VAR_COST, n)
    sums, _ = oracle.capped_stats(np.array([d_star]))
    s = sums[0]
    idx = oracle.quantile_index(p)
    quant = np.partition(s, idx)[idx]
    prob = float(np.count_nonzero(s > quant)) / cfg.b
    analytic = (1.0 - p) if model.survival(d_star) < (1.0 - p) ** (1.0 / n) else 0.0
    return InsolvencyResult(n=n, d_star=d_star, prob=prob, analytic_prob=analytic)


def turning_points(
    model: SeverityModel,
    n: int,
    p: float,
    cfg: McConfig,
    tol: float = 1e-6,
) -> list[float]:
    """Retentions where the capped-sum law shifts mass onto its upper kinks.

    The i-th point solves P(sum of capped losses >= (n-i+1)*d) = 1-p for
    i = 1..n-1, by bisection on the simulated probability with shared draws.
    """
    if not (isinstance(n, (int, np.integer)) and n >= 2):
        raise DomainError(f"portfolio size must be at least 2, got {n}")
    if not 0.0 < p < 1.0:
        raise DomainError(f"risk level must be in (0, 1), got {p}")
    oracle = _CostOracle(model, n, cfg, _STREAM_TURNING, n)
    blocks = list(oracle._blocks())
    x = np.vstack(blocks)
    target = 1.0 - p

    def prob_at(d: float, i: int) -> float:
        s = np.minimum(x, d).sum(axis=1)
        return float(np.count_nonzero(s >= (n - i + 1) * d)) / cfg.b

    lo0 = model.quantile(1e-4)
    hi0 = model.quantile(1.0 - 1e-7)
    out: list[float] = []
    for i in range(1, n):
        lo, hi = lo0, hi0
        if not (prob_at(lo, i) > target and prob_at(hi, i) < target):
            raise NotBracketed(
                f"exceedance probability does not cross {target:g} for kink {i}"
            )
        while hi - lo > tol * (1.0 + hi):
            mid = 0.5 * (lo + hi)
            if prob_at(mid, i) > target:
                lo = mid
            else:
                hi = mid
        out.append(0.5 * (lo + hi))
    return out


_TABLE1_ORDERS = ("o(sqrt(N))", "o(1)", "o(1/sqrt(N))")


def replicate_table1(
    model: SeverityModel,
    cfg: McConfig,
    p: float = 0.75,
    n_values: tuple[int, ...] = (10, 25, 100),
    rho: float = 0.3,
    delta: float = 0.5,
    rho0: float = 0.5,
    only: str | None = None,
) -> list[McTableRow]:
    """Actual-vs-approximate optima across rules, sizes, and orders."""
    measure = DistortionMeasure.var(p)
    rules: list[tuple[str, LoadingRule]] = [
        ("constant", ConstantLoading(rho)),
        ("decreasing", DecreasingLoading(delta)),
        ("stddev", StdDevLoading(rho0)),
        ("sharpe", SharpeLoading(rho0)),
    ]
    if only is not None:
        rules = [rl for rl in rules if rl[0] == only]
        if not rules:
            raise DomainError(f"unknown rule filter {only!r}")
    rows: list[McTableRow] = []
    for name, rule in rules:
        for n in n_values:
            actual = brute_force_optimal(model, rule, n, p, cfg).d_actual
            approx = [solve_retention(model, rule, measure, n).d_star]
            if name == "constant":
                approx.append(solve_retention_edgeworth(model, rule, p, n, 2).d_star)
                approx.append(solve_retention_edgeworth(model, rule, p, n, 3).d_star)
            for order, d_approx in zip(_TABLE1_ORDERS, approx):
                rows.append(
                    McTableRow(
                        rule=name,
                        n=n,
                        approx_order=order,
                        d_actual=actual,
                        d_approx=d_approx,
                        rel_diff_pct=100.0 * (d_approx - actual) / actual,
                    )
                )
    return rows


def _estimate_once(
    model: SeverityModel,
    family: str,
    param: float,
    measure: DistortionMeasure,
    n: int,
    seed: int,
    rep: int,
) -> tuple[float, float, float, float]:
    rng = substream(seed, _STREAM_ESTIMATION, _RULE_STREAM[family], n, rep)
    x = model.sample_rng(n, rng)
    if family == "decreasing":
        r = estimate_decreasing(x, param, measure)
    elif family == "stddev":
        r = estimate_sd(x, param, measure)
    else:
        r = estimate_sharpe(x, param, measure)
    return r.d_hat, r.std_error, r.ci[0], r.ci[1]


def replicate_table2(
    model: SeverityModel,
    cfg: McConfig,
    p: float = 0.75,
    n_values: tuple[int, ...] = (500, 2000, 10000),
    delta: float = 0.5,
    rho0: float = 0.5,
    threads: int = 1,
    only: str | None = None,
) -> list[McEstimateRow]:
    """Bias, SE agreement, and CI coverage of the nonparametric estimators.

    Each replication draws a fresh sample from its own substream keyed by
    (rule, n, replication), so the table is identical for any thread count.
    """
    measure = DistortionMeasure.var(p)
    families: list[tuple[str, LoadingRule, float]] = [
        ("decreasing", DecreasingLoading(delta), delta),
        ("stddev", StdDevLoading(rho0), rho0),
        ("sharpe", SharpeLoading(rho0), rho0),
    ]
    if only is not None:
        families = [fm for fm in families if fm[0] == only]
        if not families:
            raise DomainError(f"unknown rule filter {only!r}")
    rows: list[McEstimateRow] = []
    for family, rule, param in families:
        for n in n_values:
            d_true = solve_retention(model, rule, measure, n).d_star
            results: list[tuple[float, float, float, float] | None] = [None] * cfg.m

            def run(rep: int):
                try:
                    return _estimate_once(model, family, param, measure, n, cfg.seed, rep)
                except XoloptError:
                    return None

            if threads > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    results = list(pool.map(run, range(cfg.m)))
            else:
                results = [run(rep) for rep in range(cfg.m)]
            kept = [r for r in results if r is not None]
            failures = cfg.m - len(kept)
            if not kept:
                raise XoloptError(
                    f"all {cfg.m} replications failed for {family} at n={n}"
                )
            arr = np.asarray(kept)
            d_hat, se, lo, hi = arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]
            mean_d = float(d_hat.mean())
            theo = float(se.mean())
            emp = float(d_hat.std(ddof=1))
            rows.append(
                McEstimateRow(
                    rule=family,
                    n=n,
                    d_true=d_true,
                    mean_d_hat=mean_d,
                    bias_pct=100.0 * (mean_d - d_true) / d_true,
                    theo_se=theo,
                    emp_se=emp,
                    diff_pct=100.0 * (emp - theo) / theo,
                    coverage=float(np.mean((lo <= d_true) & (d_true <= hi))),
                    failures=failures,
                )
            )
    return rows
