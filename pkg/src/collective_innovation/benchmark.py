"""Social-welfare benchmark: the planner maximises average payoffs."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._solve import check_uniqueness_condition, default_tail, first_root, solve_stationary
from .errors import DomainError
from .model import ATOM_EXP, DEGENERATE, InnovationDist, ModelParams, PayoffSpec, expect_F
from .numerics import FixedPointReport, GridConfig, GridFn, Rates


@dataclass
class BenchmarkSolution:
    v_star: GridFn
    alpha_star: GridFn
    x_star: float | None
    report: FixedPointReport
    bellman_residual: float

    def summary(self) -> dict:
        return {
            "x_star": self.x_star,
            "residual": self.bellman_residual,
            "iterations": self.report.iterations,
            "tarski_gap": self.report.gap,
        }


def planner_rates(params: ModelParams) -> Rates:
    """The planner's first-order condition is the equilibrium one with a
    single agent producing at rate n lam."""
    return Rates(params.n * params.lam, 1)


def benchmark_cutoff(params: ModelParams, P: PayoffSpec, F: InnovationDist, x_max: float = 4.0) -> float | None:
    """Smallest x with lam n (E_F b(x+z) - b(x)) <= c1(0, x), or None."""
    if P.is_linear:
        return params.lam * F.mean * params.n

    def gap(x: float) -> float:
        gain = params.lam * params.n * (expect_F(F, P.b, x) - float(P.b(x)))
        return gain - float(P.c1(0.0, x))

    return first_root(gap, x_max)


def solve_benchmark(
    params: ModelParams,
    P: PayoffSpec,
    F: InnovationDist,
    grid: GridConfig | None = None,
) -> BenchmarkSolution:
    grid = grid or GridConfig()
    check_uniqueness_condition(params, P, F, grid.x_max)
    x_star = benchmark_cutoff(params, P, F, grid.x_max)
    tail = grid.tail or default_tail(x_star, grid.x_max)
    sol = solve_stationary(planner_rates(params), params, P, F, grid, "f", tail)
    return BenchmarkSolution(sol.value, sol.effort, x_star, sol.report, sol.bellman_residual)


def benchmark_closed_form_linear(params: ModelParams, F: InnovationDist, x):
    """Planner value under linear payoffs and an atom-plus-exponential law."""
    if F.variant != ATOM_EXP or F.rho <= 0:
        raise DomainError("closed form needs an atom-plus-exponential law with rho > 0")
    lam, n, rho, eps, zeta = params.lam, params.n, F.rho, F.eps, F.zeta
    xs = lam * F.mean * n
    if zeta < xs:
        raise DomainError(f"closed form needs zeta >= x_star ({zeta} < {xs})")
    k = lam * n * rho
    xa = np.asarray(x, dtype=float)
    expo = np.exp((1.0 + k) / (eps * (1.0 + lam * n)) * (np.minimum(xa, xs) - xs))
    low = k / (1.0 + k) ** 2 * (eps * (1.0 / rho - 1.0) * expo + xs + (1.0 + k) * xa + zeta)
    out = np.where(xa <= xs, low, xa)
    return float(out) if np.ndim(x) == 0 else out


@dataclass
class CountEstimate:
    value: float
    stderr: float
    replications: int


def benchmark_linear_via_counts(
    params: ModelParams,
    F: InnovationDist,
    x: float,
    replications: int = 100_000,
    seed: int = 0,
) -> CountEstimate:
    """lam mu n minus the integral over [x, lam mu n] of E[beta^m(y)], where
    m(y) counts the jumps needed from y to reach lam mu n and
    beta = lam n / (1 + lam n)."""
    top = params.lam * F.mean * params.n
    if x >= top:
        raise DomainError(f"x must lie below lam mu n = {top}")
    beta = params.lam * params.n / (1.0 + params.lam * params.n)
    span = top - x
    if F.variant == DEGENERATE:
        mu = F.point
        m = int(math.ceil(span / mu - 1e-12))
        total = sum(beta**k * (min(k * mu, span) - min((k - 1) * mu, span)) for k in range(1, m + 1))
        return CountEstimate(top - total, 0.0, 0)
    rng = np.random.default_rng(seed)
    s_prev = np.zeros(replications)
    acc = np.zeros(replications)
    weight = 1.0
    active = np.ones(replications, dtype=bool)
    while np.any(active):
        weight *= beta
        s_new = s_prev + np.where(active, F.sample(rng, replications), 0.0)
        acc += weight * (np.minimum(s_new, span) - np.minimum(s_prev, span))
        s_prev = s_new
        active = s_new < span
    per_path = top - acc
    return CountEstimate(
        float(per_path.mean()),
        float(per_path.std(ddof=1) / math.sqrt(replications)),
        replications,
    )
