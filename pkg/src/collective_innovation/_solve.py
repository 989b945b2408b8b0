"""Shared machinery for the stationary Markov solvers (planner, forced
disclosure, disposal)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .model import InnovationDist, ModelParams, PayoffSpec
from .numerics import (
    EQUALS_B,
    LINEAR_B,
    FixedPointReport,
    GridConfig,
    GridFn,
    Rates,
    Stencil,
    _p_vector,
    backward_sweep,
    equilibrium_node_value,
    monotone_fixed_point,
    solve_scalar_fixed_point,
)


@dataclass
class MarkovSolve:
    value: GridFn
    effort: GridFn
    continuation: np.ndarray
    report: FixedPointReport
    stencil: Stencil
    bellman_residual: float


def upper_seed(params: ModelParams, P: PayoffSpec, F: InnovationDist, x: np.ndarray) -> np.ndarray:
    """w_bar(x) = b(x) + n lam [b(mu) - b(0)]."""
    return P.b(x) + params.n * params.lam * (float(P.b(F.mean)) - float(P.b(0.0)))


def check_uniqueness_condition(params: ModelParams, P: PayoffSpec, F: InnovationDist, x_max: float) -> None:
    """Positive effort must be inefficiently large at the top of the grid."""
    a = np.array([1e-6, 0.5, 1.0])
    lhs = params.lam * F.mean * params.n * P.bp(np.full(3, x_max)) - P.c1(a, np.full(3, x_max))
    if np.any(lhs >= 0):
        raise ValidationError(
            f"x_max={x_max} too small: lam mu n b'(x) - c1(a, x) is not negative there; enlarge the grid"
        )


def solve_stationary(
    rates: Rates,
    params: ModelParams,
    P: PayoffSpec,
    F: InnovationDist,
    grid: GridConfig,
    mode: str,
    tail: str,
) -> MarkovSolve:
    x = grid.nodes()
    stencil = Stencil(x, F, tail, P.b)
    node = equilibrium_node_value(P, rates)

    def node_map(i, t0, l_of, lo, hi):
        xi = float(x[i])
        return solve_scalar_fixed_point(lambda t: node(xi, l_of(t))[0], t0, lo, hi)

    lo = np.asarray(P.b(x), dtype=float)
    hi = upper_seed(params, P, F, x)

    def operator(g: GridFn) -> GridFn:
        return g.with_values(backward_sweep(stencil, g.values, node_map, mode, lo, hi))

    report = monotone_fixed_point(
        operator,
        GridFn(x, lo, tail, P.b),
        GridFn(x, hi, tail, P.b),
        tol=grid.tol,
        max_iter=grid.max_iter,
    )
    v = report.lower
    cont = stencil.apply(v.values, mode)
    alpha = _p_vector(x, cont, P, rates)
    agg = rates.n * alpha * rates.lam
    image = (P.b(x) - P.c(alpha, x) + agg * cont) / (1.0 + agg)
    residual = float(np.max(np.abs(image - v.values)))
    return MarkovSolve(
        value=v,
        effort=GridFn(x, alpha, EQUALS_B, lambda y: np.zeros_like(np.asarray(y, dtype=float))),
        continuation=cont,
        report=report,
        stencil=stencil,
        bellman_residual=residual,
    )


def default_tail(cutoff: float | None, x_max: float) -> str:
    return EQUALS_B if cutoff is not None and cutoff <= x_max else LINEAR_B


def first_root(fn, x_max: float, samples: int = 4001, tol: float = 1e-13) -> float | None:
    """Smallest x in [0, x_max] with fn(x) <= 0, by scan plus bisection."""
    xs = np.linspace(0.0, x_max, samples)
    vals = np.array([fn(float(t)) for t in xs])
    hit = np.nonzero(vals <= 0)[0]
    if hit.size == 0:
        return None
    k = int(hit[0])
    if k == 0:
        return 0.0
    lo, hi = float(xs[k - 1]), float(xs[k])
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if fn(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return hi
