"""Grid functions, the one-step operators Gamma and gamma, the static best
response p(x, l), expectation stencils and the monotone fixed-point engine."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import ConvergenceError, DomainError, MonotonicityViolation, ValidationError
from .model import InnovationDist, PayoffSpec

EQUALS_B = "EqualsB"
LINEAR_B = "LinearInBSlope"

ROOT_TOL = 1e-12
VALUE_TOL = 1e-10


class Rates(NamedTuple):
    """The (lambda, n) pair entering Gamma and gamma. The planner problem
    reuses the equilibrium formulas with (n lambda, 1)."""

    lam: float
    n: int


def _rates(params) -> Rates:
    if isinstance(params, Rates):
        return params
    if isinstance(params, tuple):
        return Rates(float(params[0]), int(params[1]))
    return Rates(float(params.lam), int(params.n))


# --------------------------------------------------------------------------
# Grid functions
# --------------------------------------------------------------------------


@dataclass
class GridFn:
    """Piecewise-linear function on a stock grid with a tail rule beyond the
    last node: ``EqualsB`` gives g = b, ``LinearInBSlope`` gives
    g(x) = g(x_K) + b(x) - b(x_K)."""

    nodes: np.ndarray
    values: np.ndarray
    tail: str = EQUALS_B
    b: Callable | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.nodes.ndim != 1 or self.nodes.size < 2:
            raise ValidationError("a grid needs at least two nodes")
        if np.any(np.diff(self.nodes) <= 0):
            raise ValidationError("grid nodes must be strictly increasing")
        if self.values.shape != self.nodes.shape:
            raise ValidationError("values and nodes differ in length")
        if self.tail not in (EQUALS_B, LINEAR_B):
            raise ValidationError(f"unknown tail rule {self.tail!r}")

    def _b(self, y):
        if self.b is None:
            return np.asarray(y, dtype=float)
        return self.b(y)

    @property
    def x_max(self) -> float:
        return float(self.nodes[-1])

    def __call__(self, y):
        ya = np.asarray(y, dtype=float)
        inner = np.interp(ya, self.nodes, self.values)
        beyond = ya > self.nodes[-1]
        if np.any(beyond):
            by = self._b(np.where(beyond, ya, self.nodes[-1]))
            if self.tail == EQUALS_B:
                ext = by
            else:
                ext = self.values[-1] + by - self._b(self.nodes[-1])
            inner = np.where(beyond, ext, inner)
        return float(inner) if np.ndim(y) == 0 else inner

    def with_values(self, values) -> "GridFn":
        return GridFn(self.nodes, np.asarray(values, dtype=float), self.tail, self.b)

    def sup_distance(self, other: "GridFn") -> float:
        return float(np.max(np.abs(self.values - other.values)))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "value"])
        for x, v in zip(self.nodes, self.values):
            w.writerow([repr(float(x)), repr(float(v))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


def uniform_grid(x_max: float, step: float, x_min: float = 0.0) -> np.ndarray:
    """Uniform nodes on [x_min, x_max]; the step is shrunk so the end point is
    a node."""
    if x_max <= x_min or step <= 0:
        raise ValidationError("need x_max > x_min and a positive step")
    k = int(math.ceil((x_max - x_min) / step - 1e-9))
    return np.linspace(x_min, x_min + k * step, k + 1)


@dataclass(frozen=True)
class GridConfig:
    x_max: float = 4.0
    num: int = 4001
    tol: float = VALUE_TOL
    max_iter: int = 200
    tail: str | None = None

    def nodes(self) -> np.ndarray:
        if self.num < 2:
            raise ValidationError("grid needs at least two nodes")
        return np.linspace(0.0, self.x_max, self.num)

    @classmethod
    def from_step(cls, x_max: float, step: float, **kw) -> "GridConfig":
        return cls(x_max=x_max, num=int(round(x_max / step)) + 1, **kw)


# --------------------------------------------------------------------------
# Gamma, gamma and the static best response
# --------------------------------------------------------------------------


def gamma_star(a, a_hat, x, l, P: PayoffSpec, params):
    """(b(x) - c(a, x) + a_hat lam l) / (1 + a_hat lam)."""
    lam = _rates(params).lam
    return (P.b(x) - P.c(a, x) + a_hat * lam * l) / (1.0 + a_hat * lam)


def gamma_value(a, x, l, P: PayoffSpec, params):
    """Gamma(a, x, l) = gamma_star(a, n a, x, l)."""
    r = _rates(params)
    return gamma_star(a, r.n * np.asarray(a, dtype=float), x, l, P, r)


def gamma_margin(a, x, l, P: PayoffSpec, params):
    """Sign of the marginal gain of own effort at a symmetric profile."""
    r = _rates(params)
    return l - (P.b(x) - P.c(a, x)) - (1.0 / r.lam + r.n * np.asarray(a, dtype=float)) * P.c1(a, x)


def _p_linear_scalar(x: float, l: float, lam: float, n: int) -> float:
    g0 = l - x - x / lam
    if g0 <= 0.0:
        return 0.0
    if g0 - (n - 1) * x >= 0.0:
        return 1.0
    return g0 / ((n - 1) * x)


def _p_vector(x, l, P: PayoffSpec, r: Rates, tol: float = ROOT_TOL) -> np.ndarray:
    x, l = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(l, dtype=float))
    if P.is_linear:
        g0 = l - x - x / r.lam
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            interior = g0 / ((r.n - 1) * x)
        out = np.where(g0 - (r.n - 1) * x >= 0.0, 1.0, interior)
        return np.where(g0 <= 0.0, 0.0, out)
    zero = np.zeros_like(x)
    one = np.ones_like(x)
    g0 = gamma_margin(zero, x, l, P, r)
    g1 = gamma_margin(one, x, l, P, r)
    lo, hi = zero.copy(), one.copy()
    for _ in range(int(math.ceil(math.log2(1.0 / tol))) + 1):
        mid = 0.5 * (lo + hi)
        pos = gamma_margin(mid, x, l, P, r) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    out = np.where(g1 >= 0.0, 1.0, 0.5 * (lo + hi))
    return np.where(g0 <= 0.0, 0.0, out)


def best_response_p(x, l, P: PayoffSpec, params, tol: float = ROOT_TOL):
    """Unique effort a in [0, 1] at which the symmetric marginal gain
    gamma(a, x, l) changes sign."""
    r = _rates(params)
    xa = np.asarray(x, dtype=float)
    la = np.asarray(l, dtype=float)
    bx = P.b(xa)
    scale = 1e-12 * np.maximum(1.0, np.abs(bx))
    if np.any(la < bx - scale):
        raise DomainError("continuation value below the flow payoff: l < b(x)")
    out = _p_vector(xa, la, P, r, tol)
    return float(out) if np.ndim(x) == 0 and np.ndim(l) == 0 else out


def p_scalar(P: PayoffSpec, r: Rates) -> Callable[[float, float], float]:
    """Fast scalar best response used inside node-by-node sweeps."""
    if P.is_linear:
        lam, n = r.lam, r.n
        return lambda x, l: _p_linear_scalar(x, l, lam, n)

    def p(x: float, l: float) -> float:
        return float(_p_vector(np.array([x]), np.array([l]), P, r)[0])

    return p


def equilibrium_node_value(P: PayoffSpec, r: Rates) -> Callable[[float, float], tuple[float, float]]:
    """Return (Gamma(p(x, l), x, l), p(x, l)) as a scalar function."""
    p = p_scalar(P, r)
    lam, n = r.lam, r.n
    if P.is_linear:

        def node(x: float, l: float) -> tuple[float, float]:
            a = p(x, l)
            agg = n * a * lam
            return (x - a * x + agg * l) / (1.0 + agg), a

        return node

    def node(x: float, l: float) -> tuple[float, float]:
        a = p(x, l)
        agg = n * a * lam
        val = (float(P.b(np.float64(x))) - float(P.c(np.float64(a), np.float64(x))) + agg * l) / (1.0 + agg)
        return val, a

    return node


# --------------------------------------------------------------------------
# Expectation stencils on a grid
# --------------------------------------------------------------------------


class Stencil:
    """Precomputed interpolation of v(x_i + z_k) for every node x_i and
    quadrature increment z_k, including the tail rule beyond the grid."""

    def __init__(self, nodes: np.ndarray, F: InnovationDist, tail: str, b: Callable):
        nodes = np.asarray(nodes, dtype=float)
        z, w = F.quadrature()
        self.nodes = nodes
        self.w = np.asarray(w, dtype=float)
        self.z = np.asarray(z, dtype=float)
        self.tail = tail
        self.b = b
        K = nodes.size
        y = nodes[:, None] + self.z[None, :]
        self.inside = y <= nodes[-1]
        j = np.searchsorted(nodes, y, side="right") - 1
        j = np.clip(j, 0, K - 2)
        span = nodes[j + 1] - nodes[j]
        theta = np.clip((y - nodes[j]) / span, 0.0, 1.0)
        self.j = np.where(self.inside, j, K - 2)
        self.theta = np.where(self.inside, theta, 1.0)
        self.tau = 0.0 if tail == EQUALS_B else 1.0
        by = b(np.where(self.inside, nodes[-1], y))
        self.tail_const = np.where(self.inside, 0.0, by - self.tau * b(nodes[-1]))
        self.self_theta = np.where(self.inside & (self.j == np.arange(K)[:, None]), 1.0 - self.theta, 0.0)

    @property
    def size(self) -> int:
        return self.nodes.size

    def values_at(self, v: np.ndarray) -> np.ndarray:
        """Matrix of v(x_i + z_k)."""
        lo = v[self.j]
        hi = v[self.j + 1]
        inner = lo + self.theta * (hi - lo)
        return np.where(self.inside, inner, self.tau * v[-1] + self.tail_const)

    def L_f(self, v: np.ndarray) -> np.ndarray:
        return self.values_at(v) @ self.w

    def L_d(self, v: np.ndarray) -> np.ndarray:
        return np.maximum(v[:, None], self.values_at(v)) @ self.w

    def apply(self, v: np.ndarray, mode: str) -> np.ndarray:
        return self.L_d(v) if mode == "d" else self.L_f(v)

    def node_affine(self, i: int, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-increment (slope, intercept) of v(x_i + z_k) as a function of
        v_i with all other entries of v fixed."""
        j = self.j[i]
        th = self.theta[i]
        lo = v[j]
        hi = v[j + 1]
        vals = np.where(self.inside[i], lo + th * (hi - lo), self.tau * v[-1] + self.tail_const[i])
        slope = self.self_theta[i].copy()
        if i == self.size - 1 and self.tau:
            slope = slope + np.where(self.inside[i], 0.0, self.tau)
        return slope, vals - slope * v[i]


# --------------------------------------------------------------------------
# Fixed points
# --------------------------------------------------------------------------


@dataclass
class FixedPointReport:
    iterations: int
    residual: float
    lower: GridFn
    upper: GridFn
    gap: float
    iterations_below: int = 0
    iterations_above: int = 0
    trace_below: list = field(default_factory=list)
    trace_above: list = field(default_factory=list)

    @property
    def solution(self) -> GridFn:
        return self.lower

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "iterations_below": self.iterations_below,
            "iterations_above": self.iterations_above,
            "residual": self.residual,
            "gap": self.gap,
        }


def _iterate(operator, seed: GridFn, tol: float, max_iter: int, direction: int, check: bool):
    v = seed
    trace: list[float] = []
    slack = 1e-10
    for it in range(1, max_iter + 1):
        w = operator(v)
        diff = w.values - v.values
        if check:
            scale = slack * (1.0 + np.abs(v.values))
            if direction > 0 and np.any(diff < -scale):
                k = int(np.argmin(diff))
                raise MonotonicityViolation(f"iterate from below decreased at node {k} by {-diff[k]:.3e}")
            if direction < 0 and np.any(diff > scale):
                k = int(np.argmax(diff))
                raise MonotonicityViolation(f"iterate from above increased at node {k} by {diff[k]:.3e}")
        res = float(np.max(np.abs(diff)))
        trace.append(res)
        v = w
        if res < tol:
            return v, it, trace
    raise ConvergenceError(f"no convergence within {max_iter} iterations (residual {trace[-1]:.3e})", trace)


def monotone_fixed_point(
    operator: Callable[[GridFn], GridFn],
    lower: GridFn,
    upper: GridFn,
    tol: float = VALUE_TOL,
    max_iter: int = 200,
    check_order: bool = True,
) -> FixedPointReport:
    """Iterate an order-preserving operator from both ends of [lower, upper]
    and report the two limits and their gap."""
    if np.any(lower.values > upper.values + 1e-12):
        raise ValidationError("lower seed exceeds upper seed")
    lo, it_lo, tr_lo = _iterate(operator, lower, tol, max_iter, +1, check_order)
    hi, it_hi, tr_hi = _iterate(operator, upper, tol, max_iter, -1, check_order)
    gap = hi.sup_distance(lo)
    return FixedPointReport(
        iterations=it_lo + it_hi,
        residual=max(tr_lo[-1], tr_hi[-1]),
        lower=lo,
        upper=hi,
        gap=gap,
        iterations_below=it_lo,
        iterations_above=it_hi,
        trace_below=tr_lo,
        trace_above=tr_hi,
    )


def solve_scalar_fixed_point(h: Callable[[float], float], t0: float, lo: float, hi: float) -> float:
    """Root of h(t) = t. Plain iteration first (the node maps are strong
    contractions away from disposal regions), bracketed Brent otherwise."""
    t = t0
    for _ in range(12):
        t_new = h(t)
        if abs(t_new - t) <= 1e-15 * (1.0 + abs(t)):
            return t_new
        t = t_new
    g = lambda s: h(s) - s
    a, b = min(lo, t), max(hi, t)
    ga, gb = g(a), g(b)
    width = max(b - a, 1e-6)
    for _ in range(60):
        if ga >= 0:
            break
        a -= width
        width *= 2
        ga = g(a)
    width = max(b - a, 1e-6)
    for _ in range(60):
        if gb <= 0:
            break
        b += width
        width *= 2
        gb = g(b)
    if max(abs(a), abs(b)) > 1e12:
        raise ConvergenceError("node equation has no bracketed root")
    if ga == 0:
        return a
    if gb == 0:
        return b
    if ga < 0 or gb > 0:
        raise ConvergenceError("node equation could not be bracketed")
    return brentq(g, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


def backward_sweep(
    stencil: Stencil,
    v: np.ndarray,
    node_map: Callable[[int, float, Callable[[float], float]], float],
    mode: str,
    lo: np.ndarray,
    hi: np.ndarray,
) -> np.ndarray:
    """Gauss-Seidel sweep from the top node down. Increments are positive,
    so each node only depends on itself and on nodes already updated; the
    node equation is solved exactly."""
    v = np.array(v, dtype=float)
    w = stencil.w
    for i in range(stencil.size - 1, -1, -1):
        slope, icpt = stencil.node_affine(i, v)
        if mode == "d":
            if not np.any(slope):

                def l_of(t, icpt=icpt):
                    return float(np.maximum(t, icpt) @ w)

            else:

                def l_of(t, slope=slope, icpt=icpt):
                    return float(np.maximum(t, slope * t + icpt) @ w)

        else:
            sl = float(slope @ w)
            ic = float(icpt @ w)

            def l_of(t, sl=sl, ic=ic):
                return sl * t + ic

        v[i] = node_map(i, float(v[i]), l_of, float(lo[i]), float(hi[i]))
    return v
