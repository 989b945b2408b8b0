"""Strongly symmetric equilibrium under forced disclosure."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ._solve import check_uniqueness_condition, default_tail, first_root, solve_stationary
from .errors import DomainError, ValidationError
from .model import ATOM_EXP, DEGENERATE, EXPONENTIAL, InnovationDist, ModelParams, PayoffSpec, expect_F
from .numerics import (
    EQUALS_B,
    FixedPointReport,
    GridConfig,
    GridFn,
    Rates,
    Stencil,
    backward_sweep,
    solve_scalar_fixed_point,
)

DETRIMENT_TOL = 1e-7


@dataclass
class ForcedSolution:
    v_f: GridFn
    alpha_f: GridFn
    x_f: float | None
    y_f: float | None
    report: FixedPointReport
    bellman_residual: float
    continuation: np.ndarray = field(repr=False)
    stencil: Stencil = field(repr=False)

    def summary(self) -> dict:
        return {
            "x_f": self.x_f,
            "y_f": self.y_f,
            "residual": self.bellman_residual,
            "iterations": self.report.iterations,
            "tarski_gap": self.report.gap,
        }


def forced_cutoff(params: ModelParams, P: PayoffSpec, F: InnovationDist, x_max: float = 4.0) -> float | None:
    """Smallest x with lam (E_F b(x+z) - b(x)) <= c1(0, x), or None."""
    if P.is_linear:
        return params.lam * F.mean

    def gap(x: float) -> float:
        return params.lam * (expect_F(F, P.b, x) - float(P.b(x))) - float(P.c1(0.0, x))

    return first_root(gap, x_max)


def _detect_y_f(x: np.ndarray, alpha: np.ndarray, cont: np.ndarray, params: ModelParams) -> float | None:
    """Largest node with full effort, refined inside the next cell with the
    interior effort formula for linear payoffs."""
    full = np.nonzero(alpha >= 1.0 - 1e-6)[0]
    if full.size == 0:
        return None
    k = int(full[-1])
    if k + 1 >= x.size:
        return float(x[k])
    lam, n = params.lam, params.n
    # interior effort (l - x - x/lam) / ((n-1) x) equals one where
    # l - x - x/lam - (n-1) x = 0; interpolate the continuation linearly
    g = lambda t, l: l - t - t / lam - (n - 1) * t
    g0 = g(x[k], cont[k])
    g1 = g(x[k + 1], cont[k + 1])
    if g0 >= 0 > g1:
        return float(x[k] + (x[k + 1] - x[k]) * g0 / (g0 - g1))
    return float(x[k])


def solve_forced(
    params: ModelParams,
    P: PayoffSpec,
    F: InnovationDist,
    grid: GridConfig | None = None,
) -> ForcedSolution:
    grid = grid or GridConfig()
    check_uniqueness_condition(params, P, F, grid.x_max)
    x_f = forced_cutoff(params, P, F, grid.x_max)
    tail = grid.tail or default_tail(x_f, grid.x_max)
    sol = solve_stationary(Rates(params.lam, params.n), params, P, F, grid, "f", tail)
    y_f = None
    if P.is_linear:
        y_f = _detect_y_f(sol.value.nodes, sol.effort.values, sol.continuation, params)
    return ForcedSolution(
        sol.value, sol.effort, x_f, y_f, sol.report, sol.bellman_residual, sol.continuation, sol.stencil
    )


# --------------------------------------------------------------------------
# Expected number of jumps to reach lam mu (linear payoffs)
# --------------------------------------------------------------------------


class JumpCount:
    """M(x) on [0, lam mu) from the renewal identity M = 1 + E_F[M(x + z)],
    M = 0 from lam mu on. Exponential cells are integrated exactly against
    the piecewise-linear interpolant."""

    def __init__(self, lam: float, F: InnovationDist, step: float | None = None):
        self.lam = lam
        self.F = F
        self.top = lam * F.mean
        if F.variant == DEGENERATE:
            self.nodes = None
            return
        step = step or F.eps / 20.0
        K = max(int(math.ceil(self.top / step)), 8)
        x = np.linspace(0.0, self.top, K + 1)
        h = x[1] - x[0]
        eps = F.eps
        q = math.exp(-h / eps)
        A = -math.expm1(-h / eps)
        B = (eps / h) * A - q
        kmax = min(K, int(math.ceil(45.0 * eps / h)) + 1)
        decay = q ** np.arange(kmax)
        w_lo = (1.0 - F.atom_weight) * decay * (A - B)
        w_hi = (1.0 - F.atom_weight) * decay * B
        M = np.zeros(K + 1)
        M[K] = 1.0  # left limit at lam mu
        rho, zeta = F.atom_weight, F.atom_location
        for i in range(K - 1, -1, -1):
            m = min(kmax, K - i)
            rest = w_lo[1:m] @ M[i + 1 : i + m] + w_hi[:m] @ M[i + 1 : i + m + 1]
            atom = 0.0
            if rho > 0 and x[i] + zeta < self.top:
                atom = rho * float(np.interp(x[i] + zeta, x, M))
            M[i] = (1.0 + rest + atom) / (1.0 - w_lo[0])
        self.nodes = x
        self.values = M
        cell = 0.5 * (M[1:] + M[:-1]) * h
        self._cum_from_top = np.concatenate([np.cumsum(cell[::-1])[::-1], [0.0]])

    def __call__(self, x):
        xa = np.asarray(x, dtype=float)
        if self.nodes is None:
            mu = self.F.point
            out = np.where(xa < self.top, np.ceil((self.top - xa) / mu - 1e-12), 0.0)
        else:
            out = np.where(xa < self.top, np.interp(xa, self.nodes, self.values), 0.0)
        return float(out) if np.ndim(x) == 0 else out

    def integral(self, x):
        """Integral of M over [x, lam mu] (zero above lam mu)."""
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros_like(xa)
        for idx, t in enumerate(xa):
            if t >= self.top:
                continue
            if self.nodes is None:
                mu = self.F.point
                span = self.top - t
                m = int(math.ceil(span / mu - 1e-12))
                # M equals k on (top - k mu, top - (k-1) mu]
                out[idx] = sum(k * (min(k * mu, span) - (k - 1) * mu) for k in range(1, m + 1))
                continue
            t = max(t, 0.0)
            j = min(int(np.searchsorted(self.nodes, t, side="right")) - 1, self.nodes.size - 2)
            x1 = self.nodes[j + 1]
            m_t = float(np.interp(t, self.nodes, self.values))
            out[idx] = 0.5 * (m_t + self.values[j + 1]) * (x1 - t) + self._cum_from_top[j + 1]
        return float(out[0]) if np.ndim(x) == 0 else out


@lru_cache(maxsize=64)
def _jump_count(lam: float, F: InnovationDist, step: float | None) -> JumpCount:
    return JumpCount(lam, F, step)


def expected_jump_count_M(params: ModelParams, F: InnovationDist, x, step: float | None = None):
    """Expected number of innovations needed to lift the stock from x to lam mu."""
    return _jump_count(params.lam, F, step)(x)


def solve_y_f(params: ModelParams, F: InnovationDist, step: float | None = None) -> float:
    """Unique y in (0, lam mu) with y (n - 1) = int_y^{lam mu} M / lam."""
    Mf = _jump_count(params.lam, F, step)
    g = lambda y: y * (params.n - 1) - Mf.integral(y) / params.lam
    lo, hi = 0.0, Mf.top
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def y_f_exponential_closed_form(params: ModelParams, eps: float) -> float:
    lam, n = params.lam, params.n
    return eps * (1.0 + lam * n - math.sqrt((n * n - 1) * lam * lam + 2 * (n - 1) * lam + 1.0))


def forced_value_via_counts(params: ModelParams, F: InnovationDist, x, step: float | None = None):
    """v_f(x) = x + int_x^{lam mu} M / lam on [y_f, lam mu]."""
    Mf = _jump_count(params.lam, F, step)
    xa = np.asarray(x, dtype=float)
    out = xa + Mf.integral(xa) / params.lam
    return float(out) if np.ndim(x) == 0 else out


def forced_effort_via_counts(params: ModelParams, F: InnovationDist, x, step: float | None = None):
    Mf = _jump_count(params.lam, F, step)
    xa = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.clip(Mf.integral(xa) / params.lam / ((params.n - 1) * xa), 0.0, 1.0)
    out = np.where(xa <= 0, 1.0, out)
    return float(out) if np.ndim(x) == 0 else out


# --------------------------------------------------------------------------
# Closed forms for the atom-plus-exponential example
# --------------------------------------------------------------------------


def _mixture_parts(params: ModelParams, F: InnovationDist):
    if F.variant not in (ATOM_EXP, EXPONENTIAL):
        raise DomainError("closed form needs an atom-plus-exponential or exponential law")
    rho = F.atom_weight
    x_f = params.lam * F.mean
    if rho > 0 and F.zeta < x_f:
        raise DomainError(f"closed form needs zeta >= x_f ({F.zeta} < {x_f})")
    return params.lam, params.n, rho, F.eps, x_f


def _middle_branch(params: ModelParams, F: InnovationDist, x):
    lam, n, rho, eps, x_f = _mixture_parts(params, F)
    x = np.asarray(x, dtype=float)
    if rho == 0:
        # rho -> 0 limit: M is affine, M(s) = 1 + lam - s / eps
        integral = ((1.0 + lam) * (x_f - x) - (x_f**2 - x**2) / (2.0 * eps)) / lam
        value = x + integral
    else:
        core = eps * (1.0 / rho - 1.0) * np.expm1(rho / eps * (x - x_f))
        value = (core - (1.0 - lam * rho) * x + x_f) / (lam * rho)
        integral = value - x
    with np.errstate(divide="ignore", invalid="ignore"):
        effort = integral / ((n - 1) * x)
    return effort, value


def closed_form_y_f(params: ModelParams, F: InnovationDist) -> float:
    """Point where the interior effort formula equals one."""
    lam, n, rho, eps, x_f = _mixture_parts(params, F)
    if rho == 0:
        return y_f_exponential_closed_form(params, eps)
    g = lambda y: float(_middle_branch(params, F, y)[0]) - 1.0
    lo, hi = x_f * 1e-9, x_f
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def forced_closed_form_linear(params: ModelParams, F: InnovationDist, x) -> tuple:
    """(alpha_f(x), v_f(x)) from the closed forms. Below y_f the value is
    available only for the pure exponential law."""
    lam, n, rho, eps, x_f = _mixture_parts(params, F)
    y_f = closed_form_y_f(params, F)
    xa = np.asarray(x, dtype=float)
    if np.any(xa < y_f - 1e-15) and rho > 0:
        raise DomainError("below y_f the closed-form value is only available when rho = 0")
    eff_mid, val_mid = _middle_branch(params, F, np.clip(xa, y_f, x_f))
    effort = np.where(xa >= x_f, 0.0, np.where(xa <= y_f, 1.0, eff_mid))
    value = np.where(xa >= x_f, xa, val_mid)
    if rho == 0:
        low = n * y_f * np.exp((xa - y_f) / (eps * (1.0 + lam * n)))
        value = np.where(xa < y_f, low, value)
    if np.ndim(x) == 0:
        return float(effort), float(value)
    return effort, value


# --------------------------------------------------------------------------
# Equilibrium verification
# --------------------------------------------------------------------------


@dataclass
class VerificationReport:
    value_gap: float
    margin_violation: float
    effort_gap: float
    worst_node: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _own_best_effort(P: PayoffSpec, lam: float, x: float, l: float, opp: float) -> float:
    """Maximiser of Gamma_*(a, a + opp, x, l) over a in [0, 1]."""
    h = lambda a: l - float(P.b(x)) + float(P.c(a, x)) - (1.0 / lam + a + opp) * float(P.c1(a, x))
    if P.is_linear:
        return 1.0 if h(0.0) > 0 else 0.0
    if h(0.0) <= 0:
        return 0.0
    if h(1.0) >= 0:
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if h(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _gamma_star_scalar(P, lam, a, a_hat, x, l):
    return (float(P.b(x)) - float(P.c(a, x)) + a_hat * lam * l) / (1.0 + a_hat * lam)


def verify_equilibrium(solution: ForcedSolution, params: ModelParams, P: PayoffSpec, F: InnovationDist,
                       mode: str = "f") -> VerificationReport:
    """Best-response value against opponents who play the candidate effort,
    and the sign agreement of the own marginal gain."""
    st = solution.stencil
    x = st.nodes
    alpha = solution.alpha_f.values
    lam, n = params.lam, params.n

    def node_map(i, t0, l_of, lo, hi):
        xi = float(x[i])
        opp = (n - 1) * float(alpha[i])

        def h(t):
            l = l_of(t)
            a = _own_best_effort(P, lam, xi, l, opp)
            return _gamma_star_scalar(P, lam, a, a + opp, xi, l)

        return solve_scalar_fixed_point(h, t0, lo, hi)

    lo = P.b(x)
    hi = lo + n * lam * (float(P.b(F.mean)) - float(P.b(0.0)))
    v_hat = backward_sweep(st, solution.v_f.values, node_map, mode, lo, hi)
    l = st.apply(v_hat, mode)
    opp = (n - 1) * alpha
    h = l - P.b(x) + P.c(alpha, x) - (1.0 / lam + alpha + opp) * P.c1(alpha, x)
    scale = 1e-9 * (1.0 + np.abs(l))
    viol = np.where(alpha >= 1.0 - 1e-12, np.maximum(-h, 0.0), np.where(alpha <= 1e-12, np.maximum(h, 0.0), np.abs(h)))
    strict = np.abs(h) > scale
    br = np.where(h > 0, 1.0, 0.0)
    if not P.is_linear:
        br = np.array([_own_best_effort(P, lam, float(x[i]), float(l[i]), float(opp[i])) for i in range(x.size)])
        strict = np.ones_like(strict)
    eff_gap = np.where(strict, np.abs(alpha - br), 0.0)
    value_gap = np.abs(v_hat - solution.v_f.values)
    k = int(np.argmax(viol))
    return VerificationReport(
        value_gap=float(value_gap.max()),
        margin_violation=float(viol.max()),
        effort_gap=float(eff_gap.max()),
        worst_node=float(x[k]),
    )


# --------------------------------------------------------------------------
# Detrimental innovations
# --------------------------------------------------------------------------


@dataclass
class DetrimentReport:
    is_detrimental: bool
    first_decrease_interval: tuple[float, float] | None
    longrun_lhs: float | None
    longrun_applicable: bool
    linear_test_M: float | None
    linear_test_lambda: float | None
    mixture_xhat: float | None
    mixture_xhat_argmin: float | None
    mixture_criterion_detrimental: bool | None

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["first_decrease_interval"] = list(self.first_decrease_interval) if self.first_decrease_interval else None
        return d


def _first_decrease(x: np.ndarray, v: np.ndarray, x0: float, tol: float = DETRIMENT_TOL):
    mask = x >= x0 - 1e-15
    xs, vs = x[mask], v[mask]
    drops = np.nonzero(np.diff(vs) < -tol)[0]
    if drops.size == 0:
        return None
    start = int(drops[0])
    end = start
    while end + 1 < vs.size - 1 and vs[end + 2] < vs[end + 1] - 0.0:
        end += 1
    return float(xs[start]), float(xs[end + 1])


def mixture_xhat_display(params: ModelParams, F: InnovationDist) -> float:
    lam, rho, eps, zeta = params.lam, F.rho, F.eps, F.zeta
    return lam * rho * zeta + eps * (lam * (1 - rho) - eps / rho * math.log((1 - rho) / (1 - lam * rho)))


def mixture_xhat_argmin(params: ModelParams, F: InnovationDist) -> float:
    """Stationary point of the middle branch of v_f: x_f - (eps / rho) log((1 - rho) / (1 - lam rho))."""
    lam, rho, eps = params.lam, F.rho, F.eps
    return lam * F.mean - eps / rho * math.log((1 - rho) / (1 - lam * rho))


def detriment_report(
    solution: ForcedSolution, params: ModelParams, P: PayoffSpec, F: InnovationDist, x0: float | None = None
) -> DetrimentReport:
    x0 = params.x0 if x0 is None else x0
    x = solution.v_f.nodes
    v = solution.v_f.values
    interval = _first_decrease(x, v, x0)
    if F.small_innovations:
        detrimental = interval is not None
    else:
        detrimental = _chain_decreases(solution, F, x0)
        if not detrimental:
            interval = None

    x_f = solution.x_f
    longrun = None
    applicable = x_f is not None and 0 < x_f < math.inf
    if applicable:
        xf = np.float64(x_f)
        longrun = float(
            P.bp(xf) * P.c11(0.0, xf)
            + (params.n - 1) * P.c1(0.0, xf) * (params.lam * expect_F(F, P.bp, float(xf)) - P.c12(0.0, xf))
        )

    m_val = lam_val = None
    if P.is_linear:
        y_f = solve_y_f(params, F) if F.variant != DEGENERATE else (solution.y_f or 0.0)
        m_val = float(expected_jump_count_M(params, F, max(x0, y_f)))
        lam_val = params.lam

    xhat = xhat_arg = crit = None
    if P.is_linear and F.variant == ATOM_EXP and F.rho > 0 and params.lam * F.rho < 1:
        xhat = mixture_xhat_display(params, F)
        xhat_arg = mixture_xhat_argmin(params, F)
        lhs = (1 + params.lam * F.rho * (params.n - 1)) * xhat_arg
        rhs = F.eps * (1 - params.lam * F.rho) + params.lam * F.rho * F.zeta
        crit = bool(lhs > rhs)
    return DetrimentReport(detrimental, interval, longrun, applicable, m_val, lam_val, xhat, xhat_arg, crit)


def _chain_decreases(solution: ForcedSolution, F: InnovationDist, x0: float) -> bool:
    """Scan v_f along the deterministic jump chain x0 + k mu while effort is
    positive."""
    mu = F.point
    x_stop = solution.x_f if solution.x_f is not None else solution.v_f.x_max
    k = 0
    while x0 + k * mu < x_stop - 1e-12 and x0 + (k + 1) * mu <= solution.v_f.x_max + mu:
        a, b = solution.v_f(x0 + k * mu), solution.v_f(x0 + (k + 1) * mu)
        if b < a - DETRIMENT_TOL:
            return True
        k += 1
    return False


# --------------------------------------------------------------------------
# Necessity checks
# --------------------------------------------------------------------------


@dataclass
class NecessityReport:
    separable_checked: bool
    separable_monotone: bool | None
    separable_worst: float | None
    average_pass: bool
    average_worst_node: float
    average_worst_margin: float
    chain_checked: bool
    chain_monotone: bool | None

    @property
    def passed(self) -> bool:
        ok = self.average_pass
        if self.separable_checked:
            ok = ok and bool(self.separable_monotone)
        if self.chain_checked:
            ok = ok and bool(self.chain_monotone)
        return ok

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["passed"] = self.passed
        return d


def necessity_checks(
    params: ModelParams, P: PayoffSpec, F: InnovationDist, solution: ForcedSolution | None = None,
    grid: GridConfig | None = None,
) -> NecessityReport:
    sol = solution or solve_forced(params, P, F, grid)
    x = sol.v_f.nodes
    v = sol.v_f.values
    sep = sep_mono = sep_worst = None
    sep = P.is_separable
    if sep:
        d = np.diff(v)
        sep_worst = float(d.min())
        sep_mono = bool(sep_worst >= -1e-10)
    avg = sol.stencil.L_f(v) - v
    k = int(np.argmin(avg))
    chain = F.variant == DEGENERATE
    chain_mono = None
    if chain:
        chain_mono = not _chain_decreases(sol, F, params.x0)
    return NecessityReport(
        separable_checked=bool(sep),
        separable_monotone=sep_mono,
        separable_worst=sep_worst,
        average_pass=bool(avg.min() >= -1e-8),
        average_worst_node=float(x[k]),
        average_worst_margin=float(avg[k]),
        chain_checked=chain,
        chain_monotone=chain_mono,
    )
