"""Variant where effort shifts the size distribution of innovations:
F_a = rho a * atom(zeta) + (1 - rho a) * Exp(eps), arrival rate lam per agent."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ValidationError


@dataclass(frozen=True)
class EndogenousParams:
    lam: float
    n: int
    rho: float
    zeta: float
    eps: float
    x0: float = 0.0

    def __post_init__(self) -> None:
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValidationError(f"lambda must be positive, got {self.lam}")
        if int(self.n) != self.n or self.n < 2:
            raise ValidationError(f"n must be an integer >= 2, got {self.n}")
        if not (0 < self.rho <= 1):
            raise ValidationError(f"rho must lie in (0, 1], got {self.rho}")
        if not (self.zeta > self.eps > 0):
            raise ValidationError("need zeta > eps > 0")
        if self.x0 < 0:
            raise ValidationError("x0 must be non-negative")

    @property
    def xbar_star(self) -> float:
        return self.n * self.lam * self.rho * (self.zeta - self.eps)

    @property
    def xbar_f(self) -> float:
        return self.lam * self.rho * (self.zeta - self.eps)

    @property
    def ybar_f(self) -> float:
        return (self.eps * (1 + self.lam * self.n) + self.xbar_f) / (1 + self.lam * self.rho * (self.n - 1))

    @property
    def drift(self) -> float:
        """Value of the small improvements that arrive without effort."""
        return self.eps * self.lam * self.n


def endo_cutoffs(params: EndogenousParams) -> dict:
    return {"xbar_star": params.xbar_star, "xbar_f": params.xbar_f, "ybar_f": params.ybar_f}


@dataclass
class EndoBenchmark:
    effort: np.ndarray | float
    value: np.ndarray | float
    xbar_star: float


def endo_benchmark(params: EndogenousParams, x) -> EndoBenchmark:
    lam, n, rho, eps, zeta = params.lam, params.n, params.rho, params.eps, params.zeta
    xs = params.xbar_star
    if zeta < xs:
        raise DomainError(f"closed form needs zeta >= xbar_star = {xs:.6g}")
    k = lam * n * rho
    xa = np.asarray(x, dtype=float)
    expo = np.exp((1 + k) / (eps * (1 + lam * n)) * (np.minimum(xa, xs) - xs))
    low = k / (1 + k) ** 2 * (eps * (1 / rho - 1) * expo + (1 + k) * (xa + params.drift) + zeta + params.drift + xs)
    value = np.where(xa <= xs, low, xa + params.drift)
    effort = np.where(xa < xs, 1.0, 0.0)
    if np.ndim(x) == 0:
        return EndoBenchmark(float(effort), float(value), xs)
    return EndoBenchmark(effort, value, xs)


@dataclass
class EndoEquilibrium:
    effort: np.ndarray | float
    value: np.ndarray | float
    xbar_f: float
    ybar_f: float
    jumps: tuple[float, float]


def _full_effort_branch(params: EndogenousParams):
    """Value in the full-effort region: the solution of
    v (1 + n lam) = n lam [rho v(x + zeta) + (1 - rho) E_exp v(x + z)]
    that is affine plus one exponential, matched to the middle branch at
    ybar_f, or to the left limit at xbar_f when ybar_f >= xbar_f."""
    lam, n, rho, eps, zeta = params.lam, params.n, params.rho, params.eps, params.zeta
    N = n * lam
    a = (1 + N * rho) / (eps * (1 + N))
    p = N * rho / (1 + N * rho)
    r = (p - N * rho / (1 + N) + N * rho * (zeta + params.drift) / (eps * (1 + N))) / a
    xf = params.xbar_f
    if params.ybar_f < xf:
        y = params.ybar_f
        anchor = _middle_value(params, y)
    else:
        y = xf
        d = params.drift
        anchor = N * (rho * (xf + zeta + d) + (1 - rho) * (xf + eps + d)) / (1 + N)
    K = anchor - (p * y + r)
    return lambda t: p * t + r + K * np.exp(a * (t - y))


def _left_limits(params: EndogenousParams) -> tuple[float, float]:
    """Effort and value just below xbar_f."""
    xf = params.xbar_f
    if params.ybar_f < xf:
        return min(1.0, float(_middle_effort(params, xf))), float(_middle_value(params, xf))
    return 1.0, float(_full_effort_branch(params)(xf))


def _middle_value(params: EndogenousParams, x):
    return params.zeta + params.drift + (1 - 1 / (params.lam * params.rho)) * (x - params.eps)


def _middle_effort(params: EndogenousParams, x):
    lam, n, rho, eps = params.lam, params.n, params.rho, params.eps
    with np.errstate(divide="ignore", invalid="ignore"):
        return (eps * (1 + lam * n) + params.xbar_f - x) / (lam * rho * (n - 1) * x)


def endo_equilibrium(params: EndogenousParams, x) -> EndoEquilibrium:
    xf, yf = params.xbar_f, params.ybar_f
    if params.zeta < xf:
        raise DomainError(f"closed form needs zeta >= xbar_f = {xf:.6g}")
    xa = np.asarray(x, dtype=float)
    low = _full_effort_branch(params)
    yy = min(yf, xf)
    effort = np.where(xa <= yy, 1.0, np.where(xa <= xf, _middle_effort(params, np.maximum(xa, 1e-300)), 0.0))
    value = np.where(xa <= yy, low(np.minimum(xa, yy)), np.where(xa <= xf, _middle_value(params, xa), xa + params.drift))
    left_a, left_v = _left_limits(params)
    jumps = (left_a - 0.0, left_v - (xf + params.drift))
    if np.ndim(x) == 0:
        return EndoEquilibrium(float(effort), float(value), xf, yf, jumps)
    return EndoEquilibrium(effort, value, xf, yf, jumps)


def monotone_condition(params: EndogenousParams) -> bool:
    """Threshold zeta/eps > 1 + (1 + lam n)/(lam^2 rho^2 (n - 1)), which is
    equivalent to ybar_f < xbar_f. With lam rho < 1 the middle branch then
    has negative slope, so this flags a value dip rather than monotonicity;
    ``value_monotone`` gives the scanned answer."""
    lam, n, rho = params.lam, params.n, params.rho
    return params.zeta / params.eps > 1 + (1 + lam * n) / (lam**2 * rho**2 * (n - 1))


def value_monotone(params: EndogenousParams, nodes: int = 4001) -> bool:
    """Node scan of the closed-form value on [0, xbar_f)."""
    x = np.linspace(0.0, params.xbar_f, nodes)[:-1]
    v = np.asarray(endo_equilibrium(params, x).value)
    return bool(np.all(np.diff(v) >= -1e-12 * max(1.0, float(np.abs(v).max()))))


# --------------------------------------------------------------------------
# Grid solves of the primed Bellman equations
# --------------------------------------------------------------------------


class _Segment:
    """Uniform piecewise-linear segment with exact exponential cell weights."""

    def __init__(self, lo: float, hi: float, h: float, eps: float):
        K = max(int(math.ceil((hi - lo) / h)), 2)
        self.x = np.linspace(lo, hi, K + 1)
        self.h = self.x[1] - self.x[0]
        q = math.exp(-self.h / eps)
        A = -math.expm1(-self.h / eps)
        B = (eps / self.h) * A - q
        kmax = min(K, int(math.ceil(45.0 * eps / self.h)) + 1)
        decay = q ** np.arange(kmax)
        self.w_lo = decay * (A - B)
        self.w_hi = decay * B
        self.kmax = kmax
        self.q = q
        self.v = np.zeros(K + 1)

    def exp_rest(self, i: int, tail: float) -> tuple[float, float]:
        """(weight on v_i, remaining part) of E_exp v(x_i + z), with ``tail``
        the exponential expectation from the segment end onwards."""
        K = self.x.size - 1
        m = min(self.kmax, K - i)
        v = self.v
        rest = self.w_hi[0] * v[i + 1] if m >= 1 else 0.0
        if m > 1:
            rest += self.w_lo[1:m] @ v[i + 1 : i + m] + self.w_hi[1:m] @ v[i + 2 : i + m + 1]
        if m == K - i:
            rest += self.q ** (K - i) * tail
        return (self.w_lo[0] if m >= 1 else 0.0), rest


@dataclass
class EndoDP:
    x: np.ndarray
    v_eq: np.ndarray
    alpha_eq: np.ndarray
    x_star: np.ndarray
    v_star: np.ndarray
    alpha_star: np.ndarray
    br_violation: float
    br_worst: float
    closed_form_gap: float | None
    benchmark_gap: float | None
    segments: dict = field(default_factory=dict, repr=False)


def _solve_segment(seg: _Segment, tail: float, node_fn) -> float:
    """Top-down exact solve; returns E_exp v(x_0 + z) for the segment start."""
    for i in range(seg.x.size - 1, -1, -1):
        w_self, rest = seg.exp_rest(i, tail)
        seg.v[i] = node_fn(i, w_self, rest)
    w_self, rest = seg.exp_rest(0, tail)
    return w_self * seg.v[0] + rest


def solve_endogenous_dp(params: EndogenousParams, step: float | None = None, span: float | None = None) -> EndoDP:
    """Policy evaluation of the primed payoff equation under the displayed
    equilibrium effort, on two segments split at the effort cutoff; a
    best-response residual; and a bang-bang solve of the planner equation."""
    lam, n, rho, eps, zeta = params.lam, params.n, params.rho, params.eps, params.zeta
    N = n * lam
    drift = params.drift
    h = step or eps / 20.0
    xf = params.xbar_f
    eq = endo_equilibrium(params, 0.0)
    X = xf + zeta + (span if span is not None else 1.0)

    right = _Segment(xf, X, h * 4, eps)
    left = _Segment(0.0, xf, h, eps)

    def v_eval(y: float) -> float:
        if y <= xf:
            return float(np.interp(y, left.x, left.v))
        if y <= X:
            return float(np.interp(y, right.x, right.v))
        return y + drift

    # right segment: no effort, tail equals the no-effort value
    tail_R = X + eps + drift

    def node_right(i, w_self, rest):
        x = right.x[i]
        return (x + N * rest) / (1 + N - N * w_self)

    E_right0 = _solve_segment(right, tail_R, node_right)
    alpha_left = np.asarray(endo_equilibrium(params, left.x).effort, dtype=float)
    alpha_left[-1] = _left_limits(params)[0]

    def node_left(i, w_self, rest):
        x, a = left.x[i], alpha_left[i]
        atom = v_eval(x + zeta)
        num = x * (1 - a) + N * (rho * a * atom + (1 - rho * a) * rest)
        return num / (1 + N - N * (1 - rho * a) * w_self)

    _solve_segment(left, E_right0, node_left)

    # best-response margins -x + lam rho (v(x+zeta) - E_exp v(x+z)) on the left segment
    marg = np.empty(left.x.size)
    for i in range(left.x.size):
        w_self, rest = left.exp_rest(i, E_right0)
        e = w_self * left.v[i] + rest
        marg[i] = -left.x[i] + lam * rho * (v_eval(left.x[i] + zeta) - e)
    a = alpha_left
    viol = np.where(a >= 1 - 1e-12, np.maximum(-marg, 0), np.where(a <= 1e-12, np.maximum(marg, 0), np.abs(marg)))
    k = int(np.argmax(viol[:-1]))  # the cutoff node holds the left limit

    x_all = np.concatenate([left.x, right.x])
    v_all = np.concatenate([left.v, right.v])
    a_all = np.concatenate([alpha_left, np.zeros(right.x.size)])
    cf = endo_equilibrium(params, x_all)
    cf_v = np.asarray(cf.value, dtype=float)
    cf_v[left.x.size - 1] = _left_limits(params)[1]
    away = np.abs(x_all - xf) > 2 * h * 4
    gap = float(np.max(np.abs(v_all - cf_v)[away]))

    xs, vs, als = _benchmark_dp(params, h)
    bgap = None
    if zeta >= params.xbar_star:
        bgap = float(np.max(np.abs(vs - endo_benchmark(params, xs).value)))
    return EndoDP(
        x_all, v_all, a_all, xs, vs, als, float(viol[:-1].max()), float(left.x[k]), gap, bgap,
        {"left": left, "right": right},
    )


def _benchmark_dp(params: EndogenousParams, h: float):
    lam, n, rho, eps, zeta = params.lam, params.n, params.rho, params.eps, params.zeta
    N = n * lam
    X = params.xbar_star + zeta + 1.0
    seg = _Segment(0.0, X, h * 2, eps)
    alpha = np.zeros(seg.x.size)
    tail = X + eps + params.drift

    def v_eval(y):
        return float(np.interp(y, seg.x, seg.v)) if y <= X else y + params.drift

    def node(i, w_self, rest):
        x = seg.x[i]
        atom = v_eval(x + zeta)
        cands = []
        for a in (0.0, 1.0):
            num = x * (1 - a) + N * (rho * a * atom + (1 - rho * a) * rest)
            cands.append(num / (1 + N - N * (1 - rho * a) * w_self))
        alpha[i] = 1.0 if cands[1] > cands[0] else 0.0
        return max(cands)

    _solve_segment(seg, tail, node)
    return seg.x, seg.v.copy(), alpha
