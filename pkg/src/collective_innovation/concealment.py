"""Game with concealment: discrete-time single-agent value, disclosure-cutoff
bounds, the finite-horizon equilibrium path, and welfare diagnostics."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConsistencyError, ConvergenceError, DomainError, ValidationError
from .forced import ForcedSolution
from .model import DEGENERATE, InnovationDist, ModelParams, PayoffSpec, expect_F
from .numerics import GridFn, solve_scalar_fixed_point

TAIL_SCALES = 37.0  # exponential tail mass beyond this many means is below 1e-16
Q_ROOT_TOL = 1e-10


# --------------------------------------------------------------------------
# Lattice: uniform stock grid with a discrete increment law
# --------------------------------------------------------------------------


def default_step(params: ModelParams, F: InnovationDist, delta: float) -> float:
    scale = F.exp_mean if F.exp_weight > 0 else F.mean
    return min(scale / 10.0, delta * params.lam * F.mean)


def _support_span(F: InnovationDist) -> float:
    span = 0.0
    if F.exp_weight > 0:
        span = TAIL_SCALES * F.exp_mean
    if F.atom_weight > 0:
        span = max(span, F.atom_location)
    return span


class Lattice:
    """Nodes x0 + i h. An increment falling in [d h, (d+1) h) is placed at
    the cell midpoint and split equally between shifts d and d+1, so the
    increment law on the lattice has weights w_d = (c_d + c_{d-1}) / 2 with
    c_d = F((d+1) h) - F(d h)."""

    def __init__(self, x0: float, h: float, F: InnovationDist, upper: float):
        if h <= 0:
            raise ValidationError("lattice step must be positive")
        self.x0 = float(x0)
        self.h = float(h)
        D = int(math.ceil(_support_span(F) / h)) + 2
        edges = np.arange(D + 1) * h
        cdf = np.asarray(F.cdf(edges), dtype=float)
        c = np.diff(cdf)
        c[-1] += 1.0 - cdf[-1]
        w = np.zeros(D + 1)
        w[:-1] += 0.5 * c
        w[1:] += 0.5 * c
        self.w = w
        self.D = D
        self.n_core = int(math.ceil((upper - x0) / h)) + 2
        self.size = self.n_core + D + 1
        self.nodes = x0 + h * np.arange(self.size)

    def expect(self, values: np.ndarray, count: int | None = None) -> np.ndarray:
        """E[values(k_i + Z)] for the first ``count`` nodes."""
        count = self.n_core if count is None else count
        win = np.lib.stride_tricks.sliding_window_view(values, self.D + 1)[:count]
        return win @ self.w

    def spread(self, mass: np.ndarray) -> np.ndarray:
        """Distribution of k + Z for masses on the first nodes."""
        out = np.zeros(self.size)
        conv = np.convolve(mass, self.w)
        out[: conv.size] = conv[: self.size]
        return out


# --------------------------------------------------------------------------
# Single-agent discrete-time value
# --------------------------------------------------------------------------


def _best_single_effort(A: float, disc: float, dl: float, gain: float) -> float:
    """Largest maximiser of A (1 - a) + disc (1 - e^{-a dl}) gain on [0, 1]."""
    if gain <= 0:
        return 1.0 if A == 0 and gain == 0 else 0.0
    if A <= 0:
        return 1.0
    ratio = A / (disc * dl * gain)
    if ratio >= 1.0:
        return 0.0
    return min(1.0, -math.log(ratio) / dl)


def _single_agent_on_lattice(params: ModelParams, lat: Lattice, delta: float) -> np.ndarray:
    lam = params.lam
    disc = math.exp(-delta)
    dl = delta * lam
    k = lat.nodes
    v = k.copy()  # identity seed, a lower bound
    w0 = lat.w[0]
    for i in range(lat.size - 1, -1, -1):
        hi_idx = min(lat.size, i + lat.D + 1)
        tail_vals = v[i + 1 : hi_idx]
        R = float(lat.w[1 : 1 + tail_vals.size] @ tail_vals)
        missing = lat.w[1 + tail_vals.size :]
        if missing.size:
            d = np.arange(1 + tail_vals.size, lat.D + 1)
            R += float(missing @ (k[i] + d * lat.h))
        A = k[i] * (1.0 - disc)

        def node(t: float, A=A, R=R) -> float:
            gain = w0 * t + R - t
            a = _best_single_effort(A, disc, dl, gain)
            return A * (1.0 - a) + disc * (t + (1.0 - math.exp(-a * dl)) * gain)

        v[i] = solve_scalar_fixed_point(node, v[i], k[i], k[i] + 2 * lat.D * lat.h + 1.0)
    return v


def single_agent_value_discrete(
    params: ModelParams, P: PayoffSpec, F: InnovationDist, delta: float, k_grid=None
) -> GridFn:
    """Single-agent value at step length delta on a uniform grid. Beyond the
    grid the identity is used, which is exact once zero effort is optimal."""
    _require_linear(P)
    if delta <= 0:
        raise ValidationError("delta must be positive")
    if k_grid is None:
        h = default_step(params, F, delta)
        upper = max(params.lam * F.mean * params.n, 1.0) * 1.5
        lat = Lattice(params.x0, h, F, upper)
    else:
        g = np.asarray(k_grid, dtype=float)
        steps = np.diff(g)
        if g.size < 2 or np.any(np.abs(steps - steps[0]) > 1e-9 * max(1.0, steps[0])):
            raise ValidationError("k-grid must be uniform")
        lat = Lattice(g[0], float(steps[0]), F, float(g[-1]))
    v = _single_agent_on_lattice(params, lat, delta)
    return GridFn(lat.nodes, v, "EqualsB", None)


def _require_linear(P: PayoffSpec | None) -> None:
    if P is not None and not P.is_linear:
        raise DomainError("concealment analysis needs linear multiplicative payoffs")


# --------------------------------------------------------------------------
# Cutoff bounds
# --------------------------------------------------------------------------


@dataclass
class QBounds:
    q_minus: float
    q_plus: float
    feasible: bool
    identity_from: float


def _q_minus(params: ModelParams, lat: Lattice, v_single: np.ndarray, delta: float) -> float:
    lam = params.lam
    k = lat.nodes[: lat.n_core]
    gain = lat.expect(v_single) - v_single[: lat.n_core]
    g = delta * lam * math.exp(-delta * (1 + lam)) * gain - k * (1 - math.exp(-delta))
    ok = np.nonzero(g >= 0)[0]
    if ok.size == 0:
        return float(k[0])
    j = int(ok[-1])
    if j + 1 >= k.size:
        return float(k[j])
    return float(k[j] + (k[j + 1] - k[j]) * g[j] / (g[j] - g[j + 1]))


def _q_plus(params: ModelParams, F: InnovationDist, delta: float) -> float:
    lam, n, mu, x0 = params.lam, params.n, F.mean, params.x0
    e_opp = math.exp(-lam * delta * (n - 1))
    a = np.linspace(0.0, 1.0, 2001)
    e_own = np.exp(-a * lam * delta)
    B = (1 - e_opp) * e_own + e_opp * (1 - e_own) + 2 * (1 - e_opp) * (1 - e_own)
    # bound(k) < k  <=>  k (1 - e^{-delta}) > x0 (1 - e^{-delta})(1 - a) + e^{-delta} mu B(a)
    k_needed = x0 * (1 - a) + math.exp(-delta) * mu * B / (-math.expm1(-delta))
    identity_from = delta * lam * mu / math.expm1(delta)
    return float(max(k_needed.max(), identity_from))


def q_bounds(params: ModelParams, F: InnovationDist, delta: float, step: float | None = None) -> QBounds:
    h = step or default_step(params, F, delta)
    q_plus = _q_plus(params, F, delta)
    lat = Lattice(params.x0, h, F, q_plus)
    v = _single_agent_on_lattice(params, lat, delta)
    q_minus = _q_minus(params, lat, v, delta)
    return QBounds(q_minus, q_plus, bool(q_minus <= q_plus), delta * params.lam * F.mean / math.expm1(delta))


# --------------------------------------------------------------------------
# Finite-horizon equilibrium path
# --------------------------------------------------------------------------


@dataclass
class ConcealmentConfig:
    delta: float = 0.02
    horizon: int = 400
    step: float | None = None
    damping: float = 0.5
    fp_tol: float = 1e-6
    max_outer_iter: int = 1000
    min_damping: float = 1.0 / 256

    def __post_init__(self) -> None:
        if self.delta <= 0:
            raise ValidationError("delta must be positive")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValidationError("horizon must be a positive integer")
        if not (0 < self.min_damping <= self.damping <= 1):
            raise ValidationError("need 0 < min_damping <= damping <= 1")
        if self.step is not None and self.step <= 0:
            raise ValidationError("step must be positive")


@dataclass
class LipschitzReport:
    eps_emp: float
    gamma0: np.ndarray
    q_bar: float
    value_steps: np.ndarray
    belief_steps: np.ndarray
    bound: np.ndarray

    @property
    def holds(self) -> bool:
        return bool(np.all(self.value_steps <= self.bound + 1e-12) and np.all(self.belief_steps <= self.bound + 1e-12))


@dataclass
class ConcealmentSolution:
    delta: float
    horizon: int
    k: np.ndarray
    q: np.ndarray
    alpha: np.ndarray
    v: np.ndarray
    beliefs: np.ndarray
    v_single: GridFn
    q_minus: float
    q_plus: float
    converged: bool
    residual: float
    iterations: int
    trace: list = field(default_factory=list)
    bellman_residual: float = 0.0
    lipschitz: LipschitzReport | None = None
    lattice: Lattice | None = field(default=None, repr=False)
    trivial: bool = False

    def value_at(self, m: int, k: float) -> float:
        """v_m(k) for m = 1..M+1, equal to the single-agent value beyond the grid."""
        if k > self.k[-1]:
            return float(self.v_single(k))
        return float(np.interp(k, self.k, self.v[m - 1]))

    @property
    def v_c(self) -> float:
        return self.value_at(1, self.k[0])

    def to_json(self) -> str:
        return json.dumps(
            {
                "delta": self.delta,
                "M": self.horizon,
                "q": [float(t) for t in self.q],
                "residual": self.residual,
                "converged": self.converged,
                "iterations": self.iterations,
                "q_minus": self.q_minus,
                "q_plus": self.q_plus,
                "v_c": self.v_c,
            },
            indent=2,
        )

    def matrix_csv(self, which: str) -> str:
        mat = {"alpha": self.alpha, "v": self.v, "G": self.beliefs}[which]
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["step"] + [repr(float(t)) for t in self.k])
        first = 0 if which == "G" else 1
        for m, row in enumerate(mat):
            wr.writerow([m + first] + [repr(float(t)) for t in row])
        return buf.getvalue()


def _ramp(y: np.ndarray, q: float, h: float) -> np.ndarray:
    """Disclosure probability at lattice points: 0 up to q, 1 from q + h,
    linear in between so the belief map is continuous in q."""
    return np.clip((y - q) / h, 0.0, 1.0)


@dataclass
class _StepLaw:
    P0: float
    Phi: np.ndarray  # CDF part of the largest disclosed value, excluding no-disclosure
    phi: np.ndarray


def _forward(lat: Lattice, n: int, dl: float, alpha: np.ndarray, q: np.ndarray, nb: int):
    """Beliefs over an opponent's private stock and the per-step law of the
    largest value disclosed by the n - 1 opponents."""
    M = q.size
    g = np.zeros(nb)
    g[0] = 1.0
    beliefs = np.zeros((M + 1, nb))
    beliefs[0] = g
    laws = []
    y = lat.nodes
    for m in range(M):
        stay = g * np.exp(-alpha[m] * dl)
        post = lat.spread(g - stay)
        post[:nb] += stay
        r = _ramp(y, q[m], lat.h)
        disc = post * r
        surv = post - disc
        p_bar = float(disc.sum())
        s = 1.0 - p_bar
        cum = np.cumsum(disc)
        P0 = s ** (n - 1)
        Phi = (s + cum) ** (n - 1) - P0
        phi = np.diff(Phi, prepend=0.0)
        laws.append(_StepLaw(P0, Phi, phi))
        if surv[nb:].sum() > 1e-12:
            raise ConsistencyError("belief support escaped the cutoff region")
        g = surv[:nb] / s if s > 1e-300 else np.zeros(nb)
        beliefs[m + 1] = g
    return beliefs, laws


def _continuation(law: _StepLaw, v_next: np.ndarray, v_single: np.ndarray) -> np.ndarray:
    """H(w) = P0 v_{m+1}(w) + E[v_single(max(w, kappa)); disclosure]."""
    pv = law.phi * v_single
    above = pv.sum() - np.cumsum(pv)
    return law.P0 * v_next + v_single * law.Phi + above


def _step_values(lat, law, v_next_full, v_single, A, disc, dl, nq):
    H = _continuation(law, v_next_full, v_single)
    EH = lat.expect(H, nq)
    gain = EH - H[:nq]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(gain > 0, A / (disc * dl * gain), np.inf)
    if A <= 0:
        a = np.where(gain >= 0, 1.0, 0.0)
    else:
        a = np.where(ratio >= 1.0, 0.0, np.clip(-np.log(np.where(ratio > 0, ratio, 1.0)) / dl, 0.0, 1.0))
        a = np.where(gain <= 0, 0.0, a)
    C = A * (1 - a) + disc * (H[:nq] + (1 - np.exp(-a * dl)) * gain)
    return a, C


def _backward(lat, laws, v_single, A, disc, dl, nq):
    M = len(laws)
    V = np.empty((M + 1, nq))
    V[M] = v_single[:nq]
    alpha = np.empty((M, nq))
    full = v_single.copy()
    for m in range(M - 1, -1, -1):
        full[:nq] = V[m + 1]
        a, C = _step_values(lat, laws[m], full, v_single, A, disc, dl, nq)
        alpha[m] = a
        V[m] = np.maximum(v_single[:nq], C)
    return V, alpha


def _q_root(k: np.ndarray, v: np.ndarray, lo: float, hi: float) -> float:
    """Smallest k in [lo, hi] with v(k) - k <= Q_ROOT_TOL on the interpolant."""
    g = v - k - Q_ROOT_TOL
    g_lo = float(np.interp(lo, k, g))
    if g_lo <= 0:
        return lo
    idx = np.nonzero((g <= 0) & (k > lo))[0]
    if idx.size == 0:
        return hi
    j = int(idx[0])
    k_prev, g_prev = (k[j - 1], g[j - 1]) if k[j - 1] > lo else (lo, g_lo)
    t = k_prev + (k[j] - k_prev) * g_prev / (g_prev - g[j])
    return float(min(max(t, lo), hi))


def _monotone_rows(alpha: np.ndarray, upto: np.ndarray, tol: float = 1e-9) -> bool:
    for m in range(alpha.shape[0]):
        row = alpha[m, : upto[m]]
        if row.size > 1 and np.any(np.diff(row) < -tol):
            return False
    return True


def solve_concealment(
    params: ModelParams, F: InnovationDist, cfg: ConcealmentConfig | None = None, P: PayoffSpec | None = None
) -> ConcealmentSolution:
    _require_linear(P)
    cfg = cfg or ConcealmentConfig()
    lam, n, delta, M = params.lam, params.n, cfg.delta, int(cfg.horizon)
    h = cfg.step or default_step(params, F, delta)
    q_plus = _q_plus(params, F, delta)
    lat = Lattice(params.x0, h, F, q_plus)
    v_single = _single_agent_on_lattice(params, lat, delta)
    q_minus = _q_minus(params, lat, v_single, delta)
    if q_minus > q_plus:
        raise ValidationError(f"delta={delta} too large: q_minus {q_minus:.6g} exceeds q_plus {q_plus:.6g}")
    nq = lat.n_core
    k = lat.nodes[:nq]
    v_single_fn = GridFn(lat.nodes, v_single, "EqualsB", None)

    if params.x0 >= lam * F.mean:
        q = np.full(M, q_minus)
        alpha = np.zeros((M, nq))
        V = np.tile(v_single[:nq], (M + 1, 1))
        beliefs = np.zeros((M + 1, nq))
        beliefs[:, 0] = 1.0
        return ConcealmentSolution(
            delta, M, k, q, alpha, V, np.cumsum(beliefs, axis=1), v_single_fn, q_minus, q_plus,
            True, 0.0, 0, [], 0.0, None, lat, trivial=True,
        )

    disc = math.exp(-delta)
    dl = delta * lam
    A = params.x0 * (1 - disc)

    q = np.full(M, q_minus)
    alpha = np.ones((M, nq))
    V = np.tile(v_single[:nq], (M + 1, 1))
    trace = []
    damping = cfg.damping
    converged = False
    residual = prev = math.inf
    it = calm = 0
    while it < cfg.max_outer_iter:
        it += 1
        beliefs, laws = _forward(lat, n, dl, alpha, q, nq)
        V_new, a_new = _backward(lat, laws, v_single, A, disc, dl, nq)
        q_new = np.array([_q_root(k, V_new[m], q_minus, q_plus) for m in range(M)])
        residual = float(
            max(np.abs(a_new - alpha).max(), np.abs(q_new - q).max(), np.abs(V_new - V).max())
        )
        trace.append(residual)
        if residual < cfg.fp_tol:
            converged = True
            break
        # halve the step on any increase, grow it back after three decreases
        if residual > prev:
            damping, calm = max(damping / 2, cfg.min_damping), 0
        else:
            calm += 1
            if calm == 3:
                damping, calm = min(damping * 1.5, cfg.damping), 0
        prev = residual
        alpha = (1 - damping) * alpha + damping * a_new
        q = (1 - damping) * q + damping * q_new
        V = V_new
    if not converged:
        raise ConvergenceError(
            f"concealment fixed point did not converge in {cfg.max_outer_iter} iterations (residual {residual:.3g})",
            trace,
        )
    beliefs, laws = _forward(lat, n, dl, alpha, q, nq)
    V, a_chk = _backward(lat, laws, v_single, A, disc, dl, nq)
    bell = float(np.abs(a_chk - alpha).max())
    G = np.cumsum(beliefs, axis=1)
    if np.any(np.diff(G, axis=1) < -1e-12) or np.any(G > 1 + 1e-9):
        raise ConsistencyError("belief CDF invalid")
    support = np.searchsorted(k, q, side="right")
    if not _monotone_rows(alpha, support):
        raise ConsistencyError("effort is not increasing in the private stock")
    sol = ConcealmentSolution(
        delta, M, k, q, alpha, V, G, v_single_fn, q_minus, q_plus, converged, residual, it, trace, bell,
        None, lat,
    )
    sol.lipschitz = lipschitz_report(sol, params, F, laws)
    return sol


def lipschitz_report(sol: ConcealmentSolution, params: ModelParams, F: InnovationDist, laws=None) -> LipschitzReport:
    """Empirical constants for the path bounds
    sup|v_{m+1} - v_m| and sup|G_m - G_{m-1}| <= gamma(m delta) delta,
    gamma(t) = 3 eps n q_bar gamma0(t)."""
    delta, M, h = sol.delta, sol.horizon, sol.lattice.h
    lat = sol.lattice
    nq = sol.k.size
    if laws is None:
        _, laws = _forward(lat, params.n, delta * params.lam, sol.alpha, sol.q, nq)
    vs = sol.v_single.values
    eps_emp = 0.0
    disc = math.exp(-delta)
    A = params.x0 * (1 - disc)
    full = vs.copy()
    for m in range(M):
        law = laws[m]
        full[:nq] = sol.v[m + 1]
        _, C = _step_values(lat, law, full, vs, A, disc, delta * params.lam, nq)
        ref = (law.phi * lat.nodes).sum() + law.P0 * sol.v[m + 1]
        eps_emp = max(eps_emp, float(np.abs(ref - C).max()) / delta)
    eps_emp = max(eps_emp, params.lam * 1.000001)
    dens = np.diff(sol.beliefs, axis=1) / h
    gamma0 = np.maximum.accumulate(np.maximum(dens.max(axis=1), 1.0))
    q_bar = math.expm1(delta) / delta * max(sol.q_plus, 1.0, params.lam * F.mean)
    t_idx = np.arange(1, M + 1)
    bound = 3 * eps_emp * params.n * q_bar * gamma0[t_idx] * delta
    value_steps = np.abs(np.diff(sol.v, axis=0)).max(axis=1)
    belief_steps = np.abs(np.diff(sol.beliefs, axis=0)).max(axis=1)
    return LipschitzReport(eps_emp, gamma0, q_bar, value_steps, belief_steps, bound)


# --------------------------------------------------------------------------
# Welfare condition and deviation incentive
# --------------------------------------------------------------------------


@dataclass
class WelfareCondition:
    holds: bool
    lhs: float
    rhs: float
    theta: float | None


def concealment_welfare_condition(params: ModelParams, F: InnovationDist, x0: float | None = None) -> WelfareCondition:
    """x0 < lam E_F[(z + x0 - lam mu) v 0], with theta = E_F[x0 + z | x0 + z >= lam mu]."""
    x0 = params.x0 if x0 is None else x0
    cut = params.lam * F.mean - x0
    if cut <= 0:
        raise DomainError(f"x0 must lie below lam mu = {params.lam * F.mean}")
    excess = 0.0
    tail = 0.0
    tail_sum = 0.0
    if F.variant == DEGENERATE:
        excess = max(F.point - cut, 0.0)
        if F.point >= cut:
            tail, tail_sum = 1.0, x0 + F.point
    else:
        if F.exp_weight > 0:
            e = F.exp_mean
            mass = F.exp_weight * math.exp(-cut / e)
            excess += mass * e
            tail += mass
            tail_sum += mass * (x0 + cut + e)
        if F.atom_weight > 0 and F.atom_location >= cut:
            excess += F.atom_weight * (F.atom_location - cut)
            tail += F.atom_weight
            tail_sum += F.atom_weight * (x0 + F.atom_location)
    rhs = params.lam * excess
    theta = tail_sum / tail if tail > 1e-12 else None
    return WelfareCondition(bool(x0 < rhs), float(x0), float(rhs), theta)


def concealment_incentive_delta(
    forced: ForcedSolution, params: ModelParams, P: PayoffSpec, F: InnovationDist, k: float, x: float
) -> float:
    """Gain from concealing the private stock k while the public stock is x,
    against opponents who disclose at once; positive values certify a
    profitable deviation from full disclosure."""
    if k < x - 1e-15:
        raise DomainError("k must be at least x")
    if x < params.x0 - 1e-15:
        raise DomainError("x must be at least x0")
    v = forced.v_f
    lam, n = params.lam, params.n
    vk = float(v(k))
    own_gain = float(expect_F(F, v, k)) - vk
    bx = float(P.b(x))
    if P.is_linear:
        best = max(bx, bx - x + lam * own_gain)
    else:
        grid = np.linspace(0.0, 1.0, 201)
        best = float(np.max(bx - P.c(grid, np.full_like(grid, x)) + grid * lam * own_gain))
    z, w = F.quadrature()
    y = x + z
    opp = float(np.sum(w * np.where(y > k, v(y) - vk, 0.0)))
    return best + float(forced.alpha_f(x)) * lam * (n - 1) * opp - vk


@dataclass
class LadderReport:
    deltas: np.ndarray
    values: np.ndarray
    iterations: np.ndarray
    extrapolated: float | None


def delta_ladder(
    params: ModelParams, F: InnovationDist, deltas=(0.1, 0.05, 0.025), span: float = 8.0, cfg: ConcealmentConfig | None = None
) -> LadderReport:
    """v_c at shrinking step lengths over a fixed horizon span = delta M.
    The extrapolation assumes first-order error in delta and uses the two
    finest rungs."""
    base = cfg or ConcealmentConfig()
    ds = np.sort(np.asarray(deltas, dtype=float))[::-1]
    vals, its = [], []
    for d in ds:
        c = ConcealmentConfig(
            float(d), max(1, int(round(span / d))), None, base.damping, base.fp_tol, base.max_outer_iter, base.min_damping
        )
        sol = solve_concealment(params, F, c)
        vals.append(sol.v_c)
        its.append(sol.iterations)
    ext = None
    if ds.size >= 2:
        r = ds[-2] / ds[-1]
        ext = float(vals[-1] + (vals[-1] - vals[-2]) / (r - 1))
    return LadderReport(ds, np.array(vals), np.array(its), ext)
