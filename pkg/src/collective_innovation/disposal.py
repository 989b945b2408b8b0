"""Strongly symmetric equilibrium when increments may be discarded."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from ._solve import check_uniqueness_condition, default_tail, solve_stationary
from .errors import DomainError
from .forced import DETRIMENT_TOL, ForcedSolution, forced_cutoff
from .model import InnovationDist, LimitRegime, ModelParams, PayoffSpec
from .numerics import FixedPointReport, GridConfig, GridFn, Rates, Stencil

TIE_TOL = 1e-12


@dataclass
class DiscardRegion:
    """Per node, the increments that are discarded: z with v_d(x+z) < v_d(x).
    ``z_lo``/``z_hi`` are NaN where nothing is discarded or where the set is
    not a single interval (``single_interval`` is then False)."""

    nodes: np.ndarray
    z_lo: np.ndarray
    z_hi: np.ndarray
    single_interval: np.ndarray

    @property
    def empty(self) -> bool:
        return bool(np.all(np.isnan(self.z_lo)) and np.all(self.single_interval))

    def discards(self, x: float, z: float) -> bool:
        i = int(np.clip(np.searchsorted(self.nodes, x, side="right") - 1, 0, self.nodes.size - 1))
        lo, hi = self.z_lo[i], self.z_hi[i]
        return bool(not math.isnan(lo) and lo <= z < hi)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "z_lo", "z_hi"])
        for x, lo, hi in zip(self.nodes, self.z_lo, self.z_hi):
            w.writerow([repr(float(x)), "" if math.isnan(lo) else repr(float(lo)), "" if math.isnan(hi) else repr(float(hi))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


@dataclass
class DisposalSolution:
    v_d: GridFn
    alpha_d: GridFn
    discard_region: DiscardRegion
    x_f: float | None
    report: FixedPointReport
    bellman_residual: float
    continuation: np.ndarray = field(repr=False)
    stencil: Stencil = field(repr=False)

    def summary(self) -> dict:
        lo = self.discard_region.z_lo
        active = self.v_d.nodes[~np.isnan(lo)]
        return {
            "x_f": self.x_f,
            "residual": self.bellman_residual,
            "iterations": self.report.iterations,
            "tarski_gap": self.report.gap,
            "discard_nodes": int(active.size),
            "discard_span": [float(active.min()), float(active.max())] if active.size else None,
        }


def discard_region(v: GridFn) -> DiscardRegion:
    """Scan z on the grid spacing: discard iff v(x+z) < v(x), ties disclosed."""
    x = v.nodes
    vals = v.values
    K = x.size
    lo = np.full(K, np.nan)
    hi = np.full(K, np.nan)
    single = np.ones(K, dtype=bool)
    for i in range(K - 1):
        below = vals[i + 1 :] < vals[i] - TIE_TOL
        if not below.any():
            continue
        idx = np.nonzero(below)[0]
        if np.any(np.diff(idx) > 1):
            single[i] = False
            continue
        z = x[i + 1 :] - x[i]
        g = vals[i + 1 :] - vals[i]
        a, b = int(idx[0]), int(idx[-1])
        # boundaries at the interpolated sign changes of v(x+z) - v(x)
        lo[i] = 0.0 if a == 0 else float(z[a - 1] + (z[a] - z[a - 1]) * g[a - 1] / (g[a - 1] - g[a]))
        if b + 1 < z.size:
            hi[i] = float(z[b] + (z[b + 1] - z[b]) * g[b] / (g[b] - g[b + 1]))
        else:
            hi[i] = float(z[b])
    return DiscardRegion(x, lo, hi, single)


def solve_disposal(
    params: ModelParams,
    P: PayoffSpec,
    F: InnovationDist,
    grid: GridConfig | None = None,
) -> DisposalSolution:
    grid = grid or GridConfig()
    check_uniqueness_condition(params, P, F, grid.x_max)
    x_f = forced_cutoff(params, P, F, grid.x_max)
    tail = grid.tail or default_tail(x_f, grid.x_max)
    sol = solve_stationary(Rates(params.lam, params.n), params, P, F, grid, "d", tail)
    region = discard_region(sol.value)
    return DisposalSolution(
        sol.value, sol.effort, region, x_f, sol.report, sol.bellman_residual, sol.continuation, sol.stencil
    )


# --------------------------------------------------------------------------
# Limit regime closed forms
# --------------------------------------------------------------------------


@dataclass
class LimitDisposal:
    effort: np.ndarray | float
    value: np.ndarray | float
    y_d: float
    xhat_f: float
    x_f: float


def limit_detrimental(regime: LimitRegime) -> tuple[bool, float, float]:
    lp, ep, zeta, n = regime.lam_p, regime.eps_p, regime.zeta, regime.n
    lhs = (1 + lp * (n - 1)) * (lp * (ep + zeta) + ep * math.log(1 - lp))
    rhs = lp * zeta
    return lhs > rhs, lhs, rhs


def disposal_closed_form_limit(regime: LimitRegime, x) -> LimitDisposal:
    lp, ep, zeta, n = regime.lam_p, regime.eps_p, regime.zeta, regime.n
    ok, lhs, rhs = limit_detrimental(regime)
    if not ok:
        raise DomainError(f"innovations are not detrimental at these parameters ({lhs:.6g} <= {rhs:.6g})")
    if not regime.closed_forms_valid:
        raise DomainError("closed forms need zeta >= x_f")
    x_f = lp * (zeta + ep)
    xhat = x_f + ep * math.log(1 - lp)
    y_d = lp * zeta / (1 + lp * (n - 1))
    xa = np.asarray(x, dtype=float)

    # full effort below y_d: v = s (x + zeta + C) + K exp(r (x - y_d))
    s = lp * n / (1 + lp * n)
    C = ep * lp * n / (1 + lp * n)
    r = (1 + lp * n) / (ep * lp * n)
    K = n * y_d - s * (y_d + zeta + C)
    v1 = s * (np.minimum(xa, y_d) + zeta + C) + K * np.exp(r * (np.minimum(xa, y_d) - y_d))

    safe = np.maximum(xa, 1e-300)
    a2 = (zeta / safe - 1 / lp) / (n - 1)
    v2 = zeta + (1 - 1 / lp) * xa
    ex = np.expm1((np.minimum(xa, x_f) - x_f) / ep)
    a3 = (ep * ex + x_f - xa) / (lp * safe * (n - 1))
    v3 = (ep * ex - (1 - lp) * xa + x_f) / lp

    effort = np.select([xa < y_d, xa < xhat, xa < x_f], [np.ones_like(xa), a2, a3], 0.0)
    value = np.select([xa < y_d, xa < xhat, xa < x_f], [v1, v2, v3], xa)
    if np.ndim(x) == 0:
        effort, value = float(effort), float(value)
    return LimitDisposal(effort, value, y_d, xhat, x_f)


def limit_branches(regime: LimitRegime) -> dict:
    """Left and right limits of the value and effort branches at y_d and
    x_hat_f, for continuity checks."""
    base = disposal_closed_form_limit(regime, 0.0)
    lp, ep, zeta, n = regime.lam_p, regime.eps_p, regime.zeta, regime.n
    y_d, xhat, x_f = base.y_d, base.xhat_f, base.x_f
    s = lp * n / (1 + lp * n)
    C = ep * lp * n / (1 + lp * n)
    K = n * y_d - s * (y_d + zeta + C)
    v1 = lambda t: s * (t + zeta + C) + K * math.exp((1 + lp * n) / (ep * lp * n) * (t - y_d))
    v2 = lambda t: zeta + (1 - 1 / lp) * t
    v3 = lambda t: (ep * math.expm1((t - x_f) / ep) - (1 - lp) * t + x_f) / lp
    a2 = lambda t: (zeta / t - 1 / lp) / (n - 1)
    a3 = lambda t: (ep * math.expm1((t - x_f) / ep) + x_f - t) / (lp * t * (n - 1))
    return {
        "y_d": {"value": (v1(y_d), v2(y_d)), "effort": (1.0, a2(y_d))},
        "xhat_f": {"value": (v2(xhat), v3(xhat)), "effort": (a2(xhat), a3(xhat))},
        "x_f": {"value": (v3(x_f), x_f), "effort": (a3(x_f), 0.0)},
    }


# --------------------------------------------------------------------------
# Welfare ordering
# --------------------------------------------------------------------------


@dataclass
class DisposalWelfare:
    diff_at_x0: float
    min_diff: float
    strict_at_x0: bool
    detrimental: bool
    consistent: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def compare_welfare_disposal(
    forced: ForcedSolution, disp: DisposalSolution, x0: float, detrimental: bool | None = None
) -> DisposalWelfare:
    if not np.array_equal(forced.v_f.nodes, disp.v_d.nodes):
        raise DomainError("forced and disposal solutions must share a grid")
    diff = disp.v_d.values - forced.v_f.values
    at = float(disp.v_d(x0) - forced.v_f(x0))
    if detrimental is None:
        mask = forced.v_f.nodes >= x0 - 1e-15
        detrimental = bool(np.any(np.diff(forced.v_f.values[mask]) < -DETRIMENT_TOL))
    strict = at > 1e-8
    consistent = (not detrimental) or strict
    return DisposalWelfare(at, float(diff.min()), strict, bool(detrimental), consistent)
