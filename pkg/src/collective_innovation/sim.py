"""Monte-Carlo simulation of the stationary regimes and of the concealment
path, with discounted-payoff estimation."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .concealment import ConcealmentSolution, _ramp
from .disposal import TIE_TOL, DiscardRegion, DisposalSolution
from .errors import ValidationError
from .model import InnovationDist, ModelParams, PayoffSpec
from .numerics import GridFn

BLOCK = 4096  # replications sharing one RNG stream; replication r lives in block r // BLOCK
SAFE_HORIZON = 60.0  # discount weight e^{-60} is below 1e-26


def default_time_cap(params: ModelParams) -> float:
    return SAFE_HORIZON / min(params.lam, 1.0)


def stream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for (master seed, stream index)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(index)])))


# --------------------------------------------------------------------------
# Result types
# --------------------------------------------------------------------------


@dataclass
class Trajectory:
    x0: float
    times: np.ndarray
    agents: np.ndarray
    raw: np.ndarray
    disclosed: np.ndarray
    horizon: float
    seed: int

    def __post_init__(self) -> None:
        if np.any(np.diff(self.times) <= 0):
            raise ValidationError("event times must be strictly increasing")

    @property
    def stock_path(self) -> np.ndarray:
        """Stock right after each event; x0 holds before the first one."""
        return self.x0 + np.cumsum(self.disclosed)

    def stock_at(self, t):
        idx = np.searchsorted(self.times, t, side="right")
        path = np.concatenate([[self.x0], self.stock_path])
        return path[idx]

    def __len__(self) -> int:
        return int(self.times.size)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "agent", "raw_z", "disclosed_z", "x_after"])
        for row in zip(self.times, self.agents, self.raw, self.disclosed, self.stock_path):
            w.writerow([repr(float(row[0])), int(row[1]), repr(float(row[2])), repr(float(row[3])), repr(float(row[4]))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


@dataclass
class PayoffEstimate:
    mean: float
    stderr: float
    replications: int
    symmetric: bool = True

    @classmethod
    def from_samples(cls, samples: np.ndarray, symmetric: bool = True) -> "PayoffEstimate":
        r = int(samples.size)
        se = float(samples.std(ddof=1) / math.sqrt(r)) if r > 1 else 0.0
        return cls(float(samples.mean()), se, r, symmetric)

    def within(self, target: float, k: float = 3.0) -> bool:
        return abs(self.mean - target) <= k * self.stderr + 1e-12

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "replications": self.replications, "symmetric": self.symmetric}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


# --------------------------------------------------------------------------
# Continuous-time Markov regimes
# --------------------------------------------------------------------------


def _effort_fn(effort) -> Callable:
    if isinstance(effort, GridFn):
        nodes, vals = effort.nodes, np.clip(effort.values, 0.0, 1.0)
        return lambda x: np.interp(x, nodes, vals)
    if callable(effort):
        return lambda x: np.clip(np.asarray(effort(x), dtype=float), 0.0, 1.0)
    raise ValidationError("effort must be a GridFn or a callable")


def _discard_fn(disposal) -> Callable | None:
    """Vectorised predicate (x, z) -> discard mask."""
    if disposal is None:
        return None
    if isinstance(disposal, DisposalSolution):
        disposal = disposal.v_d
    if isinstance(disposal, GridFn):
        v = disposal
        return lambda x, z: v(x + z) < v(x) - TIE_TOL
    if isinstance(disposal, DiscardRegion):
        reg = disposal

        def fn(x, z):
            i = np.clip(np.searchsorted(reg.nodes, x, side="right") - 1, 0, reg.nodes.size - 1)
            lo, hi = reg.z_lo[i], reg.z_hi[i]
            with np.errstate(invalid="ignore"):
                return ~np.isnan(lo) & (z >= lo) & (z < hi)

        return fn
    raise ValidationError("disposal must be None, a DisposalSolution, a value GridFn or a DiscardRegion")


def _run_markov(params, P, F, alpha, discard, x0, rng, R, cap, record):
    lam, n = params.lam, params.n
    x = np.full(R, float(x0))
    t = np.zeros(R)
    acc = np.zeros(R)
    live = np.arange(R)
    events = []
    while live.size:
        xl, tl = x[live], t[live]
        a = alpha(xl)
        rate = lam * n * a
        stop = rate <= 0
        if np.any(stop):
            s = live[stop]
            acc[s] += np.exp(-t[s]) * (P.b(x[s]) - P.c(0.0, x[s]))
        go = ~stop
        live, xl, tl, a, rate = live[go], xl[go], tl[go], a[go], rate[go]
        if not live.size:
            break
        dt = rng.exponential(1.0, live.size) / rate
        agent = rng.integers(0, n, live.size)
        z = np.asarray(F.sample(rng, live.size), dtype=float)
        t_new = tl + dt
        flow = P.b(xl) - P.c(a, xl)
        capped = t_new > cap
        # a capped path freezes at its current stock from t onward
        acc[live] += np.where(capped, flow * np.exp(-tl), flow * (np.exp(-tl) - np.exp(-t_new)))
        keep = ~capped
        zd = z.copy()
        if discard is not None:
            zd = np.where(discard(xl, z), 0.0, z)
        if record and keep[0]:
            events.append((float(t_new[0]), int(agent[0]), float(z[0]), float(zd[0])))
        live, xl, t_new, zd = live[keep], xl[keep], t_new[keep], zd[keep]
        x[live] = xl + zd
        t[live] = t_new
    return acc, events


def _check_effort(effort) -> None:
    if isinstance(effort, GridFn) and (np.any(effort.values < -1e-12) or np.any(effort.values > 1 + 1e-12)):
        raise ValidationError("effort must lie in [0, 1]")


def simulate_markov(
    params: ModelParams,
    P: PayoffSpec,
    F: InnovationDist,
    effort,
    disposal=None,
    x0: float | None = None,
    seed: int = 0,
    time_cap: float | None = None,
    replication: int = 0,
) -> Trajectory:
    """One event-driven path. Between events the aggregate arrival rate
    lam n alpha(x) is constant; the producer is uniform over agents."""
    _check_effort(effort)
    x0 = params.x0 if x0 is None else x0
    cap = default_time_cap(params) if time_cap is None else time_cap
    rng = stream(seed, replication)
    _, ev = _run_markov(params, P, F, _effort_fn(effort), _discard_fn(disposal), x0, rng, 1, cap, True)
    cols = list(zip(*ev)) if ev else [(), (), (), ()]
    return Trajectory(
        float(x0),
        np.array(cols[0], dtype=float),
        np.array(cols[1], dtype=int),
        np.array(cols[2], dtype=float),
        np.array(cols[3], dtype=float),
        cap,
        seed,
    )


def estimate_payoff(
    params: ModelParams,
    P: PayoffSpec,
    F: InnovationDist,
    effort,
    disposal=None,
    x0: float | None = None,
    replications: int = 100_000,
    seed: int = 0,
    time_cap: float | None = None,
) -> PayoffEstimate:
    """Mean discounted payoff of one agent, integrating the flow exactly
    between events."""
    if replications < 1:
        raise ValidationError("replications must be positive")
    _check_effort(effort)
    x0 = params.x0 if x0 is None else x0
    cap = default_time_cap(params) if time_cap is None else time_cap
    alpha, discard = _effort_fn(effort), _discard_fn(disposal)
    out = np.empty(replications)
    for b, start in enumerate(range(0, replications, BLOCK)):
        R = min(BLOCK, replications - start)
        acc, _ = _run_markov(params, P, F, alpha, discard, x0, stream(seed, b), R, cap, False)
        out[start : start + R] = acc
    return PayoffEstimate.from_samples(out)


def simulate_paths(params, P, F, effort, disposal=None, x0=None, count=100, seed=0, time_cap=None):
    """``count`` independent trajectories, path r seeded by (seed, r)."""
    return [simulate_markov(params, P, F, effort, disposal, x0, seed, time_cap, r) for r in range(count)]


def detriment_frequency(paths, value: GridFn) -> float:
    """Share of events after which the value at the public stock fell."""
    drops = total = 0
    for p in paths:
        if not len(p):
            continue
        v = value(np.concatenate([[p.x0], p.stock_path]))
        drops += int(np.sum(np.diff(v) < 0))
        total += len(p)
    return drops / total if total else 0.0


# --------------------------------------------------------------------------
# Concealment
# --------------------------------------------------------------------------


@dataclass
class ConcealmentEstimate:
    estimate: PayoffEstimate
    disclosure_hist: np.ndarray  # counts by step, last entry = no disclosure
    disclosed_mean: float
    min_disclosed_minus_q: float
    min_value_gain: float
    first_disclosure: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            **self.estimate.to_dict(),
            "disclosed_mean": self.disclosed_mean,
            "min_disclosed_minus_q": self.min_disclosed_minus_q,
            "min_value_gain": self.min_value_gain,
            "disclosure_hist": [int(c) for c in self.disclosure_hist],
        }


def _conceal_block(params, sol, rng, R, start_index):
    lat = sol.lattice
    n, M = params.n, sol.horizon
    delta = sol.delta
    dl = delta * params.lam
    disc = math.exp(-delta)
    A = params.x0 * (1 - disc)
    vs = sol.v_single.values
    nodes = lat.nodes
    cw = np.cumsum(lat.w)
    cw[-1] = 1.0

    idx = np.zeros((R, n), dtype=np.int64)
    idx[:, 0] = start_index
    pay = np.zeros((R, n))
    when = np.full(R, M)
    kappa = np.full(R, np.nan)
    gap_q = math.inf
    gain = math.inf
    live = np.arange(R)
    for m in range(M):
        if not live.size:
            break
        k = idx[live]
        a = sol.alpha[m][k]
        pay[live] += disc**m * A * (1 - a)
        hit = rng.random(k.shape) < 1 - np.exp(-a * dl)
        d = np.searchsorted(cw, rng.random(k.shape), side="right")
        k = k + np.where(hit, d, 0)
        idx[live] = k
        show = rng.random(k.shape) < _ramp(nodes[k], sol.q[m], lat.h)
        any_show = show.any(axis=1)
        if np.any(any_show):
            rows = live[any_show]
            ks, sh = k[any_show], show[any_show]
            top = np.where(sh, ks, -1).max(axis=1)
            kap = nodes[top]
            gap_q = min(gap_q, float((kap - sol.q[m]).min()))
            best = np.maximum(ks, top[:, None])
            pay[rows] += disc ** (m + 1) * vs[best]
            hidden = ~sh & (ks < sol.k.size)
            if np.any(hidden):
                v_next = sol.v[m + 1][np.where(hidden, ks, 0)]
                diff = np.where(hidden, vs[best] - v_next, np.inf)
                gain = min(gain, float(diff.min()))
            when[rows] = m
            kappa[rows] = kap
            live = live[~any_show]
    if live.size:
        pay[live] += disc**M * vs[idx[live]]
    return pay, when, kappa, gap_q, gain


def simulate_concealment(
    params: ModelParams,
    F: InnovationDist,
    sol: ConcealmentSolution,
    x0: float | None = None,
    seed: int = 0,
    replications: int = 100_000,
    start_offset: int = 0,
) -> ConcealmentEstimate:
    """Discrete-time path under the solved (alpha, q). Increments follow the
    lattice law, disclosure uses the solver's rule, and after the first
    disclosure each agent holds the best disclosed-or-own value with zero
    effort. ``start_offset`` raises agent 0's initial private stock by that
    many lattice steps."""
    x0 = params.x0 if x0 is None else x0
    if abs(x0 - params.x0) > 1e-12:
        raise ValidationError("the concealment path starts from the solved x0")
    if replications < 1:
        raise ValidationError("replications must be positive")
    M = sol.horizon
    hist = np.zeros(M + 1, dtype=np.int64)
    if sol.trivial:
        est = PayoffEstimate(float(x0), 0.0, replications)
        hist[M] = replications
        return ConcealmentEstimate(est, hist, math.nan, math.inf, math.inf, np.full(replications, M))
    if not sol.converged:
        raise ValidationError("concealment solution did not converge")
    if not 0 <= start_offset < sol.k.size:
        raise ValidationError("start offset outside the solved grid")
    pays, whens, kaps = [], [], []
    gap_q = gain = math.inf
    for b, start in enumerate(range(0, replications, BLOCK)):
        R = min(BLOCK, replications - start)
        pay, when, kap, g1, g2 = _conceal_block(params, sol, stream(seed, b), R, start_offset)
        pays.append(pay[:, 0] if start_offset else pay.mean(axis=1))
        whens.append(when)
        kaps.append(kap)
        gap_q, gain = min(gap_q, g1), min(gain, g2)
    when = np.concatenate(whens)
    kap = np.concatenate(kaps)
    hist += np.bincount(when, minlength=M + 1)
    shown = kap[~np.isnan(kap)]
    est = PayoffEstimate.from_samples(np.concatenate(pays), symmetric=start_offset == 0)
    return ConcealmentEstimate(est, hist, float(shown.mean()) if shown.size else math.nan, gap_q, gain, when)
