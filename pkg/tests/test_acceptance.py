"""The eleven acceptance criteria, one test each. Every test records a
PASS/FAIL line that is printed in the terminal summary."""
import contextlib
import filecmp
import math
import time

import numpy as np
import pytest

import oracles
from conftest import ACCEPTANCE
from collective_innovation import InnovationDist, LimitRegime, ModelParams, PayoffSpec
from collective_innovation.benchmark import solve_benchmark
from collective_innovation.cli import build_grid, main, welfare_sweep
from collective_innovation.concealment import ConcealmentConfig, q_bounds
from collective_innovation.disposal import (
    disposal_closed_form_limit,
    limit_branches,
    solve_disposal,
)
from collective_innovation.endogenous import endo_equilibrium
from collective_innovation.forced import (
    closed_form_y_f,
    detriment_report,
    forced_value_via_counts,
    necessity_checks,
    solve_forced,
    solve_y_f,
)
from collective_innovation.numerics import GridConfig
from collective_innovation.sim import estimate_payoff, simulate_concealment, simulate_markov


@contextlib.contextmanager
def criterion(k: int, name: str, detail: dict):
    """Record the outcome; ``detail`` is filled in by the test body."""
    try:
        yield
    except BaseException:
        ACCEPTANCE.append((k, name, False, _fmt(detail)))
        print(f"criterion {k} FAIL: {name} {_fmt(detail)}")
        raise
    ACCEPTANCE.append((k, name, True, _fmt(detail)))
    print(f"criterion {k} PASS: {name} {_fmt(detail)}")


def _fmt(d: dict) -> str:
    return ", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in d.items())


def test_criterion_01_benchmark(fig_params, linear, fig_dist):
    info = {}
    with criterion(1, "benchmark closed form", info):
        t = time.perf_counter()
        sol = solve_benchmark(fig_params, linear, fig_dist, GridConfig(4.0, 4001))
        info["seconds"] = time.perf_counter() - t
        x = sol.v_star.nodes
        info["sup_error"] = float(np.abs(sol.v_star.values - oracles.benchmark_value(x)).max())
        a = sol.alpha_star.values
        assert x.size == 4001 and x[0] == 0.0 and x[-1] == 4.0
        assert info["sup_error"] <= 1e-4
        assert np.all((a == 0.0) | (a == 1.0)), "effort is not bang-bang"
        switch = x[np.argmax(a == 0.0)]
        info["switch"] = float(switch)
        assert np.all(a[x < switch] == 1.0) and np.all(a[x >= switch] == 0.0)
        assert abs(switch - oracles.FROZEN["x_star"]) <= x[1] - x[0] + 1e-12
        assert info["seconds"] < 5.0


def test_criterion_02_forced(fig2_forced, fig_params, fig_dist):
    info = {}
    with criterion(2, "forced SSE closed form", info):
        sol = fig2_forced
        info["seconds"] = sol.elapsed
        x = sol.v_f.nodes
        y_f = closed_form_y_f(fig_params, fig_dist)
        m = (x >= y_f) & (x <= 0.7)
        vals = np.where(x[m] < oracles.FROZEN["x_f"], oracles.forced_middle_value(x[m]), x[m])
        info["sup_error"] = float(np.abs(sol.v_f.values[m] - vals).max())
        info["y_f"] = sol.y_f
        info["x_f"] = sol.x_f
        assert info["sup_error"] <= 2e-4
        assert abs(sol.y_f - 0.19) <= 5e-3
        assert abs(sol.x_f - 0.599) <= 1e-6
        assert info["seconds"] < 5.0


def test_criterion_03_rho_zero_y_f():
    info = {}
    with criterion(3, "rho=0 y_f cross-check", info):
        rng = np.random.default_rng(3)
        worst = 0.0
        for _ in range(20):
            lam = float(rng.uniform(0.5, 20.0))
            n = int(rng.integers(2, 11))
            eps = float(rng.uniform(0.005, 0.5))
            p = ModelParams(lam, n)
            root = solve_y_f(p, InnovationDist.exponential(eps))
            worst = max(worst, abs(root - oracles.y_f_exponential(lam, n, eps)))
        info["max_gap"] = worst
        assert worst <= 1e-8


@pytest.mark.parametrize(
    "label, params, F",
    [
        ("mixture", ModelParams(10.0, 5), InnovationDist.atom_exp(0.01, 5.0, 0.01)),
        ("exponential", ModelParams(10.0, 5), InnovationDist.exponential(0.06)),
        ("degenerate", ModelParams(10.0, 5), InnovationDist.degenerate(0.06)),
    ],
)
def test_criterion_04_jump_count_representation(label, params, F, linear):
    info = {"law": label}
    with criterion(4, f"M-representation ({label})", info):
        sol = solve_forced(params, linear, F)
        top = params.lam * F.mean
        y_f = solve_y_f(params, F)
        x = sol.v_f.nodes
        m = (x >= y_f) & (x <= top)
        rep = forced_value_via_counts(params, F, x[m])
        info["sup_error"] = float(np.abs(rep - sol.v_f.values[m]).max())
        assert info["sup_error"] <= 2e-4
        if label == "exponential":
            exact = oracles.forced_value_exponential(x[m], params.lam, F.eps)
            assert np.abs(rep - exact).max() <= 1e-8


def test_criterion_05_detriment(fig2_forced, fig_params, fig_dist, linear):
    info = {}
    with criterion(5, "detriment diagnostics", info):
        rep = detriment_report(fig2_forced, fig_params, linear, fig_dist, 0.0)
        info["xhat"] = rep.mixture_xhat
        assert rep.is_detrimental
        assert abs(rep.mixture_xhat - 0.598) <= 1e-3

        p = ModelParams(10.0, 5)
        Fd = InnovationDist.degenerate(0.06)
        sol = solve_forced(p, linear, Fd)
        flags = [detriment_report(sol, p, linear, Fd, x0).is_detrimental for x0 in np.linspace(0.0, 0.65, 27)]
        info["degenerate_detrimental"] = sum(flags)
        assert not any(flags)

        worst = math.inf
        for lam, n, scale in [(1.0, 3, 1.0), (2.0, 5, 2.0), (0.5, 2, 3.0)]:
            ps = ModelParams(lam, n)
            P = PayoffSpec.separable(scale=scale)
            F = InnovationDist.exponential(0.5)
            s = solve_forced(ps, P, F, build_grid({}, ps, P, F))
            chk = necessity_checks(ps, P, F, s)
            worst = min(worst, chk.separable_worst)
            assert chk.separable_monotone
        info["separable_min_step"] = worst


def test_criterion_06_disposal(linear, fig3_regime):
    info = {}
    with criterion(6, "disposal", info):
        rng = np.random.default_rng(6)
        slack = math.inf
        for _ in range(10):
            lam = float(rng.uniform(1.0, 10.0))
            n = int(rng.integers(2, 7))
            kind = int(rng.integers(0, 3))
            if kind == 0:
                F = InnovationDist.atom_exp(float(rng.uniform(0.005, 0.05)), 5.0, float(rng.uniform(0.005, 0.02)))
            elif kind == 1:
                F = InnovationDist.exponential(float(rng.uniform(0.02, 0.2)))
            else:
                F = InnovationDist.degenerate(float(rng.uniform(0.02, 0.2)))
            p = ModelParams(lam, n)
            x_max = max(4.0, 1.2 * lam * F.mean * n)
            g = GridConfig.from_step(x_max, x_max / 1500)
            f = solve_forced(p, linear, F, g)
            d = solve_disposal(p, linear, F, g)
            slack = min(slack, float((d.v_d.values - f.v_f.values).min()))
        info["min_slack"] = slack
        assert slack >= -1e-8

        lim = disposal_closed_form_limit(fig3_regime, 0.0)
        info["y_d"], info["xhat_f"] = lim.y_d, lim.xhat_f
        assert abs(lim.y_d - 0.3571) <= 1e-4
        assert abs(lim.xhat_f - 0.4946) <= 1e-4
        assert abs(lim.y_d - oracles.limit_y_d(0.1, 5.0, 5)) <= 1e-15
        assert abs(lim.xhat_f - oracles.limit_xhat_f(0.1, 1.0, 5.0)) <= 1e-15

        br = limit_branches(fig3_regime)
        jumps = [abs(br[j]["value"][0] - br[j]["value"][1]) for j in ("y_d", "xhat_f")]
        jumps += [abs(br[j]["effort"][0] - br[j]["effort"][1]) for j in ("y_d", "xhat_f")]
        info["continuity"] = max(jumps)
        assert max(jumps) <= 1e-10

        pa, Fa = fig3_regime.approximant(0.001)
        sol = solve_disposal(pa, linear, Fa, GridConfig.from_step(3.2, Fa.eps / 5))
        x = sol.v_d.nodes
        gap = float(np.abs(sol.v_d.values - disposal_closed_form_limit(fig3_regime, x).value).max())
        info["approximant_gap"] = gap
        assert gap <= 1e-2


def test_criterion_07_concealment(conceal_sol, conceal_params, conceal_dist):
    info = {}
    with criterion(7, "concealment solver", info):
        s = conceal_sol
        info["seconds"] = s.elapsed
        info["residual"] = s.residual
        assert s.converged and s.residual < 1e-6
        assert np.all(s.q >= s.q_minus - 1e-12) and np.all(s.q <= s.q_plus + 1e-12)
        for m in range(s.horizon):
            live = s.k <= s.q[m]
            assert np.all(np.diff(s.alpha[m, live]) >= -1e-9), f"effort decreasing at step {m}"
        fixed = max(abs(s.value_at(m + 1, s.q[m]) - s.q[m]) for m in range(s.horizon))
        info["max_v_q_gap"] = fixed
        assert fixed <= 1e-5

        lows, highs = [], []
        for delta in (0.2, 0.05, 0.0125):
            b = q_bounds(conceal_params, conceal_dist, delta)
            lows.append(b.q_minus)
            highs.append(b.q_plus)
        info["q_minus"] = "/".join(f"{v:.3f}" for v in lows)
        info["q_plus"] = "/".join(f"{v:.3f}" for v in highs)
        assert lows[0] < lows[1] < lows[2] <= 1.0 + 1e-9
        assert highs[0] < highs[1] < highs[2] <= 3.0 + 1e-9
        assert abs(1.0 - lows[2]) < abs(1.0 - lows[0]) and abs(3.0 - highs[2]) < abs(3.0 - highs[0])
        assert s.elapsed < 60.0


def test_criterion_08_monte_carlo(
    fig2_forced, fig2_disposal, fig_params, fig_dist, linear, conceal_sol, conceal_params, conceal_dist
):
    # one seed per regime: shared streams would make the three checks fail together
    info = {}
    with criterion(8, "Monte-Carlo cross-validation", info):
        t = time.perf_counter()
        e = estimate_payoff(fig_params, linear, fig_dist, fig2_forced.alpha_f, None, 0.0, 100_000, 8)
        info["forced_z"] = (e.mean - float(fig2_forced.v_f(0.0))) / e.stderr
        info["forced_s"] = time.perf_counter() - t
        assert e.within(float(fig2_forced.v_f(0.0)))
        assert info["forced_s"] < 30

        t = time.perf_counter()
        e = estimate_payoff(fig_params, linear, fig_dist, fig2_disposal.alpha_d, fig2_disposal, 0.0, 100_000, 81)
        info["disposal_z"] = (e.mean - float(fig2_disposal.v_d(0.0))) / e.stderr
        info["disposal_s"] = time.perf_counter() - t
        assert e.within(float(fig2_disposal.v_d(0.0)))
        assert info["disposal_s"] < 30

        t = time.perf_counter()
        c = simulate_concealment(conceal_params, conceal_dist, conceal_sol, 0.2, 82, 100_000)
        info["concealment_z"] = (c.estimate.mean - conceal_sol.v_c) / c.estimate.stderr
        info["concealment_s"] = time.perf_counter() - t
        assert c.estimate.within(conceal_sol.v_c)
        assert c.min_disclosed_minus_q >= 0
        assert info["concealment_s"] < 30


def test_criterion_09_welfare_sweep(linear):
    info = {}
    with criterion(9, "welfare n-sweep", info):
        params = ModelParams(1.0, 2, 0.2)
        F = InnovationDist.exponential(1.0)
        rep = welfare_sweep(params, linear, F, (2, 5, 10, 20), ConcealmentConfig(delta=0.05, horizon=160))
        rows = rep["rows"]
        info["v_c-v_f"] = "/".join(f"{r['v_c'] - r['v_f']:.3f}" for r in rows)
        info["caveat"] = rep["finite_delta_caveat"]
        assert rep["condition_holds"]
        assert rep["concealment_better_at_largest_n"] or rep["finite_delta_caveat"]
        for r in rows:
            if r["is_detrimental"]:
                assert r["v_d"] > r["v_f"]


def test_criterion_10_endogenous(fig4_params, fig4_dp):
    info = {}
    with criterion(10, "endogenous supplement", info):
        eq = endo_equilibrium(fig4_params, 0.0)
        info["effort_jump"], info["value_jump"] = eq.jumps
        assert abs(fig4_params.xbar_f - 2.495) <= 1e-12
        assert abs(eq.jumps[0] - 0.102) <= 1e-3
        assert abs(eq.jumps[1] - 0.02) <= 1e-3
        info["dp_gap"] = fig4_dp.closed_form_gap
        assert fig4_dp.closed_form_gap <= 2e-4


def test_criterion_11_properties(fig2_forced, fig2_disposal, fig_params, fig_dist, linear, tmp_path):
    info = {}
    with criterion(11, "property suite", info):
        configs = [
            (fig_params, linear, fig_dist, fig2_forced),
            (ModelParams(10.0, 5), linear, InnovationDist.exponential(0.06), None),
            (ModelParams(10.0, 5), linear, InnovationDist.degenerate(0.06), None),
            (ModelParams(1.0, 3), PayoffSpec.separable(), InnovationDist.exponential(0.5), None),
        ]
        worst_avg, gaps = math.inf, []
        for p, P, F, sol in configs:
            sol = sol or solve_forced(p, P, F, build_grid({}, p, P, F))
            chk = necessity_checks(p, P, F, sol)
            worst_avg = min(worst_avg, chk.average_worst_margin)
            assert chk.average_pass
            gaps.append(sol.report.gap)
        gaps.append(fig2_disposal.report.gap)
        gaps.append(solve_benchmark(fig_params, linear, fig_dist).report.gap)
        info["min_average_margin"] = worst_avg
        info["max_tarski_gap"] = max(gaps)
        assert max(gaps) <= 1e-6

        a = simulate_markov(fig_params, linear, fig_dist, fig2_forced.alpha_f, None, 0.0, 11).to_csv()
        b = simulate_markov(fig_params, linear, fig_dist, fig2_forced.alpha_f, None, 0.0, 11).to_csv()
        assert a == b
        for k in ("a", "b"):
            code = main(["simulate", "--set", "fig2", "--replications", "2000", "--seed", "5", "--out", str(tmp_path / k)])
            assert code == 0
        for name in ("trajectory.csv", "estimate.json"):
            assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False)
        info["byte_identical"] = True
