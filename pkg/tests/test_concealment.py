import json
import math

import numpy as np
import pytest

from collective_innovation import ConvergenceError, DomainError, InnovationDist, ModelParams, PayoffSpec, ValidationError
from collective_innovation.concealment import (
    ConcealmentConfig,
    concealment_incentive_delta,
    delta_ladder,
    concealment_welfare_condition,
    q_bounds,
    single_agent_value_discrete,
    solve_concealment,
)
from collective_innovation.forced import solve_forced


def test_single_agent_value_dominates_stock(conceal_params, conceal_dist):
    v = single_agent_value_discrete(conceal_params, PayoffSpec.linear(), conceal_dist, 0.02)
    assert np.all(v.values >= v.nodes - 1e-12)
    assert np.all(np.diff(v.values) >= -1e-12)
    # zero effort is optimal far enough out, so the value is the stock itself
    far = v.nodes > 3.0
    assert np.allclose(v.values[far], v.nodes[far], atol=1e-9)


def test_single_agent_rejects_uneven_grid(conceal_params, conceal_dist):
    with pytest.raises(ValidationError):
        single_agent_value_discrete(conceal_params, PayoffSpec.linear(), conceal_dist, 0.02, [0.2, 0.3, 0.5])


def test_q_bounds_ordered(conceal_params, conceal_dist):
    b = q_bounds(conceal_params, conceal_dist, 0.02)
    assert b.feasible and conceal_params.x0 < b.q_minus <= b.q_plus
    assert b.identity_from <= b.q_plus


def test_config_validation():
    for bad in (dict(delta=0), dict(horizon=0), dict(horizon=2.5), dict(damping=0.001), dict(step=-1.0)):
        with pytest.raises(ValidationError):
            ConcealmentConfig(**bad)


def test_nonlinear_payoffs_rejected(conceal_params, conceal_dist):
    with pytest.raises(DomainError):
        solve_concealment(conceal_params, conceal_dist, P=PayoffSpec.separable())


def test_trivial_branch_when_start_is_past_cutoff(conceal_dist):
    p = ModelParams(1.0, 3, 1.5)
    sol = solve_concealment(p, conceal_dist, ConcealmentConfig(delta=0.05, horizon=20))
    assert sol.trivial and sol.converged
    assert np.all(sol.alpha == 0)
    assert math.isclose(sol.v_c, 1.5, rel_tol=1e-12)


def test_solution_structure(conceal_sol):
    s = conceal_sol
    assert s.converged and s.residual < 1e-6
    assert s.bellman_residual < 1e-5
    assert np.all((s.q >= s.q_minus - 1e-12) & (s.q <= s.q_plus + 1e-12))
    assert np.all((s.alpha >= 0) & (s.alpha <= 1))
    G = s.beliefs
    assert np.all(np.diff(G, axis=1) >= -1e-12) and np.all(G <= 1 + 1e-9)
    assert math.isclose(s.v_c, 1.2323220259, abs_tol=1e-8)


def test_lipschitz_bounds_hold(conceal_sol):
    assert conceal_sol.lipschitz.holds


def test_serialization(conceal_sol):
    d = json.loads(conceal_sol.to_json())
    assert d["M"] == conceal_sol.horizon and len(d["q"]) == conceal_sol.horizon
    rows = conceal_sol.matrix_csv("alpha").splitlines()
    assert len(rows) == conceal_sol.horizon + 1
    assert rows[1].startswith("1,")
    g = conceal_sol.matrix_csv("G").splitlines()
    assert len(g) == conceal_sol.horizon + 2 and g[1].startswith("0,")


def test_convergence_failure_carries_trace(conceal_params, conceal_dist):
    with pytest.raises(ConvergenceError) as err:
        solve_concealment(conceal_params, conceal_dist, ConcealmentConfig(delta=0.05, horizon=40, max_outer_iter=1))
    assert len(err.value.trace) == 1


def test_welfare_condition_exponential(conceal_params, conceal_dist):
    w = concealment_welfare_condition(conceal_params, conceal_dist)
    # lam E[(z - (lam mu - x0))^+] = e^{-(1 - 0.2)} for Exp(1)
    assert math.isclose(w.rhs, math.exp(-0.8), rel_tol=1e-12)
    assert w.holds
    assert math.isclose(w.theta, 0.2 + 0.8 + 1.0, rel_tol=1e-12)
    with pytest.raises(DomainError):
        concealment_welfare_condition(conceal_params, conceal_dist, 1.0)


def test_concealment_beats_disclosure_for_a_leader(fig_params, linear, fig_dist, fig2_forced):
    # a leader sitting at the no-effort cutoff gains by hiding while others still search
    d = concealment_incentive_delta(fig2_forced, fig_params, linear, fig_dist, 0.6, 0.2)
    assert d > 0
    with pytest.raises(DomainError):
        concealment_incentive_delta(fig2_forced, fig_params, linear, fig_dist, 0.1, 0.2)


def test_delta_ladder_trend(conceal_params, conceal_dist, conceal_sol):
    rep = delta_ladder(conceal_params, conceal_dist, (0.1, 0.05), span=8.0)
    assert list(rep.deltas) == [0.1, 0.05]
    assert rep.extrapolated == pytest.approx(2 * rep.values[1] - rep.values[0])
    # the finer rung sits closer to the fine-step reference solve
    assert abs(rep.values[1] - conceal_sol.v_c) < abs(rep.values[0] - conceal_sol.v_c)
