import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from collective_innovation import InnovationDist, ModelParams, PayoffSpec
from collective_innovation.cli import ConfigError, build_grid, validate_config
from collective_innovation.concealment import Lattice
from collective_innovation.disposal import solve_disposal
from collective_innovation.forced import closed_form_y_f, solve_forced, solve_y_f
from collective_innovation.numerics import GridFn, best_response_p
from collective_innovation.sim import PayoffEstimate

LINEAR = PayoffSpec.linear()

dists = st.one_of(
    st.builds(InnovationDist.exponential, st.floats(0.01, 2.0)),
    st.builds(InnovationDist.degenerate, st.floats(0.01, 2.0)),
    st.builds(
        InnovationDist.atom_exp, st.floats(0.0, 0.5), st.floats(1.0, 6.0), st.floats(0.01, 0.5)
    ),
)


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=30), st.floats(-10, 10))
def test_gridfn_stays_within_node_range(values, y):
    nodes = np.arange(len(values), dtype=float)
    g = GridFn(nodes, np.array(values))
    v = g(min(y, nodes[-1]))
    assert min(values) - 1e-12 <= v <= max(values) + 1e-12


@given(dists, st.lists(st.floats(0, 20), min_size=2, max_size=20))
def test_cdf_is_monotone_distribution(F, zs):
    z = np.sort(np.array(zs))
    c = F.cdf(z)
    assert np.all(np.diff(c) >= -1e-15)
    assert np.all((c >= 0) & (c <= 1))
    assert np.allclose(c + F.sf(z), 1.0)


@given(dists, st.floats(0.005, 0.2))
def test_lattice_weights_and_spread_keep_mass(F, h):
    lat = Lattice(0.0, h, F, 1.0)
    assert math.isclose(lat.w.sum(), 1.0, rel_tol=1e-12)
    assert np.all(lat.w >= 0)
    mass = np.zeros(lat.n_core)
    mass[0] = 0.4
    mass[-1] = 0.6
    assert math.isclose(lat.spread(mass).sum(), 1.0, rel_tol=1e-12)
    # the midpoint split keeps the mean within half a step
    mean = (lat.w * h * np.arange(lat.w.size)).sum()
    assert abs(mean - F.mean) <= 0.5 * h + 1e-9 + F.mean * 1e-9


@given(
    st.floats(0.1, 20), st.integers(2, 20), st.floats(0, 5), st.floats(0, 3), st.floats(0, 3)
)
def test_best_response_bounded_and_monotone_in_continuation(lam, n, x, d1, d2):
    p = ModelParams(lam, n)
    lo, hi = x + min(d1, d2), x + max(d1, d2)
    a_lo = float(best_response_p(x, lo, LINEAR, p))
    a_hi = float(best_response_p(x, hi, LINEAR, p))
    assert 0 <= a_lo <= a_hi <= 1


@given(st.floats(0.5, 20), st.integers(2, 10), st.floats(0.005, 0.05))
@settings(max_examples=15)
def test_no_drift_cutoff_routes_agree(lam, n, eps):
    # without an atom the full-effort cutoff has a closed form
    p = ModelParams(lam, n)
    F = InnovationDist.exponential(eps)
    assert abs(solve_y_f(p, F) - closed_form_y_f(p, F)) < 1e-6 * max(1.0, closed_form_y_f(p, F))


@given(st.floats(0.5, 5), st.integers(2, 4), dists)
@settings(max_examples=8)
def test_value_ordering_on_small_problems(lam, n, F):
    p = ModelParams(lam, n)
    grid = build_grid({"grid": {"step": 0.02}}, p, LINEAR, F)
    f = solve_forced(p, LINEAR, F, grid)
    d = solve_disposal(p, LINEAR, F, grid)
    assert np.all(f.v_f.values >= f.v_f.nodes - 1e-9)
    assert np.all(d.v_d.values >= f.v_f.values - 1e-8)


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=200))
def test_payoff_estimate_matches_sample_formula(xs):
    s = np.array(xs)
    e = PayoffEstimate.from_samples(s)
    assert math.isclose(e.mean, s.mean(), rel_tol=1e-12, abs_tol=1e-12)
    assert math.isclose(e.stderr, s.std(ddof=1) / math.sqrt(s.size), rel_tol=1e-9, abs_tol=1e-12)


@given(st.sampled_from(sorted(["model", "grid", "sim", "dist"])), st.text("abcdefghijklmnopqrstuvwxyz_", min_size=1, max_size=8))
def test_config_rejects_unknown_keys(section, key):
    known = {"model": {"lam", "n", "x0"}, "grid": {"x_max", "step", "tol", "max_iter"},
             "sim": {"regime", "replications", "seed", "time_cap"},
             "dist": {"variant", "rho", "zeta", "eps", "mu"}}[section]
    if key in known:
        return
    with pytest.raises(ConfigError, match=f"config.{section}.{key}: unknown field"):
        validate_config({section: {key: 1}})
