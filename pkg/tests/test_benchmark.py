import math

import numpy as np
import pytest

import oracles
from collective_innovation import DomainError, InnovationDist, ModelParams, PayoffSpec, ValidationError
from collective_innovation.benchmark import (
    benchmark_closed_form_linear,
    benchmark_cutoff,
    benchmark_linear_via_counts,
    solve_benchmark,
)
from collective_innovation.numerics import GridConfig


@pytest.fixture(scope="module")
def fig1(fig_params, linear, fig_dist):
    return solve_benchmark(fig_params, linear, fig_dist)


def test_closed_form_matches_oracle(fig_params, fig_dist):
    x = np.linspace(0, 4, 401)
    assert np.abs(benchmark_closed_form_linear(fig_params, fig_dist, x) - oracles.benchmark_value(x)).max() < 1e-13


def test_cutoff_is_lambda_mu_n(fig_params, linear, fig_dist):
    assert math.isclose(benchmark_cutoff(fig_params, linear, fig_dist), 2.995, rel_tol=1e-14)


def test_dp_is_bang_bang_and_continuous(fig1):
    a = fig1.alpha_star.values
    assert set(np.unique(a)) <= {0.0, 1.0}
    assert np.max(np.abs(np.diff(fig1.v_star.values))) < 0.01
    assert fig1.report.gap < 1e-6


def test_count_route_agrees_with_closed_form(fig_params, fig_dist):
    est = benchmark_linear_via_counts(fig_params, fig_dist, 1.0, 100_000, seed=7)
    exact = float(oracles.benchmark_value(1.0))
    assert abs(est.value - exact) <= 3 * est.stderr


def test_degenerate_count_route_matches_dp(linear):
    p = ModelParams(2.0, 3)
    F = InnovationDist.degenerate(0.25)
    sol = solve_benchmark(p, linear, F, GridConfig.from_step(3.0, 0.0025))
    for x in (0.0, 0.3, 1.0):
        assert abs(benchmark_linear_via_counts(p, F, x).value - float(sol.v_star(x))) < 1e-9


def test_closed_form_domain(linear):
    p = ModelParams(10.0, 5)
    with pytest.raises(DomainError):
        benchmark_closed_form_linear(p, InnovationDist.atom_exp(0.01, 0.5, 0.01), 0.0)
    with pytest.raises(DomainError):
        benchmark_closed_form_linear(p, InnovationDist.exponential(0.05), 0.0)


def test_small_grid_is_rejected(fig_params, linear, fig_dist):
    with pytest.raises(ValidationError):
        solve_benchmark(fig_params, linear, fig_dist, GridConfig(2.0, 2001))
