import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from collective_innovation import InnovationDist, LimitRegime, ModelParams, PayoffSpec
from collective_innovation.concealment import ConcealmentConfig, solve_concealment
from collective_innovation.disposal import solve_disposal
from collective_innovation.endogenous import EndogenousParams, solve_endogenous_dp
from collective_innovation.forced import solve_forced

settings.register_profile("repo", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

ACCEPTANCE: list[tuple[int, str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k, name, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {k:2d} {'PASS' if ok else 'FAIL'}: {name} ({detail})")


@pytest.fixture(scope="session")
def linear():
    return PayoffSpec.linear()


@pytest.fixture(scope="session")
def fig_params():
    return ModelParams(10.0, 5, 0.0)


@pytest.fixture(scope="session")
def fig_dist():
    return InnovationDist.atom_exp(0.01, 5.0, 0.01)


@pytest.fixture(scope="session")
def fig2_forced(fig_params, linear, fig_dist):
    t = time.perf_counter()
    sol = solve_forced(fig_params, linear, fig_dist)
    sol.elapsed = time.perf_counter() - t
    return sol


@pytest.fixture(scope="session")
def fig2_disposal(fig_params, linear, fig_dist):
    return solve_disposal(fig_params, linear, fig_dist)


@pytest.fixture(scope="session")
def fig3_regime():
    return LimitRegime(0.1, 1.0, 5.0, 5)


@pytest.fixture(scope="session")
def conceal_params():
    return ModelParams(1.0, 3, 0.2)


@pytest.fixture(scope="session")
def conceal_dist():
    return InnovationDist.exponential(1.0)


@pytest.fixture(scope="session")
def conceal_sol(conceal_params, conceal_dist):
    t = time.perf_counter()
    sol = solve_concealment(conceal_params, conceal_dist, ConcealmentConfig(delta=0.02, horizon=400))
    sol.elapsed = time.perf_counter() - t
    return sol


@pytest.fixture(scope="session")
def fig4_params():
    return EndogenousParams(10.0, 5, 0.05, 5.0, 0.01)


@pytest.fixture(scope="session")
def fig4_dp(fig4_params):
    return solve_endogenous_dp(fig4_params)


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)
