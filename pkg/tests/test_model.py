import math

import numpy as np
import pytest

from collective_innovation import (
    EvaluationError,
    InnovationDist,
    L_d,
    LimitRegime,
    ModelParams,
    PayoffSpec,
    ValidationError,
    dist_mean,
    expect_F,
)


@pytest.mark.parametrize("kw", [dict(lam=0.0, n=2), dict(lam=1.0, n=1), dict(lam=1.0, n=2.5), dict(lam=1.0, n=2, x0=-1)])
def test_params_reject_invalid(kw):
    with pytest.raises(ValidationError):
        ModelParams(**kw)


def test_mixture_mean_and_moments():
    F = InnovationDist.atom_exp(0.01, 5.0, 0.01)
    assert math.isclose(dist_mean(F), 0.0599, rel_tol=1e-14)
    assert math.isclose(expect_F(F, lambda y: y, 0.0), 0.0599, rel_tol=1e-12)
    second = 0.01 * 25 + 0.99 * 2 * 0.01**2
    assert math.isclose(expect_F(F, lambda y: y * y, 0.0), second, rel_tol=1e-12)


def test_cdf_shapes():
    F = InnovationDist.atom_exp(0.2, 1.0, 0.1)
    z = np.array([-1.0, 0.0, 0.5, 0.999, 1.0, 50.0])
    c = F.cdf(z)
    assert c[0] == 0 and c[1] == 0
    assert np.all(np.diff(c) >= 0)
    assert math.isclose(c[4] - c[3], 0.2, abs_tol=1e-3)
    assert math.isclose(c[-1], 1.0, abs_tol=1e-15)
    D = InnovationDist.degenerate(0.3)
    assert D.cdf(0.29) == 0 and D.cdf(0.3) == 1


@pytest.mark.parametrize("kw", [dict(variant="AtomPlusExponential", rho=1.0, zeta=5, eps=0.1),
                                dict(variant="AtomPlusExponential", rho=0.1, zeta=0.05, eps=0.1),
                                dict(variant="Exponential", eps=0.0), dict(variant="Degenerate", point=0.0),
                                dict(variant="Uniform")])
def test_dist_rejects_invalid(kw):
    with pytest.raises(ValidationError):
        InnovationDist(**kw)


def test_sampling_matches_mean(rng):
    F = InnovationDist.atom_exp(0.3, 2.0, 0.5)
    s = F.sample(rng, 200_000)
    assert abs(s.mean() - F.mean) < 4 * s.std() / math.sqrt(s.size)


def test_L_d_dominates_expectation():
    F = InnovationDist.exponential(0.5)
    g = lambda y: np.sin(3 * y)
    x = np.linspace(0, 2, 11)
    assert np.all(L_d(F, g, x) >= expect_F(F, g, x) - 1e-14)
    assert np.all(L_d(F, g, x) >= g(x) - 1e-14)


def test_non_finite_integrand_is_reported():
    F = InnovationDist.exponential(1.0)
    with pytest.raises(EvaluationError):
        expect_F(F, lambda y: np.where(y > 1, np.inf, y), 0.5)


def test_limit_approximant_preserves_lambda_mu():
    R = LimitRegime(0.1, 1.0, 5.0, 5)
    for rho in (0.1, 0.01, 0.001):
        p, F = R.approximant(rho)
        assert math.isclose(p.lam * F.mean, 0.1 * 6.0, rel_tol=1e-12)
    assert R.closed_forms_valid


def test_custom_payoff_checks_derivatives():
    ok = PayoffSpec.custom(
        b=lambda x: np.asarray(x, float), c=lambda a, x: a * x, c1=lambda a, x: x + 0 * a,
        c11=lambda a, x: 0 * a * x, c2=lambda a, x: a + 0 * x, c12=lambda a, x: 1 + 0 * a * x,
        bp=lambda x: np.ones(np.shape(x)), bpp=lambda x: np.zeros(np.shape(x)),
    )
    assert ok.variant == "Custom"
    with pytest.raises(ValidationError):
        PayoffSpec.custom(
            b=lambda x: np.asarray(x, float), c=lambda a, x: a * x, c1=lambda a, x: 2 * x + 0 * a,
            c11=lambda a, x: 0 * a * x, c2=lambda a, x: a + 0 * x, c12=lambda a, x: 1 + 0 * a * x,
            bp=lambda x: np.ones(np.shape(x)), bpp=lambda x: np.zeros(np.shape(x)),
        )


def test_separable_payoff_values():
    P = PayoffSpec.separable(scale=2.0, kappa=0.5, cost=3.0)
    assert math.isclose(float(P.b(0.0)), 0.0)
    assert math.isclose(float(P.c(0.5, 7.0)), 1.5)
    assert P.is_separable and not P.is_linear
