"""Independent reference formulas and frozen reference values. Nothing here
imports the package, so agreement with the solvers is a two-route check."""
import math

import numpy as np

# Figure-1/2 parameters: arrival rate, team size, atom weight, atom, exp mean
LAM, N, RHO, ZETA, EPS = 10.0, 5, 0.01, 5.0, 0.01
MU = RHO * ZETA + (1 - RHO) * EPS

# frozen at build time from the closed forms below, 16 digits
FROZEN = {
    "x_star": 2.995,
    "x_f": 0.599,
    "y_f": 0.1909043956607454,
    "xhat_display": 0.5980468982019568,
    "xhat_argmin": 0.5036898201956752,
    "v_f_0p3": 0.7314381534066039,
    "alpha_f_0p3": 0.35953179450550327,
    "limit_y_d": 0.35714285714285715,
    "limit_xhat_f": 0.4946394843421738,
    "endo_effort_jump": 0.10220440881763522,
    "endo_value_jump": 0.02,
}


def benchmark_value(x, lam=LAM, n=N, rho=RHO, zeta=ZETA, eps=EPS):
    """Planner value for the atom-plus-exponential law under linear payoffs."""
    mu = rho * zeta + (1 - rho) * eps
    xs = lam * mu * n
    k = lam * n * rho
    x = np.asarray(x, dtype=float)
    low = k / (1 + k) ** 2 * (
        eps * (1 / rho - 1) * np.exp((1 + k) / (eps * (1 + lam * n)) * (np.minimum(x, xs) - xs))
        + xs + (1 + k) * x + zeta
    )
    return np.where(x <= xs, low, x)


def forced_middle_value(x, lam=LAM, rho=RHO, zeta=ZETA, eps=EPS):
    """Equilibrium value between the full-effort and no-effort regions."""
    x_f = lam * (rho * zeta + (1 - rho) * eps)
    x = np.asarray(x, dtype=float)
    return (eps * (1 / rho - 1) * np.expm1(rho / eps * (x - x_f)) - (1 - lam * rho) * x + x_f) / (lam * rho)


def forced_middle_effort(x, n=N, **kw):
    x = np.asarray(x, dtype=float)
    return (forced_middle_value(x, **kw) - x) / ((n - 1) * x)


def y_f_exponential(lam, n, eps):
    return eps * (1 + lam * n - math.sqrt((n * n - 1) * lam * lam + 2 * (n - 1) * lam + 1))


def jump_count_exponential(x, lam, eps):
    """Expected exponential(eps) jumps to pass lam*eps from x: 1 + distance/eps."""
    return 1 + (lam * eps - np.asarray(x, dtype=float)) / eps


def forced_value_exponential(x, lam, eps):
    """x plus the integral of the jump count over [x, lam eps], over lam."""
    top = lam * eps
    x = np.asarray(x, dtype=float)
    d = top - x
    return x + (d + d * d / (2 * eps)) / lam


def jump_count_degenerate(x, lam, mu):
    return np.ceil((lam * mu - np.asarray(x, dtype=float)) / mu - 1e-12)


def limit_y_d(lam_p, zeta, n):
    return lam_p * zeta / (1 + lam_p * (n - 1))


def limit_xhat_f(lam_p, eps_p, zeta):
    return lam_p * (zeta + eps_p) + eps_p * math.log(1 - lam_p)
