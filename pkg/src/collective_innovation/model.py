"""Model primitives: parameters, payoffs, innovation-size laws and the
expectation operators used by every solver.

Time is rescaled so that the discount rate equals one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.laguerre import laggauss

from .errors import EvaluationError, ValidationError

ArrayFn = Callable[[np.ndarray], np.ndarray]
ArrayFn2 = Callable[[np.ndarray, np.ndarray], np.ndarray]

DEFAULT_QUADRATURE_ORDER = 64


@dataclass(frozen=True)
class ModelParams:
    """Arrival rate per unit of effort, team size and initial stock."""

    lam: float
    n: int
    x0: float = 0.0

    def __post_init__(self) -> None:
        if not np.isfinite(self.lam) or self.lam <= 0:
            raise ValidationError(f"lambda must be positive, got {self.lam}")
        if int(self.n) != self.n or self.n < 2:
            raise ValidationError(f"n must be an integer >= 2, got {self.n}")
        if not np.isfinite(self.x0) or self.x0 < 0:
            raise ValidationError(f"x0 must be non-negative, got {self.x0}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def discount(self) -> float:
        return 1.0


# --------------------------------------------------------------------------
# Payoffs
# --------------------------------------------------------------------------

LINEAR = "LinearMultiplicative"
SEPARABLE = "SeparableLinearCost"
CUSTOM = "Custom"


def _fd_check(name: str, f, df, points, step: float = 1e-5, rtol: float = 1e-4) -> None:
    for args, wrt in points:
        args = [np.float64(a) for a in args]
        hi = list(args)
        lo = list(args)
        hi[wrt] += step
        lo[wrt] -= step
        numeric = (f(*hi) - f(*lo)) / (2 * step)
        exact = df(*args)
        if abs(numeric - exact) > rtol * max(1.0, abs(exact)):
            raise ValidationError(
                f"derivative {name} disagrees with finite differences at {tuple(map(float, args))}: "
                f"{float(exact)} vs {float(numeric)}"
            )


@dataclass(frozen=True)
class PayoffSpec:
    """Flow payoff u = b(x) - c(a, x) together with the partial derivatives
    the solvers need. All callables are vectorised over numpy arrays."""

    variant: str
    b: ArrayFn
    c: ArrayFn2
    c1: ArrayFn2
    c11: ArrayFn2
    c2: ArrayFn2
    c12: ArrayFn2
    bp: ArrayFn
    bpp: ArrayFn
    description: dict = field(default_factory=dict, compare=False)

    @property
    def is_linear(self) -> bool:
        return self.variant == LINEAR

    @property
    def is_separable(self) -> bool:
        return self.variant == SEPARABLE

    @classmethod
    def linear(cls) -> "PayoffSpec":
        """b(x) = x, c(a, x) = a x."""
        zero2 = lambda a, x: np.zeros(np.broadcast(a, x).shape)
        return cls(
            variant=LINEAR,
            b=lambda x: np.asarray(x, dtype=float) * 1.0,
            c=lambda a, x: np.asarray(a, dtype=float) * x,
            c1=lambda a, x: np.broadcast_to(np.asarray(x, dtype=float), np.broadcast(a, x).shape) * 1.0,
            c11=zero2,
            c2=lambda a, x: np.broadcast_to(np.asarray(a, dtype=float), np.broadcast(a, x).shape) * 1.0,
            c12=lambda a, x: np.ones(np.broadcast(a, x).shape),
            bp=lambda x: np.ones(np.shape(x)),
            bpp=lambda x: np.zeros(np.shape(x)),
            description={"variant": LINEAR},
        )

    @classmethod
    def separable(cls, scale: float = 1.0, kappa: float = 1.0, cost: float = 1.0) -> "PayoffSpec":
        """Bounded concave benefit b(x) = scale (1 - exp(-kappa x)) with a
        stock-independent linear cost c(a) = cost * a."""
        if scale <= 0 or kappa <= 0 or cost <= 0:
            raise ValidationError("separable payoff parameters must be positive")
        zero2 = lambda a, x: np.zeros(np.broadcast(a, x).shape)
        return cls(
            variant=SEPARABLE,
            b=lambda x: scale * (1.0 - np.exp(-kappa * np.asarray(x, dtype=float))),
            c=lambda a, x: cost * np.broadcast_to(np.asarray(a, dtype=float), np.broadcast(a, x).shape),
            c1=lambda a, x: cost * np.ones(np.broadcast(a, x).shape),
            c11=zero2,
            c2=zero2,
            c12=zero2,
            bp=lambda x: scale * kappa * np.exp(-kappa * np.asarray(x, dtype=float)),
            bpp=lambda x: -scale * kappa**2 * np.exp(-kappa * np.asarray(x, dtype=float)),
            description={"variant": SEPARABLE, "scale": scale, "kappa": kappa, "cost": cost},
        )

    @classmethod
    def custom(
        cls,
        b: ArrayFn,
        c: ArrayFn2,
        c1: ArrayFn2,
        c11: ArrayFn2,
        c2: ArrayFn2,
        c12: ArrayFn2,
        bp: ArrayFn,
        bpp: ArrayFn,
        check_points: tuple[float, ...] = (0.1, 0.5, 1.0, 2.0),
    ) -> "PayoffSpec":
        """User-supplied payoff. Derivatives are spot-checked against central
        finite differences at construction."""
        for x in check_points:
            for a in (0.25, 0.5, 0.75):
                _fd_check("c1", c, c1, [((a, x), 0)])
                _fd_check("c11", c1, c11, [((a, x), 0)])
                _fd_check("c2", c, c2, [((a, x), 1)])
                _fd_check("c12", c1, c12, [((a, x), 1)])
            _fd_check("b'", b, bp, [((x,), 0)])
            _fd_check("b''", bp, bpp, [((x,), 0)])
            if abs(float(c(np.float64(0.0), np.float64(x)))) > 1e-12:
                raise ValidationError("custom cost must satisfy c(0, x) = 0")
        return cls(CUSTOM, b, c, c1, c11, c2, c12, bp, bpp, {"variant": CUSTOM})

    def check_on_grid(self, x: np.ndarray, efforts: np.ndarray | None = None, tol: float = 1e-10) -> None:
        """Assert the shape restrictions on the working grid."""
        x = np.asarray(x, dtype=float)
        if np.any(self.bp(x) < -tol):
            raise ValidationError("b must be increasing on the grid")
        if np.any(self.bpp(x) > tol):
            raise ValidationError("b must be concave on the grid")
        a = np.linspace(0.0, 1.0, 11) if efforts is None else np.asarray(efforts, dtype=float)
        A, X = np.meshgrid(a, x, indexing="ij")
        if np.any(np.abs(self.c(np.zeros_like(x), x)) > tol):
            raise ValidationError("c(0, x) must vanish")
        if np.any(self.c1(A, X) < -tol) or np.any(self.c11(A, X) < -tol):
            raise ValidationError("c must be increasing and convex in effort")
        if np.any(np.diff(self.c1(A, X), axis=1) < -tol) or np.any(np.diff(self.c11(A, X), axis=1) < -tol):
            raise ValidationError("c1 and c11 must be weakly increasing in the stock")


# --------------------------------------------------------------------------
# Innovation-size laws
# --------------------------------------------------------------------------

ATOM_EXP = "AtomPlusExponential"
EXPONENTIAL = "Exponential"
DEGENERATE = "Degenerate"


@dataclass(frozen=True)
class InnovationDist:
    """Mixture of an atom at zeta (weight rho) and an exponential with mean
    eps, or a point mass at mu."""

    variant: str
    rho: float = 0.0
    zeta: float = 0.0
    eps: float = 0.0
    point: float = 0.0
    order: int = DEFAULT_QUADRATURE_ORDER

    def __post_init__(self) -> None:
        if self.variant == ATOM_EXP:
            if not (0.0 <= self.rho < 1.0):
                raise ValidationError(f"rho must lie in [0, 1), got {self.rho}")
            if not (self.zeta > self.eps > 0.0):
                raise ValidationError(f"need zeta > eps > 0, got zeta={self.zeta}, eps={self.eps}")
        elif self.variant == EXPONENTIAL:
            if not self.eps > 0:
                raise ValidationError(f"eps must be positive, got {self.eps}")
        elif self.variant == DEGENERATE:
            if not self.point > 0:
                raise ValidationError(f"mu must be positive, got {self.point}")
        else:
            raise ValidationError(f"unknown distribution variant {self.variant!r}")
        if self.order < 2:
            raise ValidationError("quadrature order must be at least 2")

    @classmethod
    def atom_exp(cls, rho: float, zeta: float, eps: float, order: int = DEFAULT_QUADRATURE_ORDER) -> "InnovationDist":
        return cls(ATOM_EXP, rho=rho, zeta=zeta, eps=eps, order=order)

    @classmethod
    def exponential(cls, eps: float, order: int = DEFAULT_QUADRATURE_ORDER) -> "InnovationDist":
        return cls(EXPONENTIAL, eps=eps, order=order)

    @classmethod
    def degenerate(cls, mu: float) -> "InnovationDist":
        return cls(DEGENERATE, point=mu)

    # Mixture view -------------------------------------------------------
    @property
    def atom_weight(self) -> float:
        if self.variant == DEGENERATE:
            return 1.0
        return self.rho if self.variant == ATOM_EXP else 0.0

    @property
    def atom_location(self) -> float:
        return self.point if self.variant == DEGENERATE else self.zeta

    @property
    def exp_weight(self) -> float:
        return 1.0 - self.atom_weight

    @property
    def exp_mean(self) -> float:
        return self.eps

    @property
    def mean(self) -> float:
        return dist_mean(self)

    @property
    def small_innovations(self) -> bool:
        """F(z) > 0 for every z > 0."""
        return self.variant != DEGENERATE

    def cdf(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        out = np.zeros_like(z)
        pos = z > 0
        if self.exp_weight > 0:
            out = out + np.where(pos, self.exp_weight * -np.expm1(-np.where(pos, z, 0.0) / self.eps), 0.0)
        if self.atom_weight > 0:
            out = out + self.atom_weight * (z >= self.atom_location)
        return out

    def sf(self, z) -> np.ndarray:
        """P(z_tilde > z)."""
        return 1.0 - self.cdf(z)

    def quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        """Increment nodes and weights: exact atom plus Gauss-Laguerre for
        the exponential component."""
        return _quadrature(self.variant, self.rho, self.zeta, self.eps, self.point, self.order)

    def to_dict(self) -> dict:
        if self.variant == ATOM_EXP:
            return {"variant": ATOM_EXP, "rho": self.rho, "zeta": self.zeta, "eps": self.eps}
        if self.variant == EXPONENTIAL:
            return {"variant": EXPONENTIAL, "eps": self.eps}
        return {"variant": DEGENERATE, "mu": self.point}

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray | float:
        """Draw increments; see ``sample_increment``."""
        if self.variant == DEGENERATE:
            return self.point if size is None else np.full(size, self.point)
        u = rng.random(size)
        e = rng.exponential(self.eps, size)
        if self.atom_weight == 0:
            return e
        return np.where(u < self.atom_weight, self.zeta, e)


_QUAD_CACHE: dict = {}


def _quadrature(variant, rho, zeta, eps, point, order):
    key = (variant, rho, zeta, eps, point, order)
    hit = _QUAD_CACHE.get(key)
    if hit is not None:
        return hit
    if variant == DEGENERATE:
        z, w = np.array([point]), np.array([1.0])
    else:
        t, wt = laggauss(order)
        atom = rho if variant == ATOM_EXP else 0.0
        z = eps * t
        w = (1.0 - atom) * wt
        if atom > 0:
            z = np.append(z, zeta)
            w = np.append(w, atom)
    z.setflags(write=False)
    w.setflags(write=False)
    _QUAD_CACHE[key] = (z, w)
    return z, w


def dist_mean(F: InnovationDist) -> float:
    if F.variant == DEGENERATE:
        return F.point
    if F.variant == EXPONENTIAL:
        return F.eps
    return F.rho * F.zeta + (1.0 - F.rho) * F.eps


def _evaluate(g, pts: np.ndarray, x) -> np.ndarray:
    vals = np.asarray(g(pts), dtype=float)
    if not np.all(np.isfinite(vals)):
        bad = np.argwhere(~np.isfinite(vals))[0]
        raise EvaluationError(
            f"non-finite integrand at x={np.ravel(x)[bad[0]] if np.ndim(x) else x}, "
            f"node y={pts[tuple(bad)]}"
        )
    return vals


def expect_F(F: InnovationDist, g: Callable, x) -> np.ndarray | float:
    """E_F[g(x + z)] for scalar or array x. ``g`` must accept arrays."""
    z, w = F.quadrature()
    xa = np.asarray(x, dtype=float)
    pts = xa[..., None] + z
    vals = _evaluate(g, pts, xa)
    out = vals @ w
    return float(out) if np.ndim(x) == 0 else out


def L_d(F: InnovationDist, g: Callable, x) -> np.ndarray | float:
    """E_F[max(g(x), g(x + z))]."""
    z, w = F.quadrature()
    xa = np.asarray(x, dtype=float)
    here = _evaluate(g, xa, xa)
    vals = _evaluate(g, xa[..., None] + z, xa)
    out = np.maximum(here[..., None], vals) @ w
    return float(out) if np.ndim(x) == 0 else out


def sample_increment(F: InnovationDist, rng: np.random.Generator) -> float:
    return float(F.sample(rng))


@dataclass(frozen=True)
class LimitRegime:
    """Small-frequent-improvement limit with lambda' = lambda rho and
    eps' = eps (1/rho - 1) held fixed."""

    lam_p: float
    eps_p: float
    zeta: float
    n: int
    x0: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 < self.lam_p < 1.0):
            raise ValidationError(f"lambda' must lie in (0, 1), got {self.lam_p}")
        if self.eps_p <= 0 or self.zeta <= 0:
            raise ValidationError("eps' and zeta must be positive")
        if int(self.n) != self.n or self.n < 2:
            raise ValidationError("n must be an integer >= 2")
        if self.x0 < 0:
            raise ValidationError("x0 must be non-negative")

    @property
    def closed_forms_valid(self) -> bool:
        return self.lam_p * (self.zeta + self.eps_p) <= self.zeta

    def approximant(self, rho: float) -> tuple[ModelParams, InnovationDist]:
        """Finite (lambda, rho, eps) mixture converging to the regime as rho -> 0."""
        lam = self.lam_p / rho
        eps = self.eps_p * rho / (1.0 - rho)
        return ModelParams(lam, self.n, self.x0), InnovationDist.atom_exp(rho, self.zeta, eps)
