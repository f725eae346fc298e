"""Analytic evaluation of the Gaussian limit of the scaled current.

The limit is a mean-zero Gaussian field indexed by (time, test function)
whose covariance splits into two bilinear terms: one generated by the walk
motion (weighted by the mean occupancy rho0) and one carrying the initial
occupancy fluctuations (weighted by the occupancy variance v0).  Both are
assembled from the single building block

    C(u; phi, psi) = int int phi(y) psi(z) p_u(z - y) dz dy
                   = int phi(y) (T_u psi)(y) dy,

where p_u is the Gaussian heat kernel of the walk's second-moment matrix
and T_u the associated semigroup.  C(0) is taken to be int phi psi, the
delta-kernel limit; this is the unique convention under which the
covariance is continuous on the time diagonal.

Everything here is exact or certified quadrature; finite-dimensional draws
of the limit law are produced directly from the covariance (Cholesky), not
by discretizing any driving noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import (
    DimensionMismatchError,
    GramNotPSDError,
    NonPositiveTimeError,
    NotSmoothError,
)
from .functions import BoxIndicator, GaussianPacket, TestFunction
from .quadrature import integrate_box
from .rng import RngStream

DEFAULT_QUAD_TOL = 1e-10


@dataclass(frozen=True)
class LimitSpec:
    """Parameters that determine the limit covariance."""

    mean_density: float        # rho0, mean initial occupancy per site
    occupancy_variance: float  # v0, variance of the initial occupancy
    second_moment: np.ndarray  # (d, d) SPD walk second-moment matrix

    def __post_init__(self):
        object.__setattr__(self, "second_moment",
                           np.atleast_2d(np.asarray(self.second_moment, dtype=float)))
        if self.mean_density < 0 or self.occupancy_variance < 0:
            raise ValueError("mean density and occupancy variance must be nonnegative")

    @property
    def dimension(self) -> int:
        return self.second_moment.shape[0]


@dataclass(frozen=True)
class SpaceTimePoint:
    """One evaluation point (t, phi) of the current field."""

    time: float
    function: TestFunction

    def __post_init__(self):
        if self.time < 0:
            raise ValueError("time must be nonnegative")


def gaussian_density(x, t: float, second_moment) -> float:
    """Heat-kernel density p_t(x) = exp(-x^T a^{-1} x / 2t) / ((2 pi t)^{d/2} sqrt(det a))."""
    if t <= 0:
        raise NonPositiveTimeError("density requires t > 0")
    a = np.atleast_2d(np.asarray(second_moment, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = a.shape[0]
    if x.size != d:
        raise DimensionMismatchError(f"point has dimension {x.size}, matrix is {d}x{d}")
    quad = float(x @ np.linalg.solve(a, x))
    det = float(np.linalg.det(a))
    return math.exp(-0.5 * quad / t) / ((2.0 * math.pi * t) ** (d / 2.0) * math.sqrt(det))


def _check_pair(phi: TestFunction, psi: TestFunction, a: np.ndarray):
    if phi.dimension != psi.dimension or phi.dimension != a.shape[0]:
        raise DimensionMismatchError(
            f"dimensions disagree: phi {phi.dimension}, psi {psi.dimension}, matrix {a.shape[0]}")


def _gaussian_pair(u: float, phi: GaussianPacket, psi: GaussianPacket, a: np.ndarray) -> float:
    """Closed form of C(u) for two Gaussian packets (valid at u = 0 too)."""
    d = phi.dimension
    sigma = phi.shape + psi.shape + u * a
    delta = psi.mean - phi.mean
    det1 = np.linalg.det(phi.shape)
    det2 = np.linalg.det(psi.shape)
    dets = np.linalg.det(sigma)
    expo = float(delta @ np.linalg.solve(sigma, delta))
    return (phi.amplitude * psi.amplitude * (2.0 * math.pi) ** (d / 2.0)
            * math.sqrt(det1 * det2 / dets) * math.exp(-0.5 * expo))


def overlap_integral(phi: TestFunction, psi: TestFunction, tol: float = DEFAULT_QUAD_TOL) -> float:
    """int phi(x) psi(x) dx, the u = 0 value of the pair integral."""
    if isinstance(phi, GaussianPacket) and isinstance(psi, GaussianPacket):
        return _gaussian_pair(0.0, phi, psi, np.zeros((phi.dimension, phi.dimension)))
    if isinstance(phi, BoxIndicator) and isinstance(psi, BoxIndicator):
        return (2.0 * min(phi.radius, psi.radius)) ** phi.dimension
    if isinstance(psi, BoxIndicator) and not isinstance(phi, BoxIndicator):
        phi, psi = psi, phi
    d = phi.dimension
    if isinstance(phi, BoxIndicator):
        r = phi.radius
    else:
        tiny = tol * 1e-3 / max(1.0, phi.peak_bound() * psi.peak_bound())
        r = min(phi.support_radius(tiny), psi.support_radius(tiny))
    return integrate_box(lambda p: phi._value(p) * psi._value(p), [-r] * d, [r] * d, tol=tol)


def pair_integral(u: float, phi: TestFunction, psi: TestFunction, second_moment,
                  tol: float = DEFAULT_QUAD_TOL) -> float:
    """C(u; phi, psi) = int phi(y) (T_u psi)(y) dy, with C(0) = int phi psi.

    Gaussian pairs are evaluated in closed form; anything else reduces the
    double integral to a single one through heat smoothing and integrates
    by adaptive Gauss-Legendre over a certified region.
    """
    if u < 0:
        raise ValueError("u must be nonnegative")
    a = np.atleast_2d(np.asarray(second_moment, dtype=float))
    _check_pair(phi, psi, a)
    if isinstance(phi, GaussianPacket) and isinstance(psi, GaussianPacket):
        return _gaussian_pair(u, phi, psi, a)
    if u == 0.0:
        return overlap_integral(phi, psi, tol)
    # the heat kernel is even, so C is symmetric in (phi, psi): put a box outside
    if isinstance(psi, BoxIndicator) and not isinstance(phi, BoxIndicator):
        phi, psi = psi, phi
    smoothed = psi.heat_smooth(u, a)
    d = phi.dimension
    if isinstance(phi, BoxIndicator):
        r = phi.radius  # integrand vanishes exactly outside
    else:
        tiny = tol * 1e-3 / max(1.0, phi.peak_bound() * psi.peak_bound())
        r = min(phi.support_radius(tiny), smoothed.support_radius(tiny))
    return integrate_box(lambda p: phi._value(p) * smoothed._value(p), [-r] * d, [r] * d, tol=tol)


def motion_covariance(s: float, phi: TestFunction, t: float, psi: TestFunction,
                      second_moment, tol: float = DEFAULT_QUAD_TOL) -> float:
    """Covariance term created by the walk motion: C(|t-s|) - C(t+s)."""
    if s < 0 or t < 0:
        raise ValueError("times must be nonnegative")
    return (pair_integral(abs(t - s), phi, psi, second_moment, tol)
            - pair_integral(t + s, phi, psi, second_moment, tol))


def initial_covariance(s: float, phi: TestFunction, t: float, psi: TestFunction,
                       second_moment, tol: float = DEFAULT_QUAD_TOL) -> float:
    """Covariance term carrying initial fluctuations: C(t+s) - C(t) - C(s) + int phi psi."""
    if s < 0 or t < 0:
        raise ValueError("times must be nonnegative")
    return (pair_integral(t + s, phi, psi, second_moment, tol)
            - pair_integral(t, phi, psi, second_moment, tol)
            - pair_integral(s, phi, psi, second_moment, tol)
            + overlap_integral(phi, psi, tol))


def limit_covariance(s: float, phi: TestFunction, t: float, psi: TestFunction,
                     spec: LimitSpec, tol: float = DEFAULT_QUAD_TOL) -> float:
    """E xi(s, phi) xi(t, psi) = rho0 * motion term + v0 * initial term."""
    out = 0.0
    if spec.mean_density > 0:
        out += spec.mean_density * motion_covariance(s, phi, t, psi, spec.second_moment, tol)
    if spec.occupancy_variance > 0:
        out += spec.occupancy_variance * initial_covariance(s, phi, t, psi, spec.second_moment, tol)
    return out


def box_pair_integral(u: float, radius: float, dimension: int) -> float:
    """Closed form of C(u) for phi = psi = box indicator under identity diffusion.

    Per coordinate: 2M (Phi_u(2M) - Phi_u(-2M)) + 2 sqrt(u / 2 pi) (e^{-2M^2/u} - 1),
    raised to the d-th power; here Phi_u is the N(0, u) distribution function.
    The value decreases from (2M)^d at u -> 0+ to 0 as u -> infinity.
    """
    if u <= 0:
        raise ValueError("u must be positive")
    if radius <= 0:
        raise ValueError("radius must be positive")
    m = float(radius)
    root = math.sqrt(u)
    per = (2.0 * m * (ndtr(2.0 * m / root) - ndtr(-2.0 * m / root))
           + 2.0 * math.sqrt(u / (2.0 * math.pi)) * (math.exp(-2.0 * m * m / u) - 1.0))
    return per ** dimension


class GeneratorImage(TestFunction):
    """Evaluable x -> (1/2) sum a_ij d_ij phi(x) for a smooth family member.

    Heat smoothing commutes with the generator built from the same matrix,
    so T_u applied to this object is the generator image of T_u phi.
    """

    def __init__(self, base: TestFunction, second_moment):
        if not base.smooth:
            raise NotSmoothError("generator image needs a smooth function")
        self.base = base
        self.second_moment = np.atleast_2d(np.asarray(second_moment, dtype=float))
        self.dimension = base.dimension
        self.smooth = True

    def _value(self, pts):
        return 0.5 * np.einsum("ij,nij->n", self.second_moment, self.base._hessian(pts))

    def heat_smooth(self, t, second_moment):
        a = np.atleast_2d(np.asarray(second_moment, dtype=float))
        if not np.allclose(a, self.second_moment):
            raise ValueError("generator image only smooths with its own matrix")
        return GeneratorImage(self.base.heat_smooth(t, a), self.second_moment)

    def integral(self):
        return 0.0  # integral of a pure second-derivative expression of a Schwartz function

    def peak_bound(self):
        r = self.base.support_radius(1e-12)
        grid = np.linspace(-r, r, 801)
        pts = np.zeros((grid.size, self.dimension))
        best = 0.0
        for axis in range(self.dimension):
            pts[:] = 0.0
            pts[:, axis] = grid
            best = max(best, float(np.max(np.abs(self._value(pts)))))
        return max(best, 1e-300)

    def support_radius(self, tol):
        # polynomial prefactors are swallowed by a deeper Gaussian tolerance
        return self.base.support_radius(tol * 1e-4)

    def params(self):
        return {"variant": "generator_image", "base": self.base.params()}


def quadratic_forms(phi: TestFunction, psi: TestFunction, second_moment,
                    tol: float = 1e-9) -> tuple[float, float]:
    """The two bilinear forms of the limit dynamics.

    Returns (Q1, Q2) with Q1 = int sum a_ij d_i phi d_j psi dx (the Dirichlet
    form of the diffusion) and Q2 = int (A phi)(A psi) dx where A is the
    generator.  Both by adaptive quadrature; requires smooth arguments.
    """
    a = np.atleast_2d(np.asarray(second_moment, dtype=float))
    _check_pair(phi, psi, a)
    if not (phi.smooth and psi.smooth):
        raise NotSmoothError("quadratic forms need smooth arguments")
    tiny = tol * 1e-6 / max(1.0, phi.peak_bound() * psi.peak_bound())
    r = min(phi.support_radius(tiny), psi.support_radius(tiny))
    d = phi.dimension

    def dirichlet(pts):
        return np.einsum("ij,ni,nj->n", a, phi._gradient(pts), psi._gradient(pts))

    gen_phi = GeneratorImage(phi, a)
    gen_psi = GeneratorImage(psi, a)

    def generator_product(pts):
        return gen_phi._value(pts) * gen_psi._value(pts)

    q1 = integrate_box(dirichlet, [-r] * d, [r] * d, tol=tol)
    q2 = integrate_box(generator_product, [-r] * d, [r] * d, tol=tol)
    return q1, q2


def increment_variance(s: float, t: float, phi: TestFunction, spec: LimitSpec,
                       tol: float = DEFAULT_QUAD_TOL) -> float:
    """Var(xi(t, phi) - xi(s, phi)) by bilinear expansion of the covariance."""
    if not 0 <= s <= t:
        raise ValueError("need 0 <= s <= t")
    k_tt = limit_covariance(t, phi, t, phi, spec, tol)
    k_ss = limit_covariance(s, phi, s, phi, spec, tol)
    k_st = limit_covariance(s, phi, t, phi, spec, tol)
    return k_tt + k_ss - 2.0 * k_st


def gram_matrix(points, spec: LimitSpec, tol: float = DEFAULT_QUAD_TOL) -> np.ndarray:
    """Covariance Gram matrix of the limit field over finitely many points."""
    pts = list(points)
    n = len(pts)
    g = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            g[i, j] = limit_covariance(pts[i].time, pts[i].function,
                                       pts[j].time, pts[j].function, spec, tol)
            g[j, i] = g[i, j]
    return g


_JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)


def _cholesky_with_jitter(gram: np.ndarray):
    """Cholesky factor after escalating diagonal jitter; failure is a bug signal."""
    scale = max(float(np.max(np.diag(gram))), 1.0)
    for jitter in _JITTER_LADDER:
        try:
            return np.linalg.cholesky(gram + jitter * scale * np.eye(gram.shape[0]))
        except np.linalg.LinAlgError:
            continue
    raise GramNotPSDError(
        "Gram matrix is not positive semidefinite after jitter up to 1e-8; "
        "this indicates a covariance-evaluation bug")


def sample_limit_gaussian(points, spec: LimitSpec, rng, size: int | None = None,
                          tol: float = DEFAULT_QUAD_TOL) -> np.ndarray:
    """Exact mean-zero Gaussian draws with the limit Gram matrix.

    Points with zero variance (e.g. t = 0) are pinned to exactly zero; the
    positive-variance block goes through Cholesky with jitter escalation.
    """
    pts = list(points)
    if not pts:
        raise ValueError("need at least one point")
    gram = gram_matrix(pts, spec, tol)
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    n = len(pts)
    active = np.diag(gram) > 0.0
    shape = (n,) if size is None else (size, n)
    out = np.zeros(shape)
    if np.any(active):
        sub = gram[np.ix_(active, active)]
        chol = _cholesky_with_jitter(sub)
        z = gen.standard_normal((size or 1, int(active.sum())))
        draws = z @ chol.T
        if size is None:
            out[active] = draws[0]
        else:
            out[:, active] = draws
    return out
