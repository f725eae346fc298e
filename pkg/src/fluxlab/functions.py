"""A closed family of test functions on R^d.

The family is chosen so that every operation the laboratory needs has an
exact form or a certified quadrature: pointwise evaluation, gradient,
Hessian, the diffusion generator (1/2) sum a_ij d_ij, argument scaling
x -> x / sqrt(s), heat smoothing by the Gaussian semigroup, and the total
integral.  Any analytic-vs-empirical discrepancy is then attributable to
the particle simulation, never to function handling.

Members:

* GaussianPacket      A exp(-(x-mu)^T S^{-1} (x-mu) / 2); closed under
                      everything including anisotropic heat smoothing.
* BoxIndicator        1{ max_i |x_i| <= M } (closed box); not smooth.
* SmoothedBox         heat-smoothed box for diagonal diffusion: a product
                      of normal-CDF differences.
* Hermite1D           H_k(sqrt(w) x) exp(-w x^2 / 2) (physicists' H_k).
* ProductOf1D         product of one-dimensional members.
* HeatSmoothed        generic quadrature-backed T_t phi when no closed
                      form applies.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr

from .errors import (
    DimensionMismatchError,
    NotSmoothError,
    QuadratureNotConvergedError,
    UnsupportedCombinationError,
)
from .quadrature import gauss_convolution

_NORM_PDF = 1.0 / math.sqrt(2.0 * math.pi)


def _norm_pdf(z):
    return _NORM_PDF * np.exp(-0.5 * z * z)


class TestFunction:
    """Base class: evaluable weight function with optional smooth structure."""

    dimension: int
    smooth: bool

    # -- evaluation ---------------------------------------------------------
    def __call__(self, x):
        pts, single = self._prepare(x)
        out = self._value(pts)
        return float(out[0]) if single else out

    def _prepare(self, x):
        arr = np.asarray(x, dtype=float)
        if arr.ndim == 1:
            if arr.size != self.dimension:
                raise DimensionMismatchError(
                    f"point has dimension {arr.size}, function has {self.dimension}")
            return arr[None, :], True
        if arr.ndim == 2 and arr.shape[1] == self.dimension:
            return arr, False
        raise DimensionMismatchError(
            f"expected shape (d,) or (N, {self.dimension}), got {arr.shape}")

    def _value(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # -- smooth structure ---------------------------------------------------
    def gradient(self, x):
        if not self.smooth:
            raise NotSmoothError(f"{type(self).__name__} has no gradient")
        pts, single = self._prepare(x)
        out = self._gradient(pts)
        return out[0] if single else out

    def hessian(self, x):
        if not self.smooth:
            raise NotSmoothError(f"{type(self).__name__} has no Hessian")
        pts, single = self._prepare(x)
        out = self._hessian(pts)
        return out[0] if single else out

    def generator_apply(self, x, second_moment):
        """(1/2) sum_ij a_ij d_ij phi(x) for an SPD matrix a."""
        a = np.atleast_2d(np.asarray(second_moment, dtype=float))
        pts, single = self._prepare(x)
        h = self._hessian(pts) if self.smooth else None
        if h is None:
            raise NotSmoothError(f"{type(self).__name__} has no Hessian")
        out = 0.5 * np.einsum("ij,nij->n", a, h)
        return float(out[0]) if single else out

    def _gradient(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _hessian(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # -- family operations --------------------------------------------------
    def scale_argument(self, factor: float) -> "TestFunction":
        """phi(x / sqrt(factor)) as a family member."""
        raise NotImplementedError

    def heat_smooth(self, t: float, second_moment) -> "TestFunction":
        """T_t phi, the convolution with the Gaussian kernel of covariance t*a."""
        raise NotImplementedError

    def integral(self) -> float:
        raise NotImplementedError

    def support_radius(self, tol: float) -> float:
        """Max-norm radius outside which |phi| < tol (exact for the box)."""
        raise NotImplementedError

    def peak_bound(self) -> float:
        """An upper bound for sup |phi|."""
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError


class GaussianPacket(TestFunction):
    """A exp(-(x-mu)^T S^{-1} (x-mu) / 2) with SPD shape matrix S."""

    def __init__(self, amplitude: float, mean, shape):
        self.amplitude = float(amplitude)
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.shape = np.atleast_2d(np.asarray(shape, dtype=float))
        self.dimension = self.mean.size
        self.smooth = True
        self._shape_inv = np.linalg.inv(self.shape)
        self._det = float(np.linalg.det(self.shape))
        if self._det <= 0:
            raise ValueError("shape matrix must be positive definite")

    def _value(self, pts):
        q = pts - self.mean
        expo = np.einsum("ni,ij,nj->n", q, self._shape_inv, q)
        return self.amplitude * np.exp(-0.5 * expo)

    def _gradient(self, pts):
        q = pts - self.mean
        u = q @ self._shape_inv.T
        return -self._value(pts)[:, None] * u

    def _hessian(self, pts):
        q = pts - self.mean
        u = q @ self._shape_inv.T
        outer = u[:, :, None] * u[:, None, :]
        return self._value(pts)[:, None, None] * (outer - self._shape_inv[None, :, :])

    def scale_argument(self, factor):
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        return GaussianPacket(self.amplitude, math.sqrt(factor) * self.mean, factor * self.shape)

    def heat_smooth(self, t, second_moment):
        if t < 0:
            raise ValueError("smoothing time must be nonnegative")
        if t == 0.0:
            return self
        a = np.atleast_2d(np.asarray(second_moment, dtype=float))
        widened = self.shape + t * a
        amp = self.amplitude * math.sqrt(self._det / np.linalg.det(widened))
        return GaussianPacket(amp, self.mean, widened)

    def integral(self):
        return self.amplitude * (2.0 * math.pi) ** (self.dimension / 2.0) * math.sqrt(self._det)

    def support_radius(self, tol):
        if abs(self.amplitude) <= tol:
            return 0.0
        lam_max = float(np.linalg.eigvalsh(self.shape)[-1])
        return float(np.max(np.abs(self.mean))) + math.sqrt(2.0 * lam_max * math.log(abs(self.amplitude) / tol))

    def peak_bound(self):
        return abs(self.amplitude)

    def params(self):
        return {
            "variant": "gaussian_packet",
            "amplitude": self.amplitude,
            "mean": self.mean.tolist(),
            "shape": self.shape.tolist(),
        }


def gaussian_bump(center, inverse_width: float = 1.0, amplitude: float = 1.0) -> GaussianPacket:
    """Isotropic bump A exp(-w |x - c|^2 / 2) as a GaussianPacket."""
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if inverse_width <= 0:
        raise ValueError("inverse width must be positive")
    return GaussianPacket(amplitude, center, np.eye(center.size) / inverse_width)


class BoxIndicator(TestFunction):
    """Indicator of the closed max-norm box {x : max_i |x_i| <= M}."""

    def __init__(self, radius: float, dimension: int):
        if radius <= 0:
            raise ValueError("box radius must be positive")
        self.radius = float(radius)
        self.dimension = int(dimension)
        self.smooth = False

    def _value(self, pts):
        return (np.max(np.abs(pts), axis=1) <= self.radius).astype(float)

    def scale_argument(self, factor):
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        return BoxIndicator(self.radius * math.sqrt(factor), self.dimension)

    def heat_smooth(self, t, second_moment):
        if t < 0:
            raise ValueError("smoothing time must be nonnegative")
        if t == 0.0:
            return self
        a = np.atleast_2d(np.asarray(second_moment, dtype=float))
        off = a - np.diag(np.diag(a))
        if np.max(np.abs(off)) == 0.0:
            return SmoothedBox(self.radius, t * np.diag(a))
        return HeatSmoothed(self, t, a)

    def integral(self):
        return (2.0 * self.radius) ** self.dimension

    def support_radius(self, tol):
        return self.radius

    def peak_bound(self):
        return 1.0

    def params(self):
        return {"variant": "box", "radius": self.radius, "dimension": self.dimension}


class SmoothedBox(TestFunction):
    """Heat-smoothed box for diagonal diffusion: product of Phi-differences.

    With per-axis variances u_i, the value is
    prod_i [Phi((M - x_i)/sqrt(u_i)) - Phi((-M - x_i)/sqrt(u_i))].
    Smoothing again with a diagonal matrix just adds variances, which gives
    the semigroup property in closed form.
    """

    def __init__(self, radius: float, variances):
        self.radius = float(radius)
        self.variances = np.atleast_1d(np.asarray(variances, dtype=float))
        if np.any(self.variances <= 0):
            raise ValueError("variances must be positive")
        self.dimension = self.variances.size
        self.smooth = True
        self._sd = np.sqrt(self.variances)

    def _factors(self, pts):
        hi = (self.radius - pts) / self._sd
        lo = (-self.radius - pts) / self._sd
        return ndtr(hi) - ndtr(lo)

    def _value(self, pts):
        return np.prod(self._factors(pts), axis=1)

    def _factor_d1(self, pts):
        zp = (pts + self.radius) / self._sd
        zm = (pts - self.radius) / self._sd
        return (_norm_pdf(zp) - _norm_pdf(zm)) / self._sd

    def _factor_d2(self, pts):
        zp = (pts + self.radius) / self._sd
        zm = (pts - self.radius) / self._sd
        return (-zp * _norm_pdf(zp) + zm * _norm_pdf(zm)) / self.variances

    def _gradient(self, pts):
        vals = self._factors(pts)
        d1 = self._factor_d1(pts)
        out = np.empty_like(pts)
        for i in range(self.dimension):
            rest = np.prod(np.delete(vals, i, axis=1), axis=1)
            out[:, i] = d1[:, i] * rest
        return out

    def _hessian(self, pts):
        vals = self._factors(pts)
        d1 = self._factor_d1(pts)
        d2 = self._factor_d2(pts)
        n, d = pts.shape
        out = np.empty((n, d, d))
        for i in range(d):
            for j in range(d):
                if i == j:
                    rest = np.prod(np.delete(vals, i, axis=1), axis=1)
                    out[:, i, i] = d2[:, i] * rest
                else:
                    rest = np.prod(np.delete(vals, [i, j], axis=1), axis=1)
                    out[:, i, j] = d1[:, i] * d1[:, j] * rest
        return out

    def scale_argument(self, factor):
        return SmoothedBox(self.radius * math.sqrt(factor), self.variances * factor)

    def heat_smooth(self, t, second_moment):
        if t == 0.0:
            return self
        a = np.atleast_2d(np.asarray(second_moment, dtype=float))
        off = a - np.diag(np.diag(a))
        if np.max(np.abs(off)) == 0.0:
            return SmoothedBox(self.radius, self.variances + t * np.diag(a))
        return HeatSmoothed(self, t, a)

    def integral(self):
        return (2.0 * self.radius) ** self.dimension

    def support_radius(self, tol):
        # value along axis i is bounded by the i-th factor; invert the CDF tail
        smax = float(np.max(self._sd))
        # Phi((M-x)/s) < tol once x > M + s * z_tol with Phi(-z_tol) = tol
        z = math.sqrt(max(2.0 * math.log(1.0 / max(tol, 1e-300)), 0.0))
        return self.radius + smax * z

    def peak_bound(self):
        return 1.0

    def params(self):
        return {"variant": "smoothed_box", "radius": self.radius, "variances": self.variances.tolist()}


class Hermite1D(TestFunction):
    """H_k(sqrt(w) x) exp(-w x^2 / 2) with physicists' Hermite polynomial H_k."""

    def __init__(self, order: int, inverse_width: float = 1.0):
        if order < 0:
            raise ValueError("order must be nonnegative")
        if inverse_width <= 0:
            raise ValueError("inverse width must be positive")
        self.order = int(order)
        self.inverse_width = float(inverse_width)
        self.dimension = 1
        self.smooth = True
        self._sqw = math.sqrt(inverse_width)

    def _herm(self, u, k):
        if k < 0:
            return np.zeros_like(u)
        coeffs = np.zeros(k + 1)
        coeffs[k] = 1.0
        return np.polynomial.hermite.hermval(u, coeffs)

    def _value(self, pts):
        u = self._sqw * pts[:, 0]
        return self._herm(u, self.order) * np.exp(-0.5 * u * u)

    def _gradient(self, pts):
        # with g_k(u) = H_k(u) e^{-u^2/2}: g_k' = 2k g_{k-1} - u g_k
        u = self._sqw * pts[:, 0]
        e = np.exp(-0.5 * u * u)
        gk = self._herm(u, self.order) * e
        gk1 = self._herm(u, self.order - 1) * e
        return (self._sqw * (2 * self.order * gk1 - u * gk))[:, None]

    def _hessian(self, pts):
        # g_k'' = 4k(k-1) g_{k-2} - 4k u g_{k-1} + (u^2 - 1) g_k
        u = self._sqw * pts[:, 0]
        e = np.exp(-0.5 * u * u)
        k = self.order
        gk = self._herm(u, k) * e
        gk1 = self._herm(u, k - 1) * e
        gk2 = self._herm(u, k - 2) * e
        val = 4 * k * (k - 1) * gk2 - 4 * k * u * gk1 + (u * u - 1.0) * gk
        return (self.inverse_width * val)[:, None, None]

    def scale_argument(self, factor):
        return Hermite1D(self.order, self.inverse_width / factor)

    def heat_smooth(self, t, second_moment):
        if t == 0.0:
            return self
        return HeatSmoothed(self, t, np.atleast_2d(np.asarray(second_moment, dtype=float)))

    def integral(self):
        if self.order % 2 == 1:
            return 0.0
        m = self.order // 2
        return math.sqrt(2.0 * math.pi) * math.factorial(2 * m) / math.factorial(m) / self._sqw

    def peak_bound(self):
        grid = np.linspace(-self.order - 10.0, self.order + 10.0, 4001)
        return float(np.max(np.abs(self._herm(grid, self.order) * np.exp(-0.5 * grid * grid))))

    def support_radius(self, tol):
        # |H_k(u)| e^{-u^2/2} <= m_k e^{-u^2/4} with m_k = sup |H_k| e^{-u^2/4}
        grid = np.linspace(-2.0 * self.order - 20.0, 2.0 * self.order + 20.0, 8001)
        mk = float(np.max(np.abs(self._herm(grid, self.order)) * np.exp(-0.25 * grid * grid)))
        if mk <= tol:
            return 0.0
        return math.sqrt(4.0 * math.log(mk / tol) / self.inverse_width)

    def params(self):
        return {"variant": "hermite", "order": self.order, "inverse_width": self.inverse_width}


class ProductOf1D(TestFunction):
    """Product of one-dimensional family members, one per coordinate."""

    def __init__(self, factors):
        self.factors = list(factors)
        if not self.factors:
            raise ValueError("need at least one factor")
        for f in self.factors:
            if f.dimension != 1:
                raise DimensionMismatchError("ProductOf1D factors must be one-dimensional")
        self.dimension = len(self.factors)
        self.smooth = all(f.smooth for f in self.factors)

    def _columns(self, pts, op="value"):
        cols = []
        for i, f in enumerate(self.factors):
            xi = pts[:, i:i + 1]
            if op == "value":
                cols.append(f._value(xi))
            elif op == "d1":
                cols.append(f._gradient(xi)[:, 0])
            else:
                cols.append(f._hessian(xi)[:, 0, 0])
        return np.column_stack(cols)

    def _value(self, pts):
        return np.prod(self._columns(pts), axis=1)

    def _gradient(self, pts):
        vals = self._columns(pts)
        d1 = self._columns(pts, "d1")
        out = np.empty_like(pts)
        for i in range(self.dimension):
            out[:, i] = d1[:, i] * np.prod(np.delete(vals, i, axis=1), axis=1)
        return out

    def _hessian(self, pts):
        vals = self._columns(pts)
        d1 = self._columns(pts, "d1")
        d2 = self._columns(pts, "d2")
        n, d = pts.shape
        out = np.empty((n, d, d))
        for i in range(d):
            for j in range(d):
                if i == j:
                    out[:, i, i] = d2[:, i] * np.prod(np.delete(vals, i, axis=1), axis=1)
                else:
                    out[:, i, j] = d1[:, i] * d1[:, j] * np.prod(np.delete(vals, [i, j], axis=1), axis=1)
        return out

    def scale_argument(self, factor):
        return ProductOf1D([f.scale_argument(factor) for f in self.factors])

    def heat_smooth(self, t, second_moment):
        if t == 0.0:
            return self
        a = np.atleast_2d(np.asarray(second_moment, dtype=float))
        off = a - np.diag(np.diag(a))
        if np.max(np.abs(off)) == 0.0:
            diag = np.diag(a)
            return ProductOf1D([f.heat_smooth(t, [[diag[i]]]) for i, f in enumerate(self.factors)])
        return HeatSmoothed(self, t, a)

    def integral(self):
        out = 1.0
        for f in self.factors:
            out *= f.integral()
        return out

    def peak_bound(self):
        out = 1.0
        for f in self.factors:
            out *= f.peak_bound()
        return out

    def support_radius(self, tol):
        peaks = [max(f.peak_bound(), 1e-300) for f in self.factors]
        total = np.prod(peaks)
        radii = []
        for i, f in enumerate(self.factors):
            other = total / peaks[i]
            radii.append(f.support_radius(tol / max(other, 1e-300)))
        return float(max(radii))

    def params(self):
        return {"variant": "product", "factors": [f.params() for f in self.factors]}


def hermite_gaussian(multi_index, inverse_width: float = 1.0) -> ProductOf1D:
    """Product of Hermite-Gaussian factors, one order per coordinate."""
    return ProductOf1D([Hermite1D(k, inverse_width) for k in np.atleast_1d(multi_index)])


class HeatSmoothed(TestFunction):
    """Quadrature-backed T_t phi for combinations without a closed form."""

    def __init__(self, base: TestFunction, t: float, second_moment, tol: float = 1e-8):
        if t <= 0:
            raise ValueError("HeatSmoothed requires t > 0")
        self.base = base
        self.t = float(t)
        self.second_moment = np.atleast_2d(np.asarray(second_moment, dtype=float))
        self.tol = tol
        self.dimension = base.dimension
        self.smooth = True
        self._scale = math.sqrt(self.t) * np.linalg.cholesky(self.second_moment)

    def _value(self, pts):
        try:
            return gauss_convolution(self.base._value, pts, self._scale, tol=self.tol)
        except QuadratureNotConvergedError as exc:
            raise UnsupportedCombinationError(
                f"no closed smoothing form for {type(self.base).__name__} with this "
                f"diffusion matrix and the quadrature fallback did not converge: {exc}"
            ) from None

    def heat_smooth(self, t, second_moment):
        if t == 0.0:
            return self
        a = np.atleast_2d(np.asarray(second_moment, dtype=float))
        if np.allclose(a, self.second_moment):
            return HeatSmoothed(self.base, self.t + t, self.second_moment, self.tol)
        return HeatSmoothed(self, t, a, self.tol)

    def scale_argument(self, factor):
        # (T_t phi)(x / sqrt(s)) = T_{t/s} (phi o eta_s)(x): widen base and rescale time
        return HeatSmoothed(self.base.scale_argument(factor), self.t * factor,
                            self.second_moment, self.tol)

    def integral(self):
        return self.base.integral()

    def peak_bound(self):
        return self.base.peak_bound()

    def support_radius(self, tol):
        lam = float(np.linalg.eigvalsh(self.second_moment)[-1])
        peak = max(self.base.peak_bound(), tol)
        spread = math.sqrt(2.0 * self.t * lam * math.log(2.0 * peak / tol))
        return self.base.support_radius(0.5 * tol / max(peak, 1.0)) + spread

    def params(self):
        return {"variant": "heat_smoothed", "t": self.t, "base": self.base.params()}
