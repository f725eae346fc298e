"""Adaptive tensor-product quadrature helpers.

Two primitives cover every numerical integral in the package:

* integrate_box: Gauss-Legendre over an axis-aligned box, order-doubled
  until two consecutive levels agree within tolerance.  All integrands we
  meet are smooth (or piecewise smooth with the box edges aligned to the
  integration region), so convergence is fast.
* gauss_convolution: Gauss-Hermite evaluation of a Gaussian expectation
  E f(x + sqrt(t) L z), z ~ N(0, I); this is the heat-smoothing fallback
  when no closed form exists.
"""
from __future__ import annotations

from functools import lru_cache
from itertools import product

import numpy as np

from .errors import QuadratureNotConvergedError

_GL_ORDERS_1D = (16, 32, 64, 128, 256)
_GL_ORDERS_ND = (8, 16, 32, 64, 96)
_GH_ORDERS = (16, 32, 64, 96)


@lru_cache(maxsize=None)
def _leg_nodes(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


@lru_cache(maxsize=None)
def _herm_nodes(order: int):
    x, w = np.polynomial.hermite.hermgauss(order)
    return x, w


def _tensor(nodes_1d, weights_1d, lows, highs):
    """Tensor grid on a box: returns points (Q^d, d) and weights (Q^d,)."""
    d = len(lows)
    axes, waxes = [], []
    for i in range(d):
        half = 0.5 * (highs[i] - lows[i])
        mid = 0.5 * (highs[i] + lows[i])
        axes.append(mid + half * nodes_1d)
        waxes.append(half * weights_1d)
    pts = np.array(list(product(*axes)))
    wts = np.array([np.prod(c) for c in product(*waxes)])
    return pts, wts


def integrate_box(f, lows, highs, tol: float = 1e-10, rtol: float | None = None):
    """Integral of a batched integrand f((N, d) -> (N,)) over the box [lows, highs].

    Doubles the tensor Gauss-Legendre order until two consecutive levels
    agree within max(tol, rtol*|I|); raises QuadratureNotConvergedError if
    the ladder is exhausted first.
    """
    lows = np.atleast_1d(np.asarray(lows, dtype=float))
    highs = np.atleast_1d(np.asarray(highs, dtype=float))
    d = lows.size
    if np.any(highs <= lows):
        return 0.0
    orders = _GL_ORDERS_1D if d == 1 else _GL_ORDERS_ND
    prev = None
    for order in orders:
        x, w = _leg_nodes(order)
        pts, wts = _tensor(x, w, lows, highs)
        val = float(wts @ np.asarray(f(pts), dtype=float))
        if prev is not None:
            bound = max(tol, (rtol or 0.0) * abs(val))
            if abs(val - prev) <= bound:
                return val
        prev = val
    raise QuadratureNotConvergedError(
        f"box quadrature did not converge to {tol} (last level change {abs(val - prev):.3e})"
    )


def gauss_convolution(f, x, scale_factor, tol: float = 1e-8):
    """E f(x + scale_factor @ z) with z ~ N(0, I_d), batched over rows of x.

    Tensor Gauss-Hermite with order doubling; `scale_factor` is the (d, d)
    matrix multiplying the standard normal vector (for heat smoothing at
    time t with diffusion matrix a, pass sqrt(t) * cholesky(a)).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = x.shape[1]
    L = np.atleast_2d(np.asarray(scale_factor, dtype=float))
    prev = None
    for order in _GH_ORDERS:
        u, w = _herm_nodes(order)
        grids = np.array(list(product(*([u] * d))))          # (Q^d, d)
        wts = np.array([np.prod(c) for c in product(*([w] * d))]) / np.pi ** (d / 2.0)
        offsets = (np.sqrt(2.0) * grids) @ L.T               # (Q^d, d)
        pts = x[:, None, :] + offsets[None, :, :]            # (N, Q^d, d)
        vals = np.asarray(f(pts.reshape(-1, d)), dtype=float).reshape(x.shape[0], -1)
        out = vals @ wts
        if prev is not None and np.max(np.abs(out - prev)) <= tol:
            return out
        prev = out
    raise QuadratureNotConvergedError(f"Gauss-Hermite convolution did not converge to {tol}")
