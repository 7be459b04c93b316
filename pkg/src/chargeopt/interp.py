"""Monotone cubic (PCHIP) tables with a numba-friendly evaluation path.

Property curves (open-circuit potentials, electrolyte transport properties)
are shipped as sample tables and interpolated with shape-preserving cubics.
The piecewise-polynomial coefficients are extracted once so the simulator
kernel can evaluate them without calling back into scipy.
"""
from __future__ import annotations

import numpy as np
from numba import njit
from scipy.interpolate import PchipInterpolator

from .errors import ParameterError


class CubicTable:
    """Shape-preserving cubic through (x, y) samples, clamped outside [x0, xn].

    The original samples are kept for serialization and validation; for
    evaluation the interpolant is re-laid onto a dense uniform knot grid so
    the simulator kernel can locate segments in O(1).
    """

    def __init__(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise ParameterError("table needs two equal-length 1-D sample arrays")
        if np.any(np.diff(x) <= 0):
            raise ParameterError("table abscissae must be strictly increasing")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ParameterError("table samples must be finite")
        self.x = x
        self.y = y
        p = PchipInterpolator(x, y, extrapolate=False)
        spacing = np.diff(x)
        if np.allclose(spacing, spacing[0], rtol=1e-9, atol=0.0):
            grid = x
        else:
            n = max(4 * x.size, 128)
            grid = np.linspace(x[0], x[-1], n)
            p = PchipInterpolator(grid, p(grid), extrapolate=False)
        # PPoly layout: value = sum_m coef[m, i] * (q - x[i])^(3 - m)
        self.breaks = p.x.copy()
        self.coefs = np.ascontiguousarray(p.c)

    def __call__(self, q):
        q = np.asarray(q, dtype=np.float64)
        scalar = q.ndim == 0
        out = pchip_eval_many(self.breaks, self.coefs, np.atleast_1d(q))
        return float(out[0]) if scalar else out

    def derivative(self, q):
        q = np.clip(np.asarray(q, dtype=np.float64), self.x[0], self.x[-1])
        return PchipInterpolator(self.x, self.y)(q, nu=1)


@njit(cache=True, inline="always")
def pchip_eval(breaks, coefs, q):  # pragma: no cover - exercised via wrappers
    """Evaluate one clamped piecewise cubic on uniform knots (kernel path)."""
    lo = breaks[0]
    hi = breaks[-1]
    if q < lo:
        q = lo
    elif q > hi:
        q = hi
    m = breaks.shape[0] - 1
    i = int((q - lo) * m / (hi - lo))
    if i > m - 1:
        i = m - 1
    # floating roundoff can land the index one segment off; realign
    if q < breaks[i]:
        i -= 1
    elif i < m - 1 and q >= breaks[i + 1]:
        i += 1
    dx = q - breaks[i]
    return ((coefs[0, i] * dx + coefs[1, i]) * dx + coefs[2, i]) * dx + coefs[3, i]


@njit(cache=True)
def pchip_eval_many(breaks, coefs, qs):
    out = np.empty(qs.shape[0])
    for k in range(qs.shape[0]):
        out[k] = pchip_eval(breaks, coefs, qs[k])
    return out
