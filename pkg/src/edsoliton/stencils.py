"""Finite-difference and quadrature stencils on integer offsets.

All weights are computed in exact rational arithmetic and converted to
floats once, so high-order stencils do not inherit Vandermonde
ill-conditioning.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache

import numpy as np

#: points used by derivative stencils (8th order centred first derivative)
DIFF_POINTS = 9
#: points used by the local interpolant of each quadrature interval
QUAD_POINTS = 8


def fornberg(z: Fraction, offsets: tuple[int, ...], order: int) -> list[Fraction]:
    """Weights of the derivative of given order at ``z`` from values at ``offsets``.

    Fornberg's recursion, done over the rationals.
    """
    n = len(offsets)
    c = [[Fraction(0)] * (order + 1) for _ in range(n)]
    c1 = Fraction(1)
    c4 = Fraction(offsets[0]) - z
    c[0][0] = Fraction(1)
    for i in range(1, n):
        mn = min(i, order)
        c2 = Fraction(1)
        c5 = c4
        c4 = Fraction(offsets[i]) - z
        for j in range(i):
            c3 = Fraction(offsets[i] - offsets[j])
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2
            for k in range(mn, 0, -1):
                c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3
            c[j][0] = c4 * c[j][0] / c3
        c1 = c2
    return [c[i][order] for i in range(n)]


@lru_cache(maxsize=None)
def derivative_weights(at: int, start: int, npts: int, order: int) -> np.ndarray:
    """Weights for d^order/dt^order at integer ``at`` using nodes start..start+npts-1."""
    offsets = tuple(range(start, start + npts))
    w = fornberg(Fraction(at), offsets, order)
    return np.array([float(v) for v in w])


def _poly_integral_weights(offsets: tuple[int, ...], a: int, b: int) -> list[Fraction]:
    # integral over [a, b] of each Lagrange basis polynomial
    weights = []
    for i, xi in enumerate(offsets):
        # expand prod_{j != i} (t - xj) / (xi - xj) into monomial coefficients
        coeffs = [Fraction(1)]
        denom = Fraction(1)
        for j, xj in enumerate(offsets):
            if j == i:
                continue
            new = [Fraction(0)] * (len(coeffs) + 1)
            for k, ck in enumerate(coeffs):
                new[k + 1] += ck
                new[k] -= ck * xj
            coeffs = new
            denom *= xi - xj
        total = sum(ck * (Fraction(b) ** (k + 1) - Fraction(a) ** (k + 1)) / (k + 1)
                    for k, ck in enumerate(coeffs))
        weights.append(total / denom)
    return weights


@lru_cache(maxsize=None)
def interval_weights(left: int, start: int, npts: int) -> np.ndarray:
    """Weights integrating the interpolant through start..start+npts-1 over [left, left+1]."""
    offsets = tuple(range(start, start + npts))
    return np.array([float(v) for v in _poly_integral_weights(offsets, left, left + 1)])


@lru_cache(maxsize=None)
def extrapolation_weights(npts: int) -> np.ndarray:
    """Weights giving f(0) from f(1), ..., f(npts) (polynomial extrapolation)."""
    return derivative_weights(0, 1, npts, 0)
