"""
Closed-form separable functions with exact derivatives.

Free-data presets and the extended test metrics used by the geometry
oracle are built from sums of separable terms

    c * F0(y^0) * F1(y^1) * F2(theta) * F3(phi),

where every factor is either a polynomial or a sinusoid sin(a*x + b).
Any mixed partial derivative of such a sum is again closed form:
d^k/dx^k sin(a x + b) = a^k sin(a x + b + k pi/2), and polynomial
derivatives are exact coefficient shifts.  This keeps oracle comparisons
free of interpolation error: the only approximation in an oracle test is
the finite-difference side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Poly:
    """Polynomial factor sum_k coeffs[k] x^k."""
    coeffs: tuple

    def eval(self, x: np.ndarray, order: int = 0) -> np.ndarray:
        c = np.array(self.coeffs, dtype=float)
        for _ in range(order):
            if len(c) <= 1:
                return np.zeros_like(np.asarray(x, dtype=float))
            c = c[1:] * np.arange(1, len(c))
        return np.polynomial.polynomial.polyval(np.asarray(x, float), c)


@dataclass(frozen=True)
class Sin:
    """Sinusoid factor sin(a x + b); derivatives stay in the family."""
    a: float = 1.0
    b: float = 0.0

    def eval(self, x: np.ndarray, order: int = 0) -> np.ndarray:
        return (self.a ** order) * np.sin(
            self.a * np.asarray(x, float) + self.b + order * np.pi / 2.0)


def Cos(a: float = 1.0, b: float = 0.0) -> Sin:
    return Sin(a, b + np.pi / 2.0)


ONE = Poly((1.0,))


@dataclass(frozen=True)
class SepTerm:
    """c * f0(y0) * f1(y1) * f2(theta) * f3(phi)."""
    c: float
    f0: object = ONE
    f1: object = ONE
    f2: object = ONE
    f3: object = ONE

    def eval(self, orders, y0, y1, th, ph):
        k0, k1, k2, k3 = orders
        return (self.c
                * self.f0.eval(y0, k0) * self.f1.eval(y1, k1)
                * self.f2.eval(th, k2) * self.f3.eval(ph, k3))


class SepSum:
    """Sum of separable terms; mixed partials via term-wise closed form."""

    def __init__(self, terms):
        self.terms = list(terms)

    def eval(self, orders, y0, y1, th, ph):
        out = 0.0
        for t in self.terms:
            out = out + t.eval(orders, y0, y1, th, ph)
        return out + np.zeros(np.broadcast(y0, y1, th, ph).shape)

    def __add__(self, other):
        return SepSum(self.terms + other.terms)


ZERO_SUM = SepSum([])


class AngularFunction:
    """Smooth function of (theta, phi) with exact derivatives to order 2.

    Wraps a SepSum whose y^0/y^1 factors are trivial.  Used for the
    angular profiles of perturbed free data.
    """

    def __init__(self, terms):
        # terms: list of (c, theta_factor, phi_factor)
        self._sum = SepSum([SepTerm(c, ONE, ONE, f2, f3)
                            for (c, f2, f3) in terms])

    def d(self, k_theta: int, k_phi: int, th, ph):
        return self._sum.eval((0, 0, k_theta, k_phi), 0.0, 0.0, th, ph)
