"""Collapsed Gauss-Legendre rules on the reference triangle (0,0), (1,0), (0,1)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from numpy.typing import NDArray

DEFAULT_DEGREE = 10


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    barycentric: NDArray[np.float64]  # (q, 3)
    weights: NDArray[np.float64]  # (q,), sum to 1/2
    degree: int

    @property
    def points(self) -> NDArray[np.float64]:
        """Reference coordinates (xi, eta) of the nodes."""
        return self.barycentric[:, 1:]

    @property
    def size(self) -> int:
        return self.weights.size


@lru_cache(maxsize=None)
def triangle_rule(degree: int = DEFAULT_DEGREE) -> QuadratureRule:
    """
    Rule exact for polynomials of total degree <= degree.

    The square [0,1]^2 is collapsed onto the triangle with xi = s(1-t), eta = t.
    The Jacobian (1-t) raises the degree in t by one, hence n >= (degree+2)/2
    Gauss points per direction.
    """
    if degree < 0:
        raise ValueError("degree must be non-negative")
    n = max(1, math.ceil((degree + 2) / 2))
    x, w = leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    s, t = np.meshgrid(x, x, indexing="ij")
    ws, wt = np.meshgrid(w, w, indexing="ij")
    xi = (s * (1.0 - t)).ravel()
    eta = t.ravel()
    weights = (ws * wt * (1.0 - t)).ravel()
    bary = np.column_stack((1.0 - xi - eta, xi, eta))
    for arr in (bary, weights):
        arr.setflags(write=False)
    return QuadratureRule(bary, weights, degree)


def monomial_integral(i: int, j: int) -> float:
    """Exact integral of xi^i eta^j over the reference triangle: i! j! / (i+j+2)!."""
    return math.factorial(i) * math.factorial(j) / math.factorial(i + j + 2)
