"""Quadrature on the reference triangle {(x, y): x, y >= 0, x + y <= 1}."""
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@lru_cache(maxsize=None)
def triangle_rule(n: int):
    """Collapsed (Stroud conical) product rule with n x n points.

    Exact for polynomials of total degree 2n - 1.  Weights sum to 1/2.
    """
    s, ws = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (s + 1.0)
    ws = 0.5 * ws
    z, wz = roots_jacobi(n, 1.0, 0.0)
    t = 0.5 * (z + 1.0)
    wt = 0.25 * wz
    S, T = np.meshgrid(s, t, indexing="ij")
    points = np.stack([(S * (1.0 - T)).ravel(), T.ravel()], axis=1)
    weights = np.outer(ws, wt).ravel()
    points.setflags(write=False)
    weights.setflags(write=False)
    return points, weights


def rule_for_degree(degree: int):
    return triangle_rule(max(1, (degree + 2) // 2))


@lru_cache(maxsize=None)
def line_rule(n: int):
    """Gauss-Legendre on [0, 1]."""
    s, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (s + 1.0)
    w = 0.5 * w
    s.setflags(write=False)
    w.setflags(write=False)
    return s, w
