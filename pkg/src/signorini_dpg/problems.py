"""Model problems: manufactured solutions with analytic derivatives and loads.

All solutions live on the rectangle (-1, 1) x (0, 1) and are glued at x = 0
from a cubic in x on the left half and a product form on the right half.
The initial meshes have an edge along x = 0, so element quadrature never
straddles the kink.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _cubic(x):
    t = x + 1.0
    return 2 * t ** 3 - 3 * t ** 2 + 1, 6 * t ** 2 - 6 * t, 12 * t - 6


class ManufacturedSolution:
    """Exact solution of  -eps Lap u + u = f  with the Signorini conditions.

    Subclasses provide ``_right(x, y)`` returning (u, u_x, u_y, u_xx, u_yy) for
    x >= 0; the left half is the cubic 2(x+1)^3 - 3(x+1)^2 + 1.
    """

    epsilon: float = 1.0
    name: str = "manufactured"

    def _right(self, x, y):
        raise NotImplementedError

    def _all(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        c, cx, cxx = _cubic(x)
        r = self._right(np.maximum(x, 0.0), y)
        right = x >= 0
        u = np.where(right, r[0], c)
        ux = np.where(right, r[1], cx)
        uy = np.where(right, r[2], 0.0)
        lap = np.where(right, r[3] + r[4], cxx)
        return u, ux, uy, lap

    def u(self, x, y):
        return self._all(x, y)[0]

    def grad(self, x, y):
        _, ux, uy, _ = self._all(x, y)
        return np.stack([ux, uy], axis=-1)

    def laplacian(self, x, y):
        return self._all(x, y)[3]

    def f(self, x, y):
        u, _, _, lap = self._all(x, y)
        return -self.epsilon * lap + u

    def __call__(self, x, y):
        return self.u(x, y)


@dataclass
class SmoothSolution(ManufacturedSolution):
    """-16 x^2 (1 - x) y (1 - y) on the right half (c = 1)."""

    epsilon: float = 1.0
    name: str = "smooth"

    def _right(self, x, y):
        p = x ** 2 * (1 - x)
        px = 2 * x - 3 * x ** 2
        pxx = 2 - 6 * x
        q = y * (1 - y)
        qy = 1 - 2 * y
        return (-16 * p * q, -16 * px * q, -16 * p * qy, -16 * pxx * q, 32 * p)


def _layer_profile(y, s):
    """h(y) = e^{-y/s} + e^{-(1-y)/s} - e^{-1/s} - 1 and two derivatives."""
    a = np.exp(-y / s)
    b = np.exp(-(1 - y) / s)
    h = a + b - np.exp(-1 / s) - 1
    return h, (-a + b) / s, (a + b) / s ** 2


@dataclass
class BoundaryLayerSolution(ManufacturedSolution):
    """-x^2 exp(-2(1-x)/sqrt(eps)) h(y) on the right half.

    With h <= 0 this function is nonnegative inside and vanishes on the
    horizontal edges, so its outward normal derivative there is negative.  It
    therefore does not meet the sign condition on the normal derivative and
    is not the solution of the contact problem with load f.  It is kept
    verbatim as the reference of the robustness study.
    """

    epsilon: float = 1e-2
    name: str = "boundary-layer"

    def _right(self, x, y):
        s = np.sqrt(self.epsilon)
        g = np.exp(-2 * (1 - x) / s)
        gx, gxx = (2 / s) * g, (4 / s ** 2) * g
        h, hy, hyy = _layer_profile(y, s)
        p, px, pxx = x ** 2 * g, 2 * x * g + x ** 2 * gx, 2 * g + 4 * x * gx + x ** 2 * gxx
        return (-p * h, -px * h, -p * hy, -pxx * h, -p * hyy)


@dataclass
class ContactLayerSolution(ManufacturedSolution):
    """x^2 (1 - x) exp(-2(1-x)/sqrt(eps)) h(y) on the right half.

    Same layers as :class:`BoundaryLayerSolution`, but it vanishes on the
    whole right part of the boundary with a nonnegative outward normal
    derivative, so it satisfies the contact conditions exactly.
    """

    epsilon: float = 1e-2
    name: str = "contact-layer"

    def _right(self, x, y):
        s = np.sqrt(self.epsilon)
        g = np.exp(-2 * (1 - x) / s)
        gx, gxx = (2 / s) * g, (4 / s ** 2) * g
        w, wx, wxx = x ** 2 * (1 - x), 2 * x - 3 * x ** 2, 2 - 6 * x
        p = w * g
        px = wx * g + w * gx
        pxx = wxx * g + 2 * wx * gx + w * gxx
        h, hy, hyy = _layer_profile(y, s)
        return (p * h, px * h, p * hy, pxx * h, p * hyy)


def lshape_load(x, y):
    """-1 inside the disc of radius 0.8 around the origin, 1/2 outside."""
    r2 = np.asarray(x, dtype=float) ** 2 + np.asarray(y, dtype=float) ** 2
    return np.where(r2 <= 0.64, -1.0, 0.5)


def solution_for(name: str, epsilon: float = 1.0) -> ManufacturedSolution:
    if name == "smooth":
        return SmoothSolution()
    if name == "boundary-layer":
        return BoundaryLayerSolution(epsilon)
    if name == "contact-layer":
        return ContactLayerSolution(epsilon)
    raise ValueError(f"unknown manufactured solution {name!r}")
