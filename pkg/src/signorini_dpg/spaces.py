"""Trial DOF numbering, broken polynomial test bases and trace interpolants."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .mesh import Skeleton, Triangulation

VARIANTS = ("0", "n", "s")


@dataclass(frozen=True)
class ProblemKind:
    """Which formulation is discretized.

    ``star`` selects the boundary coupling (trace cone ``0``, flux cone ``n``
    or both ``s``).  ``perturbed`` switches to the reaction-dominated
    formulation with diffusion ``epsilon``.
    """

    star: str = "s"
    perturbed: bool = False
    epsilon: float = 1.0
    beta: float | None = None

    def __post_init__(self):
        if self.star not in VARIANTS:
            raise ValueError(f"unknown variant {self.star!r}")
        if self.beta is None:
            object.__setattr__(self, "beta", 3.0 if self.perturbed else 2.0)
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in (0, 1]")
        if not self.perturbed and self.epsilon != 1.0:
            raise ValueError("the unperturbed problem has epsilon = 1")
        if self.beta < (3.0 if self.perturbed else 2.0):
            raise ValueError("beta below the coercivity threshold (2, or 3 when perturbed)")

    @classmethod
    def unperturbed(cls, star: str = "s", beta: float = 2.0) -> "ProblemKind":
        return cls(star=star, perturbed=False, epsilon=1.0, beta=beta)

    @classmethod
    def singularly_perturbed(cls, epsilon: float, beta: float = 3.0) -> "ProblemKind":
        return cls(star="s", perturbed=True, epsilon=epsilon, beta=beta)

    @property
    def boundary_scale(self) -> float:
        """Weight of the boundary pairing <flux, trace>_Gamma."""
        return self.epsilon ** 0.25 if self.perturbed else 1.0


# --------------------------------------------------------------------------
# polynomial test bases
# --------------------------------------------------------------------------

class PolynomialBasis:
    """Complete P_k on the reference triangle.

    Basis functions are monomials in coordinates shifted to the reference
    centroid, ``(x - 1/3)^i (y - 1/3)^j`` with ``i + j <= k``.  The first
    function is the constant 1.
    """

    def __init__(self, degree: int):
        self.degree = degree
        self.exponents = [(d - j, j) for d in range(degree + 1) for j in range(d + 1)]

    @property
    def dim(self) -> int:
        return len(self.exponents)

    @staticmethod
    def _pow(base, e):
        if e < 0:
            return np.zeros_like(base)
        return base ** e

    def eval(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float) - 1.0 / 3.0
        return np.stack([p[:, 0] ** i * p[:, 1] ** j for i, j in self.exponents], axis=1)

    def grad(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float) - 1.0 / 3.0
        x, y = p[:, 0], p[:, 1]
        cols = []
        for i, j in self.exponents:
            gx = i * self._pow(x, i - 1) * y ** j
            gy = j * x ** i * self._pow(y, j - 1)
            cols.append(np.stack([gx, gy], axis=1))
        return np.stack(cols, axis=1)

    def hess(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float) - 1.0 / 3.0
        x, y = p[:, 0], p[:, 1]
        cols = []
        for i, j in self.exponents:
            hxx = i * (i - 1) * self._pow(x, i - 2) * y ** j
            hxy = i * j * self._pow(x, i - 1) * self._pow(y, j - 1)
            hyy = j * (j - 1) * x ** i * self._pow(y, j - 2)
            cols.append(np.stack([np.stack([hxx, hxy], 1), np.stack([hxy, hyy], 1)], 1))
        return np.stack(cols, axis=1)

    def lattice(self) -> np.ndarray:
        """Principal lattice points, unisolvent for P_k."""
        k = self.degree
        return np.array([(i / k, j / k) for i in range(k + 1) for j in range(k + 1 - i)])

    def interpolate(self, func) -> np.ndarray:
        """Coefficients of the P_k interpolant of ``func`` at lattice points."""
        pts = self.lattice()
        return np.linalg.solve(self.eval(pts), func(pts[:, 0], pts[:, 1]))


@lru_cache(maxsize=None)
def basis(degree: int) -> PolynomialBasis:
    return PolynomialBasis(degree)


@dataclass(frozen=True)
class TestLayout:
    """Per-element enriched test space: blocks of (name, degree, components)."""

    blocks: tuple

    @classmethod
    def for_kind(cls, kind: ProblemKind) -> "TestLayout":
        if kind.perturbed:
            return cls((("mu", 2, 1), ("tau", 2, 2), ("v", 4, 1)))
        return cls((("v", 2, 1), ("tau", 2, 2)))

    @property
    def dim(self) -> int:
        return sum(basis(d).dim * c for _, d, c in self.blocks)

    def slices(self) -> dict:
        out, start = {}, 0
        for name, d, c in self.blocks:
            n = basis(d).dim * c
            out[name] = slice(start, start + n)
            start += n
        return out


# --------------------------------------------------------------------------
# trial DOFs
# --------------------------------------------------------------------------

@dataclass
class DofLayout:
    """Global numbering of the lowest-order trial unknowns.

    Field unknowns come first (u per triangle, sigma as two per triangle,
    rho per triangle when perturbed), then skeleton unknowns (trace per
    vertex, second trace per interior vertex, flux per edge, second flux per
    edge).  Boundary vertices carry a single trace DOF used by both traces.
    """

    perturbed: bool
    n_triangles: int
    n_vertices: int
    n_edges: int
    offsets: dict
    counts: dict
    uhat_b_index: np.ndarray | None
    constrained_trace_dofs: np.ndarray
    constrained_flux_dofs: np.ndarray

    @property
    def n_dofs(self) -> int:
        return sum(self.counts.values())

    @property
    def n_field(self) -> int:
        return sum(self.counts[k] for k in ("u", "sigma", "rho"))

    def block(self, name: str) -> slice:
        return slice(self.offsets[name], self.offsets[name] + self.counts[name])

    def u(self, x):
        return x[self.block("u")]

    def sigma(self, x):
        return x[self.block("sigma")].reshape(-1, 2)

    def rho(self, x):
        return x[self.block("rho")]

    def uhat_a(self, x):
        return x[self.block("uhat_a")]

    def uhat_b(self, x):
        """Second trace at every vertex (boundary values come from uhat_a)."""
        return x[self.uhat_b_index]

    def sighat_a(self, x):
        return x[self.block("sighat_a")]

    def sighat_b(self, x):
        return x[self.block("sighat_b")]

    def element_dofs(self, mesh: Triangulation, skel: Skeleton) -> np.ndarray:
        """Local-to-global map, rows in the local trial ordering.

        Unperturbed: (u, sx, sy, uhat x3, sighat x3).
        Perturbed: (u, sx, sy, rho, uhat_a x3, uhat_b x3, sighat_a x3, sighat_b x3).
        """
        t = np.arange(self.n_triangles)
        o = self.offsets
        cols = [o["u"] + t, o["sigma"] + 2 * t, o["sigma"] + 2 * t + 1]
        if self.perturbed:
            cols.append(o["rho"] + t)
        cols += [o["uhat_a"] + mesh.triangles[:, k] for k in range(3)]
        if self.perturbed:
            cols += [self.uhat_b_index[mesh.triangles[:, k]] for k in range(3)]
        cols += [o["sighat_a"] + skel.element_edges[:, k] for k in range(3)]
        if self.perturbed:
            cols += [o["sighat_b"] + skel.element_edges[:, k] for k in range(3)]
        return np.stack(cols, axis=1)


def trial_dof_layout(mesh: Triangulation, kind: ProblemKind,
                     skel: Skeleton | None = None) -> DofLayout:
    skel = skel if skel is not None else mesh.skeleton()
    nT, nV, nE = mesh.n_triangles, mesh.n_vertices, skel.n_edges
    sp = kind.perturbed
    interior = np.flatnonzero(~mesh.boundary_vertex)
    names = ["u", "sigma", "rho", "uhat_a", "uhat_b", "sighat_a", "sighat_b"]
    counts = {"u": nT, "sigma": 2 * nT, "rho": nT if sp else 0, "uhat_a": nV,
              "uhat_b": interior.size if sp else 0, "sighat_a": nE,
              "sighat_b": nE if sp else 0}
    offsets, start = {}, 0
    for name in names:
        offsets[name] = start
        start += counts[name]
    uhat_b_index = None
    if sp:
        uhat_b_index = offsets["uhat_a"] + np.arange(nV)
        uhat_b_index[interior] = offsets["uhat_b"] + np.arange(interior.size)
    trace = offsets["uhat_a"] + np.flatnonzero(mesh.boundary_vertex)
    flux = offsets["sighat_a"] + skel.boundary_edges
    return DofLayout(sp, nT, nV, nE, offsets, counts, uhat_b_index, trace, flux)


def eval_trial_traces(layout: DofLayout, skel: Skeleton, x, edge: int):
    """Trace values at the edge endpoints and the constant outward flux.

    Only defined for boundary edges, where the stored normal is outward.
    """
    if not skel.boundary[edge]:
        raise ValueError(f"edge {edge} is not a boundary edge")
    a, b = skel.edges[edge]
    uh = layout.uhat_a(x)
    return (uh[a], uh[b]), layout.sighat_a(x)[edge]


# --------------------------------------------------------------------------
# interpolants used in postprocessing
# --------------------------------------------------------------------------

@dataclass
class P1Function:
    """Continuous piecewise-linear function given by vertex values."""

    mesh: Triangulation
    values: np.ndarray

    def gradients(self) -> np.ndarray:
        p = self.mesh.corners()
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        v = self.values[self.mesh.triangles]
        dv = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=1)
        # grad = J^{-T} dv
        return np.linalg.solve(np.transpose(J, (0, 2, 1)), dv[..., None])[..., 0]

    def eval_barycentric(self, bary) -> np.ndarray:
        """Values at points given by barycentric coordinates, shape (nT, nq)."""
        return bary @ self.values[self.mesh.triangles].T if bary.ndim == 1 \
            else np.einsum("qk,tk->tq", bary, self.values[self.mesh.triangles])

    def __call__(self, element: int, point) -> float:
        p = self.mesh.corners()[element]
        J = np.stack([p[1] - p[0], p[2] - p[0]], axis=1)
        xi = np.linalg.solve(J, np.asarray(point, dtype=float) - p[0])
        lam = np.array([1 - xi.sum(), xi[0], xi[1]])
        return float(lam @ self.values[self.mesh.triangles[element]])


def nodal_interpolant_s1(mesh: Triangulation, uhat) -> P1Function:
    return P1Function(mesh, np.asarray(uhat, dtype=float).copy())


@dataclass
class RT0Field:
    """Lowest-order Raviart-Thomas field q(x) = a_T + b_T x on each element."""

    mesh: Triangulation
    a: np.ndarray
    b: np.ndarray

    def divergence(self) -> np.ndarray:
        return 2.0 * self.b

    def __call__(self, element: int, point) -> np.ndarray:
        return self.a[element] + self.b[element] * np.asarray(point, dtype=float)

    def eval(self, points) -> np.ndarray:
        """Values at physical points of shape (nT, nq, 2)."""
        return self.a[:, None, :] + self.b[:, None, None] * points


def rt0_interpolant(mesh: Triangulation, skel: Skeleton, sighat) -> RT0Field:
    """RT0 field whose flux through edge E (along n_E) is sighat[E] * |E|."""
    sighat = np.asarray(sighat, dtype=float)
    p = mesh.corners()
    area = mesh.areas()
    a = np.zeros((mesh.n_triangles, 2))
    b = np.zeros(mesh.n_triangles)
    for k in range(3):
        e = skel.element_edges[:, k]
        opposite = p[:, (k + 2) % 3]
        c = skel.signs[:, k] * sighat[e] * skel.lengths[e] / (2.0 * area)
        b += c
        a -= c[:, None] * opposite
    return RT0Field(mesh, a, b)
