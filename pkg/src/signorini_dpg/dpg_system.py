"""Global DPG operator, boundary coupling and linear solves."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .forms import Geometry, element_b, element_gram_blocks, element_load, field_local_dim
from .mesh import Skeleton, Triangulation
from .spaces import DofLayout, ProblemKind, TestLayout, trial_dof_layout

CHUNK = 4096


class AssemblyError(RuntimeError):
    pass


class SingularSystemError(RuntimeError):
    pass


@dataclass
class DpgSystem:
    """S = beta B^T G^{-1} B, coupling N and load F = beta B^T G^{-1} L.

    ``N[i, j] = <flux basis j, trace basis i>_Gamma`` (times eps^{1/4} when
    perturbed), so rows are boundary trace DOFs and columns boundary flux DOFs.
    When ``condensed`` is set, all matrices act on skeleton DOFs only and
    ``recover`` maps a skeleton vector back to the full trial vector.
    """

    kind: ProblemKind
    layout: DofLayout
    S: sp.csr_matrix
    N: sp.csr_matrix
    rhs: np.ndarray
    condensed: bool = False
    _recover_R: np.ndarray | None = field(default=None, repr=False)
    _recover_r: np.ndarray | None = field(default=None, repr=False)
    _field_dofs: np.ndarray | None = field(default=None, repr=False)
    _skeleton_local_dofs: np.ndarray | None = field(default=None, repr=False)

    @property
    def offset(self) -> int:
        return self.layout.n_field if self.condensed else 0

    def composite(self, star: str | None = None) -> sp.csr_matrix:
        star = self.kind.star if star is None else star
        if star == "0":
            A = self.S + self.N
        elif star == "n":
            A = self.S + self.N.T
        elif star == "s":
            A = self.S + 0.5 * (self.N + self.N.T)
        else:
            raise ValueError(f"unknown variant {star!r}")
        return sp.csr_matrix(A)

    def constrained(self, star: str | None = None) -> np.ndarray:
        """System indices carrying the sign constraint x_i >= 0."""
        star = self.kind.star if star is None else star
        parts = []
        if star in ("0", "s"):
            parts.append(self.layout.constrained_trace_dofs)
        if star in ("n", "s"):
            parts.append(self.layout.constrained_flux_dofs)
        return np.sort(np.concatenate(parts)) - self.offset

    def recover(self, x) -> np.ndarray:
        """Full trial vector from a system solution."""
        x = np.asarray(x, dtype=float)
        if not self.condensed:
            return x
        full = np.zeros(self.layout.n_dofs)
        full[self.offset:] = x
        skel_local = self._skeleton_local_dofs
        xs = x[skel_local]
        xf = self._recover_r - np.einsum("tij,tj->ti", self._recover_R, xs)
        full[self._field_dofs] = xf
        return full


def coupling_matrix(mesh: Triangulation, skel: Skeleton, layout: DofLayout,
                    kind: ProblemKind) -> sp.csr_matrix:
    be = skel.boundary_edges
    half = 0.5 * skel.lengths[be] * kind.boundary_scale
    flux = layout.offsets["sighat_a"] + be
    rows, cols, vals = [], [], []
    for k in range(2):
        rows.append(layout.offsets["uhat_a"] + skel.edges[be, k])
        cols.append(flux)
        vals.append(half)
    n = layout.n_dofs
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n))


def _local_systems(geo: Geometry, kind: ProblemKind, f):
    """beta B^T G^{-1} B and beta B^T G^{-1} l per element."""
    B = element_b(geo, kind)
    blocks = element_gram_blocks(geo, kind)
    load = element_load(geo, kind, f) if f is not None else None
    S = np.zeros((geo.n, B.shape[2], B.shape[2]))
    F = np.zeros((geo.n, B.shape[2]))
    for name, sl in TestLayout.for_kind(kind).slices().items():
        try:
            L = np.linalg.cholesky(blocks[name])
        except np.linalg.LinAlgError as exc:
            raise AssemblyError(f"local Gram block {name!r} is not positive definite") from exc
        Y = np.linalg.solve(L, B[:, sl, :])
        S += np.einsum("tki,tkj->tij", Y, Y)
        if load is not None:
            y = np.linalg.solve(L, load[:, sl, None])[..., 0]
            F += np.einsum("tki,tk->ti", Y, y)
    return kind.beta * S, kind.beta * F


def assemble(mesh: Triangulation, layout: DofLayout | None, kind: ProblemKind, f=None,
             skel: Skeleton | None = None, condense: bool = False) -> DpgSystem:
    """Assemble the condensed DPG system.

    With ``condense=True`` the element-local field unknowns are eliminated by
    static condensation; they carry no constraints, so the variational
    inequality on the remaining skeleton unknowns is equivalent.
    """
    skel = skel if skel is not None else mesh.skeleton()
    layout = layout if layout is not None else trial_dof_layout(mesh, kind, skel)
    dofs = layout.element_dofs(mesh, skel)
    corners = mesh.corners()
    nT, nloc = dofs.shape
    nf = field_local_dim(kind)
    rows, cols, vals = [], [], []
    n = layout.n_dofs
    rhs = np.zeros(n)
    recover_R = np.zeros((nT, nf, nloc - nf)) if condense else None
    recover_r = np.zeros((nT, nf)) if condense else None
    for start in range(0, nT, CHUNK):
        c = slice(start, min(start + CHUNK, nT))
        geo = Geometry.from_corners(corners[c], skel.signs[c])
        S_T, F_T = _local_systems(geo, kind, f)
        d = dofs[c]
        if condense:
            Aff = S_T[:, :nf, :nf]
            Afs = S_T[:, :nf, nf:]
            L = np.linalg.cholesky(Aff)
            Z = np.linalg.solve(L, Afs)
            z = np.linalg.solve(L, F_T[:, :nf, None])[..., 0]
            recover_R[c] = np.linalg.solve(np.transpose(L, (0, 2, 1)), Z)
            recover_r[c] = np.linalg.solve(np.transpose(L, (0, 2, 1)), z[..., None])[..., 0]
            S_T = S_T[:, nf:, nf:] - np.einsum("tki,tkj->tij", Z, Z)
            F_T = F_T[:, nf:] - np.einsum("tki,tk->ti", Z, z)
            d = d[:, nf:] - layout.n_field
        m = d.shape[1]
        rows.append(np.repeat(d, m, axis=1).ravel())
        cols.append(np.tile(d, (1, m)).ravel())
        vals.append(S_T.ravel())
        np.add.at(rhs, d.ravel() + (layout.n_field if condense else 0), F_T.ravel())
    size = n - layout.n_field if condense else n
    S = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(size, size))
    N = coupling_matrix(mesh, skel, layout, kind)
    system = DpgSystem(kind, layout, S, N, rhs)
    if condense:
        keep = slice(layout.n_field, n)
        system.N = sp.csr_matrix(N[keep, keep])
        system.rhs = rhs[keep]
        system.condensed = True
        system._recover_R = recover_R
        system._recover_r = recover_r
        system._field_dofs = dofs[:, :nf]
        system._skeleton_local_dofs = dofs[:, nf:] - layout.n_field
    return system


def solve_linear(A, rhs, fixed_zero=()) -> np.ndarray:
    """Solve A x = rhs on the free indices with x = 0 on ``fixed_zero``."""
    A = sp.csc_matrix(A)
    rhs = np.asarray(rhs, dtype=float)
    n = rhs.size
    fixed = np.zeros(n, dtype=bool)
    fixed[np.asarray(list(fixed_zero), dtype=np.int64)] = True
    free = np.flatnonzero(~fixed)
    x = np.zeros(n)
    if free.size == 0:
        return x
    Aff = A[free][:, free].tocsc()
    try:
        lu = spla.splu(Aff, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SingularSystemError(
            f"reduced system of size {free.size} is singular ({exc})") from exc
    xf = lu.solve(rhs[free])
    if not np.all(np.isfinite(xf)):
        raise SingularSystemError("non-finite solution of the reduced system")
    # one step of iterative refinement
    r = rhs[free] - Aff @ xf
    xf += lu.solve(r)
    x[free] = xf
    res = np.linalg.norm(rhs[free] - Aff @ xf)
    scale = max(np.linalg.norm(rhs), np.finfo(float).tiny)
    if res > 1e-6 * scale + 1e-300:
        raise SingularSystemError(f"reduced system is numerically singular (residual {res:.3e})")
    return x


def residual_dual_norm(mesh: Triangulation, kind: ProblemKind, x, f,
                       layout: DofLayout | None = None,
                       skel: Skeleton | None = None) -> np.ndarray:
    """beta * r_T^T G_T^{-1} r_T with r_T = l_T - B_T x_T, per element."""
    skel = skel if skel is not None else mesh.skeleton()
    layout = layout if layout is not None else trial_dof_layout(mesh, kind, skel)
    x = np.asarray(x, dtype=float)
    dofs = layout.element_dofs(mesh, skel)
    corners = mesh.corners()
    out = np.zeros(mesh.n_triangles)
    for start in range(0, mesh.n_triangles, CHUNK):
        c = slice(start, min(start + CHUNK, mesh.n_triangles))
        geo = Geometry.from_corners(corners[c], skel.signs[c])
        B = element_b(geo, kind)
        r = -np.einsum("tij,tj->ti", B, x[dofs[c]])
        if f is not None:
            r += element_load(geo, kind, f)
        blocks = element_gram_blocks(geo, kind)
        for name, sl in TestLayout.for_kind(kind).slices().items():
            L = np.linalg.cholesky(blocks[name])
            y = np.linalg.solve(L, r[:, sl, None])[..., 0]
            out[c] += np.einsum("ti,ti->t", y, y)
    return kind.beta * out
