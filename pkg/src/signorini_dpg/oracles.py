"""Slow, independent reference computations used by the self test and tests.

Nothing here is used by the solver itself.  The local matrices are
recomputed pointwise in physical coordinates with a Duffy-mapped
Gauss-Legendre rule and numpy's polynomial module for the test functions;
global matrices are assembled densely with plain loops.
"""
from __future__ import annotations

import itertools

import numpy as np
from numpy.polynomial import polynomial as npoly

from .forms import Geometry, element_b, element_gram_blocks, element_load
from .spaces import ProblemKind, TestLayout, trial_dof_layout


# -- quadrature ---------------------------------------------------------------

def duffy_rule(corners, n: int = 12):
    """Gauss-Legendre tensor rule mapped onto a physical triangle by a Duffy map."""
    g, gw = np.polynomial.legendre.leggauss(n)
    g = 0.5 * (g + 1)
    gw = 0.5 * gw
    p0, p1, p2 = (np.asarray(c, dtype=float) for c in corners)
    pts, wts = [], []
    e1, e2 = p1 - p0, p2 - p0
    area2 = abs(e1[0] * e2[1] - e1[1] * e2[0])
    for a, wa in zip(g, gw):
        for b, wb in zip(g, gw):
            # (a, b) in the unit square -> (a, (1 - a) b) in the unit triangle
            s, t = a, (1 - a) * b
            pts.append(p0 + s * (p1 - p0) + t * (p2 - p0))
            wts.append(wa * wb * (1 - a) * area2)
    return np.array(pts), np.array(wts)


def edge_rule(a, b, n: int = 12):
    g, gw = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (g + 1)
    a, b = np.asarray(a, float), np.asarray(b, float)
    L = np.linalg.norm(b - a)
    return a[None, :] + s[:, None] * (b - a)[None, :], 0.5 * gw * L, s


# -- test functions in physical coordinates -------------------------------------

class PhysicalMonomials:
    """Shifted monomials of the reference triangle pulled back to an element.

    Each function is stored as a 2D coefficient array in the reference
    variables; derivatives are taken with numpy.polynomial and pushed
    forward with the inverse Jacobian.
    """

    def __init__(self, corners, degree: int):
        p = np.asarray(corners, dtype=float)
        self.p0 = p[0]
        self.J = np.column_stack([p[1] - p[0], p[2] - p[0]])
        self.Jinv = np.linalg.inv(self.J)
        self.coefs = []
        for d in range(degree + 1):
            for j in range(d + 1):
                i = d - j
                # (xi - 1/3)^i (eta - 1/3)^j expanded into a coefficient grid
                cx = npoly.polypow([-1 / 3, 1.0], i)
                cy = npoly.polypow([-1 / 3, 1.0], j)
                self.coefs.append(np.outer(cx, cy))

    def _ref(self, pts):
        xi = (np.asarray(pts, float) - self.p0) @ self.Jinv.T
        return xi[:, 0], xi[:, 1]

    def values(self, pts):
        a, b = self._ref(pts)
        return np.stack([npoly.polyval2d(a, b, c) for c in self.coefs], axis=1)

    def gradients(self, pts):
        a, b = self._ref(pts)
        out = []
        for c in self.coefs:
            da = npoly.polyval2d(a, b, npoly.polyder(c, axis=0)) if c.shape[0] > 1 else 0 * a
            db = npoly.polyval2d(a, b, npoly.polyder(c, axis=1)) if c.shape[1] > 1 else 0 * a
            out.append(np.stack([da, db], axis=1) @ self.Jinv)
        return np.stack(out, axis=1)

    def laplacians(self, pts):
        a, b = self._ref(pts)
        Q = self.Jinv @ self.Jinv.T
        out = []
        for c in self.coefs:
            def d2(k, l):
                cc = c
                for ax in (k, l):
                    if cc.shape[ax] <= 1:
                        return 0 * a
                    cc = npoly.polyder(cc, axis=ax)
                return npoly.polyval2d(a, b, cc)
            out.append(sum(Q[k, l] * d2(k, l) for k in range(2) for l in range(2)))
        return np.stack(out, axis=1)


def local_matrices_oracle(corners, kind: ProblemKind, signs=None, f=None, n: int = 12):
    """Reference (B_T, G_T, l_T) for one element, assembled term by term."""
    corners = np.asarray(corners, dtype=float)
    signs = np.ones(3) if signs is None else np.asarray(signs, float)
    eps = kind.epsilon
    pts, w = duffy_rule(corners, n)
    P2 = PhysicalMonomials(corners, 2)
    v2, g2 = P2.values(pts), P2.gradients(pts)
    n2 = v2.shape[1]
    lay = TestLayout.for_kind(kind)
    sl = lay.slices()
    ntrial = 16 if kind.perturbed else 9
    B = np.zeros((lay.dim, ntrial))
    G = np.zeros((lay.dim, lay.dim))
    L = np.zeros(lay.dim)
    tx = np.arange(sl["tau"].start, sl["tau"].start + n2)
    ty = tx + n2

    def integ(a, b=None):
        return (w[:, None] * a).sum(0) if b is None else np.einsum("q,qa,qb->ab", w, a, b)

    # edges: local edge k joins corner k and corner k+1
    edges = []
    for k in range(3):
        a, b = corners[k], corners[(k + 1) % 3]
        ep, ew, s = edge_rule(a, b, n)
        t = (b - a) / np.linalg.norm(b - a)
        nrm = np.array([t[1], -t[0]])
        hats = np.zeros((s.size, 3))
        hats[:, k] = 1 - s
        hats[:, (k + 1) % 3] = s
        edges.append((ep, ew, nrm, hats))

    def edge_terms(P, dn=False):
        """(trace hat x P-values . n) and (flux x P-values) summed over edges."""
        tr = np.zeros((len(P.coefs), 3)) if dn else np.zeros((len(P.coefs), 3, 2))
        fl = np.zeros((len(P.coefs), 3))
        for k, (ep, ew, nrm, hats) in enumerate(edges):
            vals = P.values(ep)
            if dn:
                gn = P.gradients(ep) @ nrm
                tr += np.einsum("q,qa,qp->ap", ew, gn, hats)
            else:
                tr += np.einsum("q,qa,qp,c->apc", ew, vals, hats, nrm)
            fl[:, k] = signs[k] * (ew[:, None] * vals).sum(0)
        return tr, fl

    if not kind.perturbed:
        v = np.arange(sl["v"].start, sl["v"].stop)
        B[v, 0] = integ(v2)
        for c, tc in enumerate((tx, ty)):
            B[tc, 0] = integ(g2[:, :, c])
            B[v, 1 + c] = integ(g2[:, :, c])
            B[tc, 1 + c] = integ(v2)
        tr, fl = edge_terms(P2)
        for c, tc in enumerate((tx, ty)):
            B[tc, 3:6] = -tr[:, :, c]
        B[v, 6:9] = -fl
        G[np.ix_(v, v)] = integ(v2, v2) + sum(integ(g2[:, :, c], g2[:, :, c]) for c in range(2))
        mass_w = 1.0
    else:
        mu = np.arange(sl["mu"].start, sl["mu"].stop)
        v = np.arange(sl["v"].start, sl["v"].stop)
        P4 = PhysicalMonomials(corners, 4)
        v4, g4, l4 = P4.values(pts), P4.gradients(pts), P4.laplacians(pts)
        B[mu, 3] = integ(v2)
        for c in range(2):
            B[mu, 1 + c] = integ(g2[:, :, c])
        tr2, fl2 = edge_terms(P2)
        B[mu, 10:13] = -fl2
        for c, tc in enumerate((tx, ty)):
            B[tc, 1 + c] = eps ** -0.25 * integ(v2)
            B[tc, 0] = integ(g2[:, :, c])
            B[tc, 4:7] = -tr2[:, :, c]
        for c in range(2):
            B[v, 1 + c] = (eps ** 0.75 + eps ** 0.25) * integ(g4[:, :, c])
        _, fl4 = edge_terms(P4)
        trdn, _ = edge_terms(P4, dn=True)
        B[v, 13:16] = -eps ** 0.75 * fl4
        B[v, 0] = integ(v4)
        B[v, 3] = eps ** 1.25 * integ(l4)
        B[v, 7:10] = -eps ** 0.5 * trdn
        G[np.ix_(mu, mu)] = eps ** -1 * integ(v2, v2) + sum(
            integ(g2[:, :, c], g2[:, :, c]) for c in range(2))
        G[np.ix_(v, v)] = integ(v4, v4) + (eps ** 0.5 + eps) * sum(
            integ(g4[:, :, c], g4[:, :, c]) for c in range(2)) + eps ** 1.5 * integ(l4, l4)
        mass_w = eps ** -0.5
    # tau block: weighted mass plus (div tau, div tau)
    for c, tc in enumerate((tx, ty)):
        G[np.ix_(tc, tc)] += mass_w * integ(v2, v2)
        for d, td in enumerate((tx, ty)):
            G[np.ix_(tc, td)] += integ(g2[:, :, c], g2[:, :, d])
    if f is not None:
        fv = np.asarray(f(pts[:, 0], pts[:, 1]), dtype=float)
        if not kind.perturbed:
            L[v] = integ(fv[:, None] * v2)
        else:
            L[v] = integ(fv[:, None] * (v4 - eps ** 0.5 * l4))
    return B, G, L


# -- global dense oracles ---------------------------------------------------------

def dense_monolithic(mesh, kind: ProblemKind, f=None):
    """beta B^T G^{-1} B and beta B^T G^{-1} L from globally assembled dense B, G."""
    skel = mesh.skeleton()
    layout = trial_dof_layout(mesh, kind, skel)
    dofs = layout.element_dofs(mesh, skel)
    geo = Geometry.from_corners(mesh.corners(), skel.signs)
    Bl = element_b(geo, kind)
    blocks = element_gram_blocks(geo, kind)
    Ll = element_load(geo, kind, f) if f is not None else np.zeros(Bl.shape[:2])
    lay = TestLayout.for_kind(kind)
    m = lay.dim
    nT = mesh.n_triangles
    Bg = np.zeros((nT * m, layout.n_dofs))
    Gg = np.zeros((nT * m, nT * m))
    Lg = np.zeros(nT * m)
    for t in range(nT):
        rows = slice(t * m, (t + 1) * m)
        for j, gdof in enumerate(dofs[t]):
            Bg[rows, gdof] += Bl[t][:, j]
        for name, s in lay.slices().items():
            Gg[t * m + s.start:t * m + s.stop, t * m + s.start:t * m + s.stop] = blocks[name][t]
        Lg[rows] = Ll[t]
    S = kind.beta * Bg.T @ np.linalg.solve(Gg, Bg)
    F = kind.beta * Bg.T @ np.linalg.solve(Gg, Lg)
    return S, F, Bg, Gg, Lg, layout


def residual_oracle(Bg, Gg, Lg, x, n_elements, beta):
    """Per-element beta r^T G^{-1} r from the global dense arrays."""
    r = Lg - Bg @ x
    m = r.size // n_elements
    out = np.zeros(n_elements)
    for t in range(n_elements):
        s = slice(t * m, (t + 1) * m)
        out[t] = beta * r[s] @ np.linalg.solve(Gg[s, s], r[s])
    return out


def lcp_enumeration(A, rhs, constrained, tol: float = 1e-10):
    """All KKT points of the cone problem by trying every active subset."""
    A = np.asarray(A, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    C = list(constrained)
    n = rhs.size
    scale = max(1.0, np.abs(rhs).max())
    sols = []
    for k in range(len(C) + 1):
        for act in itertools.combinations(C, k):
            free = [i for i in range(n) if i not in act]
            x = np.zeros(n)
            x[free] = np.linalg.solve(A[np.ix_(free, free)], rhs[free])
            r = A @ x - rhs
            inactive = [i for i in C if i not in act]
            if all(x[i] >= -tol * scale for i in inactive) and all(r[i] >= -tol * scale for i in act):
                sols.append(x)
    return sols


def projected_gradient(A, rhs, constrained, iters: int = 200_000, tol: float = 1e-14):
    """Minimize 1/2 x^T A x - rhs^T x over x_C >= 0 for symmetric positive definite A."""
    A = np.asarray(A, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    C = np.asarray(list(constrained), dtype=int)
    step = 1.0 / np.linalg.eigvalsh(A).max()
    x = np.zeros(rhs.size)
    for _ in range(iters):
        xn = x - step * (A @ x - rhs)
        xn[C] = np.maximum(xn[C], 0.0)
        if np.abs(xn - x).max() < tol:
            return xn
        x = xn
    return x
