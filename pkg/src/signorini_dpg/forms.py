"""Element matrices of the ultra-weak forms.

All integrals are computed once on the reference triangle and mapped to each
element through its affine Jacobian, so a whole batch of elements is handled
with a few tensor contractions.

Local trial ordering:
    unperturbed  (u, sx, sy, uhat x3 vertices, sighat x3 edges)
    perturbed    (u, sx, sy, rho, uhat_a x3, uhat_b x3, sighat_a x3, sighat_b x3)
Test ordering follows :class:`TestLayout`: (v, tau_x, tau_y) unperturbed and
(mu, tau_x, tau_y, v) perturbed, each scalar block in the monomial basis of
:class:`PolynomialBasis`.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .quadrature import line_rule, triangle_rule
from .spaces import ProblemKind, TestLayout, basis

# volume rule for polynomial integrands (exact to degree 9) and for loads
FORM_RULE = 5
LOAD_RULE = 8


@dataclass(frozen=True)
class RefTensors:
    mass: np.ndarray       # (a, b)
    mean: np.ndarray       # (a,)          int phi
    dmean: np.ndarray      # (a, j)        int d_j phi
    stiff: np.ndarray      # (a, b, i, j)  int d_i phi_a d_j phi_b
    hmean: np.ndarray      # (a, k, l)     int H_kl phi
    hh: np.ndarray         # (a, b, k, l, m, n)
    edge_lam: np.ndarray   # (k, p, a)     int_0^1 lam_p phi_a on edge k
    edge_mean: np.ndarray  # (k, a)
    edge_lam_grad: np.ndarray  # (k, p, a, j)


_REF = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


@lru_cache(maxsize=None)
def ref_tensors(degree: int) -> RefTensors:
    P = basis(degree)
    pts, w = triangle_rule(FORM_RULE)
    phi = P.eval(pts)
    g = P.grad(pts)
    H = P.hess(pts)
    mass = np.einsum("q,qa,qb->ab", w, phi, phi)
    mean = w @ phi
    dmean = np.einsum("q,qaj->aj", w, g)
    stiff = np.einsum("q,qai,qbj->abij", w, g, g)
    hmean = np.einsum("q,qakl->akl", w, H)
    hh = np.einsum("q,qakl,qbmn->abklmn", w, H, H)
    s, ws = line_rule(6)
    edge_lam = np.zeros((3, 3, P.dim))
    edge_mean = np.zeros((3, P.dim))
    edge_lam_grad = np.zeros((3, 3, P.dim, 2))
    for k in range(3):
        a, b = _REF[k], _REF[(k + 1) % 3]
        ep = a[None, :] + s[:, None] * (b - a)[None, :]
        lam = np.zeros((s.size, 3))
        lam[:, k] = 1.0 - s
        lam[:, (k + 1) % 3] = s
        ph = P.eval(ep)
        gr = P.grad(ep)
        edge_lam[k] = np.einsum("q,qp,qa->pa", ws, lam, ph)
        edge_mean[k] = ws @ ph
        edge_lam_grad[k] = np.einsum("q,qp,qaj->paj", ws, lam, gr)
    return RefTensors(mass, mean, dmean, stiff, hmean, hh, edge_lam, edge_mean,
                      edge_lam_grad)


@dataclass
class Geometry:
    """Affine element data for a batch of triangles."""

    corners: np.ndarray   # (nT, 3, 2)
    J: np.ndarray         # (nT, 2, 2), columns p1 - p0 and p2 - p0
    det: np.ndarray       # (nT,)
    Jinv: np.ndarray      # (nT, 2, 2)
    lengths: np.ndarray   # (nT, 3) local edge lengths
    normals: np.ndarray   # (nT, 3, 2) outward unit normals
    signs: np.ndarray     # (nT, 3) n_T . n_E

    @classmethod
    def from_corners(cls, corners, signs=None) -> "Geometry":
        p = np.asarray(corners, dtype=float)
        if p.ndim == 2:
            p = p[None]
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        if np.any(det <= 0):
            raise ValueError("degenerate or clockwise triangle (area <= 0)")
        Jinv = np.empty_like(J)
        Jinv[:, 0, 0] = J[:, 1, 1]
        Jinv[:, 1, 1] = J[:, 0, 0]
        Jinv[:, 0, 1] = -J[:, 0, 1]
        Jinv[:, 1, 0] = -J[:, 1, 0]
        Jinv /= det[:, None, None]
        d = p[:, [1, 2, 0]] - p
        lengths = np.linalg.norm(d, axis=2)
        normals = np.stack([d[..., 1], -d[..., 0]], axis=2) / lengths[..., None]
        if signs is None:
            signs = np.ones((p.shape[0], 3))
        return cls(p, J, det, Jinv, lengths, normals, np.asarray(signs, dtype=float))

    @property
    def n(self) -> int:
        return self.det.shape[0]

    def map(self, ref_points) -> np.ndarray:
        """Physical coordinates of reference points, shape (nT, nq, 2)."""
        return self.corners[:, None, 0, :] + np.einsum("tij,qj->tqi", self.J, ref_points)


class _Phys:
    """Physical-element integrals of one scalar basis, vectorized over elements."""

    def __init__(self, geo: Geometry, degree: int):
        self.geo = geo
        self.R = ref_tensors(degree)
        self.nb = basis(degree).dim

    def mass(self):
        return self.geo.det[:, None, None] * self.R.mass

    def mean(self):
        return self.geo.det[:, None] * self.R.mean

    def dmean(self):
        # int d_c phi_a = det * sum_j Jinv[j, c] dmean[a, j]
        return self.geo.det[:, None, None] * np.einsum("tjc,aj->tac", self.geo.Jinv, self.R.dmean)

    def stiff(self):
        # (t, a, b, c, d) = int d_c phi_a d_d phi_b
        return self.geo.det[:, None, None, None, None] * np.einsum(
            "tic,tjd,abij->tabcd", self.geo.Jinv, self.geo.Jinv, self.R.stiff)

    def laplace_factor(self):
        Ji = self.geo.Jinv
        return np.einsum("tkc,tlc->tkl", Ji, Ji)

    def lap_mean(self):
        return self.geo.det[:, None] * np.einsum("tkl,akl->ta", self.laplace_factor(), self.R.hmean)

    def lap_lap(self):
        Q = self.laplace_factor()
        return self.geo.det[:, None, None] * np.einsum(
            "tkl,tmn,abklmn->tab", Q, Q, self.R.hh)

    def edge_trace_normal(self):
        """(t, c, a, p) = sum_k int_{e_k} lam_p phi_a n_c."""
        g = self.geo
        return np.einsum("tk,tkc,kpa->tcap", g.lengths, g.normals, self.R.edge_lam)

    def edge_mean(self):
        """(t, a, k) = int_{e_k} phi_a."""
        return np.einsum("tk,ka->tak", self.geo.lengths, self.R.edge_mean)

    def edge_trace_dn(self):
        """(t, a, p) = sum_k int_{e_k} lam_p grad(phi_a) . n."""
        g = self.geo
        return np.einsum("tk,tkc,tjc,kpaj->tap", g.lengths, g.normals, g.Jinv,
                         self.R.edge_lam_grad)


def _scale(kind: ProblemKind):
    e = kind.epsilon
    return {p: e ** p for p in (-1.0, -0.5, -0.25, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5)}


def element_b(geo: Geometry, kind: ProblemKind) -> np.ndarray:
    """Batched B_T, shape (nT, test_dim, local_trial_dim)."""
    nT = geo.n
    lay = TestLayout.for_kind(kind)
    sl = lay.slices()
    P2 = _Phys(geo, 2)
    n2 = P2.nb
    mean2, dmean2 = P2.mean(), P2.dmean()
    tn2 = P2.edge_trace_normal()
    em2 = P2.edge_mean() * geo.signs[:, None, :]
    tx = slice(sl["tau"].start, sl["tau"].start + n2)
    ty = slice(sl["tau"].start + n2, sl["tau"].stop)
    taus = (tx, ty)
    if not kind.perturbed:
        B = np.zeros((nT, lay.dim, 9))
        v = sl["v"]
        B[:, v, 0] = mean2
        for c in range(2):
            B[:, taus[c], 0] = dmean2[:, :, c]
            B[:, v, 1 + c] = dmean2[:, :, c]
            B[:, taus[c], 1 + c] = mean2
            B[:, taus[c], 3:6] = -tn2[:, c]
        B[:, v, 6:9] = -em2
        return B

    s = _scale(kind)
    B = np.zeros((nT, lay.dim, 16))
    mu, v = sl["mu"], sl["v"]
    P4 = _Phys(geo, 4)
    mean4, dmean4 = P4.mean(), P4.dmean()
    # (rho, mu) + (sigma, grad mu) - <sighat_a, mu>
    B[:, mu, 3] = mean2
    for c in range(2):
        B[:, mu, 1 + c] = dmean2[:, :, c]
    B[:, mu, 10:13] = -em2
    # eps^{-1/4}(sigma, tau) + (u, div tau) - <uhat_a, tau.n>
    for c in range(2):
        B[:, taus[c], 1 + c] = s[-0.25] * mean2
        B[:, taus[c], 0] = dmean2[:, :, c]
        B[:, taus[c], 4:7] = -tn2[:, c]
    # (eps^{3/4} + eps^{1/4})(sigma, grad v) - eps^{3/4}<sighat_b, v> + (u, v)
    # + eps^{5/4}(rho, lap v) - eps^{1/2}<uhat_b, grad v.n>
    for c in range(2):
        B[:, v, 1 + c] = (s[0.75] + s[0.25]) * dmean4[:, :, c]
    B[:, v, 13:16] = -s[0.75] * P4.edge_mean() * geo.signs[:, None, :]
    B[:, v, 0] = mean4
    B[:, v, 3] = s[1.25] * P4.lap_mean()
    B[:, v, 7:10] = -s[0.5] * P4.edge_trace_dn()
    return B


def element_gram_blocks(geo: Geometry, kind: ProblemKind) -> dict:
    """Diagonal blocks of the local test Gram matrix, keyed like TestLayout."""
    P2 = _Phys(geo, 2)
    M2 = P2.mass()
    K2 = P2.stiff()
    lap2 = K2[..., 0, 0] + K2[..., 1, 1]
    s = _scale(kind) if kind.perturbed else None
    mass_w, div_w = (s[-0.5], 1.0) if kind.perturbed else (1.0, 1.0)
    tau = np.block([[mass_w * M2 + div_w * K2[..., 0, 0], div_w * K2[..., 0, 1]],
                    [div_w * K2[..., 1, 0], mass_w * M2 + div_w * K2[..., 1, 1]]])
    if not kind.perturbed:
        return {"v": M2 + lap2, "tau": tau}
    P4 = _Phys(geo, 4)
    K4 = P4.stiff()
    v = P4.mass() + (s[0.5] + s[1.0]) * (K4[..., 0, 0] + K4[..., 1, 1]) \
        + s[1.5] * P4.lap_lap()
    return {"mu": s[-1.0] * M2 + lap2, "tau": tau, "v": v}


def element_gram(geo: Geometry, kind: ProblemKind) -> np.ndarray:
    blocks = element_gram_blocks(geo, kind)
    lay = TestLayout.for_kind(kind)
    G = np.zeros((geo.n, lay.dim, lay.dim))
    for name, sl in lay.slices().items():
        G[:, sl, sl] = blocks[name]
    return G


def element_load(geo: Geometry, kind: ProblemKind, f) -> np.ndarray:
    """Batched load vectors, shape (nT, test_dim).

    ``f(x, y)`` is evaluated at the physical quadrature points.
    """
    lay = TestLayout.for_kind(kind)
    sl = lay.slices()
    out = np.zeros((geo.n, lay.dim))
    pts, w = triangle_rule(LOAD_RULE)
    X = geo.map(pts)
    fw = np.asarray(f(X[..., 0], X[..., 1]), dtype=float) * w[None, :]
    if fw.shape != X.shape[:2]:
        fw = np.broadcast_to(fw, X.shape[:2])
    det = geo.det[:, None]
    if not kind.perturbed:
        out[:, sl["v"]] = det * (fw @ basis(2).eval(pts))
        return out
    P4 = basis(4)
    out[:, sl["v"]] = det * (fw @ P4.eval(pts))
    Q = _Phys(geo, 4).laplace_factor()
    fH = np.einsum("tq,qakl->takl", fw, P4.hess(pts))
    out[:, sl["v"]] -= kind.epsilon ** 0.5 * det * np.einsum("tkl,takl->ta", Q, fH)
    return out


# single-element conveniences --------------------------------------------

def local_b_matrix(corners, kind: ProblemKind, signs=None) -> np.ndarray:
    return element_b(Geometry.from_corners(corners, None if signs is None else [signs]), kind)[0]


def local_gram(corners, kind: ProblemKind) -> np.ndarray:
    return element_gram(Geometry.from_corners(corners), kind)[0]


def local_load(corners, kind: ProblemKind, f) -> np.ndarray:
    return element_load(Geometry.from_corners(corners), kind, f)[0]


def local_trial_dim(kind: ProblemKind) -> int:
    return 16 if kind.perturbed else 9


def field_local_dim(kind: ProblemKind) -> int:
    return 4 if kind.perturbed else 3
