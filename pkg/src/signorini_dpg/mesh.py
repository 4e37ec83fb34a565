"""Conforming triangulations with newest-vertex bisection.

Every triangle is stored counterclockwise as ``(a, b, c)`` where ``(a, b)`` is
its refinement edge and ``c`` the newest vertex.  Local edge ``k`` joins
``t[k]`` and ``t[(k + 1) % 3]``, so local edge 0 is always the refinement edge.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class Triangulation:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_vertex: np.ndarray
    generation: int = 0

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def corners(self) -> np.ndarray:
        """Vertex coordinates per triangle, shape (nT, 3, 2)."""
        return self.vertices[self.triangles]

    def signed_areas(self) -> np.ndarray:
        p = self.corners()
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas())

    def centroids(self) -> np.ndarray:
        return self.corners().mean(axis=1)

    def diameters(self) -> np.ndarray:
        p = self.corners()
        lengths = np.linalg.norm(p[:, [1, 2, 0]] - p, axis=2)
        return lengths.max(axis=1)

    def min_angles(self) -> np.ndarray:
        p = self.corners()
        angles = []
        for k in range(3):
            u = p[:, (k + 1) % 3] - p[:, k]
            v = p[:, (k + 2) % 3] - p[:, k]
            cos = np.einsum("ij,ij->i", u, v) / (
                np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            angles.append(np.arccos(np.clip(cos, -1.0, 1.0)))
        return np.min(angles, axis=0)

    def skeleton(self) -> "Skeleton":
        return skeleton(self)


@dataclass
class Skeleton:
    """Unique undirected edges with a fixed orientation.

    ``edges[e]`` is stored low -> high vertex index.  ``normals[e]`` is the
    clockwise rotation of that direction, except on boundary edges where it is
    flipped if necessary so that it points out of the domain.  ``left[e]`` is
    the triangle for which ``normals[e]`` is the outward normal, ``right[e]``
    the other one (-1 on the boundary).  ``signs[t, k]`` is ``n_T . n_E`` for
    local edge ``k`` of triangle ``t``.
    """

    edges: np.ndarray
    normals: np.ndarray
    lengths: np.ndarray
    left: np.ndarray
    right: np.ndarray
    boundary: np.ndarray
    element_edges: np.ndarray
    signs: np.ndarray

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.boundary)

    def midpoints(self, vertices: np.ndarray) -> np.ndarray:
        return 0.5 * (vertices[self.edges[:, 0]] + vertices[self.edges[:, 1]])


def _element_edges(triangles: np.ndarray, n_vertices: int):
    """Unique sorted edges and the (nT, 3) element-to-edge map."""
    local = np.stack([triangles[:, [0, 1]], triangles[:, [1, 2]],
                      triangles[:, [2, 0]]], axis=1)
    lo = local.min(axis=2).ravel().astype(np.int64)
    hi = local.max(axis=2).ravel().astype(np.int64)
    keys, inverse, counts = np.unique(lo * n_vertices + hi, return_inverse=True,
                                      return_counts=True)
    edges = np.stack([keys // n_vertices, keys % n_vertices], axis=1)
    return edges, inverse.reshape(-1, 3), counts


def skeleton(mesh: Triangulation) -> Skeleton:
    tri = mesh.triangles
    nT = tri.shape[0]
    edges, element_edges, counts = _element_edges(tri, mesh.n_vertices)
    if np.any(counts > 2):
        raise ValueError("non-manifold mesh: an edge is shared by more than two triangles")
    V = mesh.vertices
    d = V[edges[:, 1]] - V[edges[:, 0]]
    lengths = np.linalg.norm(d, axis=1)
    normals = np.stack([d[:, 1], -d[:, 0]], axis=1) / lengths[:, None]

    start = tri
    stop = tri[:, [1, 2, 0]]
    signs = np.where(start < stop, 1, -1)

    boundary = counts == 1
    nE = edges.shape[0]
    # a boundary edge traversed high -> low by its triangle gets its normal flipped
    flip = np.zeros(nE, dtype=bool)
    flat_e = element_edges.ravel()
    flat_s = signs.ravel()
    bmask = boundary[flat_e]
    flip[flat_e[bmask & (flat_s < 0)]] = True
    normals[flip] *= -1.0
    signs = np.where(boundary[element_edges], 1, signs)

    left = np.full(nE, -1, dtype=np.int64)
    right = np.full(nE, -1, dtype=np.int64)
    owner = np.repeat(np.arange(nT), 3)
    pos = flat_s > 0
    pos = np.where(boundary[flat_e], True, pos)
    left[flat_e[pos]] = owner[pos]
    right[flat_e[~pos]] = owner[~pos]
    return Skeleton(edges=edges, normals=normals, lengths=lengths, left=left,
                    right=right, boundary=boundary, element_edges=element_edges,
                    signs=signs.astype(np.int8))


def _boundary_flags(triangles: np.ndarray, n_vertices: int) -> np.ndarray:
    edges, _, counts = _element_edges(triangles, n_vertices)
    flags = np.zeros(n_vertices, dtype=bool)
    flags[edges[counts == 1].ravel()] = True
    return flags


def orient_triangles(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Make triangles counterclockwise with the longest edge first.

    Ties between equally long edges go to the edge whose opposite vertex has
    the smallest index.
    """
    tri = np.array(triangles, dtype=np.int64, copy=True)
    p = vertices[tri]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    cw = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    tri[cw] = tri[cw][:, [0, 2, 1]]
    out = np.empty_like(tri)
    for i, t in enumerate(tri):
        lengths = np.array([np.linalg.norm(vertices[t[(k + 1) % 3]] - vertices[t[k]])
                            for k in range(3)])
        longest = np.flatnonzero(lengths >= lengths.max() * (1 - 1e-12))
        k = min(longest, key=lambda j: t[(j + 2) % 3])
        out[i] = np.roll(t, -k)
    return out


def from_arrays(vertices, triangles, init_refinement_edges: bool = True) -> Triangulation:
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)
    if init_refinement_edges:
        triangles = orient_triangles(vertices, triangles)
    mesh = Triangulation(vertices, triangles,
                         _boundary_flags(triangles, len(vertices)))
    if np.any(mesh.signed_areas() <= 0):
        raise ValueError("triangles must have positive signed area")
    return mesh


def _criss_cross(lower_left_corners) -> Triangulation:
    """Unit squares, each cut into 4 triangles by both diagonals."""
    index: dict[tuple[float, float], int] = {}
    coords: list[tuple[float, float]] = []

    def vid(x, y):
        key = (round(x, 12), round(y, 12))
        if key not in index:
            index[key] = len(coords)
            coords.append(key)
        return index[key]

    # corners first, then centres, so corner numbering is stable
    for x0, y0 in lower_left_corners:
        for dx, dy in ((0, 0), (1, 0), (1, 1), (0, 1)):
            vid(x0 + dx, y0 + dy)
    triangles = []
    for x0, y0 in lower_left_corners:
        c = vid(x0 + 0.5, y0 + 0.5)
        ring = [vid(x0, y0), vid(x0 + 1, y0), vid(x0 + 1, y0 + 1), vid(x0, y0 + 1)]
        for k in range(4):
            triangles.append((ring[k], ring[(k + 1) % 4], c))
    return from_arrays(np.array(coords), np.array(triangles))


def make_rectangle() -> Triangulation:
    """(-1, 1) x (0, 1) split into 8 congruent right triangles."""
    return _criss_cross([(-1.0, 0.0), (0.0, 0.0)])


def make_lshape() -> Triangulation:
    """(-1, 1)^2 minus [-1, 0]^2 split into 12 congruent right triangles."""
    return _criss_cross([(0.0, -1.0), (0.0, 0.0), (-1.0, 0.0)])


def refine_nvb(mesh: Triangulation, marked, return_parents: bool = False):
    """Newest-vertex bisection of the marked triangles plus conforming closure.

    All three edges of a marked triangle are marked, so every marked triangle
    is split into four children.  Unmarked triangles are bisected only as far
    as conformity requires.
    """
    marked = np.unique(np.asarray(list(marked) if isinstance(marked, (set, frozenset))
                                  else marked, dtype=np.int64))
    tri = mesh.triangles
    nT = tri.shape[0]
    if marked.size == 0:
        out = Triangulation(mesh.vertices.copy(), tri.copy(),
                            mesh.boundary_vertex.copy(), mesh.generation)
        return (out, np.arange(nT)) if return_parents else out
    if marked.min() < 0 or marked.max() >= nT:
        raise IndexError("marked triangle index out of range")

    edges, e2e, counts = _element_edges(tri, mesh.n_vertices)
    nE = edges.shape[0]
    flag = np.zeros(nE, dtype=bool)
    flag[e2e[marked].ravel()] = True
    while True:
        m = flag[e2e]
        swap = ~m[:, 0] & (m[:, 1] | m[:, 2])
        if not swap.any():
            break
        flag[e2e[swap, 0]] = True

    nV = mesh.n_vertices
    new_id = np.full(nE, -1, dtype=np.int64)
    hit = np.flatnonzero(flag)
    new_id[hit] = nV + np.arange(hit.size)
    vertices = np.vstack([mesh.vertices,
                          0.5 * (mesh.vertices[edges[hit, 0]] + mesh.vertices[edges[hit, 1]])])
    bflag = np.concatenate([mesh.boundary_vertex, counts[hit] == 1])

    nn = new_id[e2e]
    m = nn >= 0
    none = ~m[:, 0]
    b1 = m[:, 0] & ~m[:, 1] & ~m[:, 2]
    b12 = m[:, 0] & m[:, 1] & ~m[:, 2]
    b13 = m[:, 0] & ~m[:, 1] & m[:, 2]
    b123 = m[:, 0] & m[:, 1] & m[:, 2]
    nchild = np.ones(nT, dtype=np.int64)
    nchild[b1] = 2
    nchild[b12 | b13] = 3
    nchild[b123] = 4
    start = np.concatenate([[0], np.cumsum(nchild)])
    out = np.empty((start[-1], 3), dtype=np.int64)
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    m1, m2, m3 = nn[:, 0], nn[:, 1], nn[:, 2]

    def put(mask, children):
        s = start[:-1][mask]
        for j, child in enumerate(children):
            out[s + j] = np.stack([col[mask] for col in child], axis=1)

    put(none, [(a, b, c)])
    put(b1, [(c, a, m1), (b, c, m1)])
    put(b12, [(c, a, m1), (m1, b, m2), (c, m1, m2)])
    put(b13, [(m1, c, m3), (a, m1, m3), (b, c, m1)])
    put(b123, [(m1, c, m3), (a, m1, m3), (m1, b, m2), (c, m1, m2)])

    refined = Triangulation(vertices, out, bflag, mesh.generation + 1)
    if return_parents:
        return refined, np.repeat(np.arange(nT), nchild)
    return refined


def refine_uniform(mesh: Triangulation) -> Triangulation:
    """Split every triangle into four children by two levels of bisection."""
    return refine_nvb(mesh, np.arange(mesh.n_triangles))


def is_conforming(mesh: Triangulation) -> bool:
    """No hanging vertices: every edge has one or two triangles and no vertex
    lies in the interior of another triangle's edge."""
    edges, _, counts = _element_edges(mesh.triangles, mesh.n_vertices)
    if np.any(counts > 2):
        return False
    bedges = edges[counts == 1]
    V = mesh.vertices
    # a hanging vertex shows up as a boundary edge whose midpoint region contains
    # another vertex; check collinear vertices strictly inside single-sided edges
    for p, q in bedges:
        P, Q = V[p], V[q]
        d = Q - P
        rel = V - P
        cross = d[0] * rel[:, 1] - d[1] * rel[:, 0]
        t = rel @ d / (d @ d)
        inside = (np.abs(cross) < 1e-12 * (d @ d)) & (t > 1e-12) & (t < 1 - 1e-12)
        if inside.any():
            return False
    return True


def dump(mesh: Triangulation, path) -> None:
    """Write ``#V #T``, vertex coordinates, then 0-based triangle triples.

    Triangles are written in stored order, so the refinement edge survives a
    round trip.
    """
    lines = [f"{mesh.n_vertices} {mesh.n_triangles}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [f"{a} {b} {c}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def load(path) -> Triangulation:
    rows = Path(path).read_text().split("\n")
    nV, nT = (int(s) for s in rows[0].split())
    vertices = np.array([[float(s) for s in r.split()] for r in rows[1:1 + nV]])
    triangles = np.array([[int(s) for s in r.split()] for r in rows[1 + nV:1 + nV + nT]],
                         dtype=np.int64).reshape(nT, 3)
    return from_arrays(vertices, triangles, init_refinement_edges=False)
