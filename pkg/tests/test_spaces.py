import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from signorini_dpg import mesh as M
from signorini_dpg import spaces
from signorini_dpg.spaces import (ProblemKind, basis, eval_trial_traces,
                                  nodal_interpolant_s1, rt0_interpolant, trial_dof_layout)

UNP = ProblemKind.unperturbed()
SP = ProblemKind.singularly_perturbed(1e-4)


def test_problem_kind_defaults_and_validation():
    assert UNP.beta == 2.0 and SP.beta == 3.0
    assert ProblemKind(perturbed=True, epsilon=0.5).beta == 3.0
    with pytest.raises(ValueError):
        ProblemKind(star="x")
    with pytest.raises(ValueError):
        ProblemKind.singularly_perturbed(0.0)
    with pytest.raises(ValueError):
        ProblemKind.unperturbed(beta=1.5)
    assert SP.boundary_scale == pytest.approx(1e-1)


def test_test_layout_dimensions():
    assert spaces.TestLayout.for_kind(UNP).dim == 18
    assert spaces.TestLayout.for_kind(SP).dim == 33


def test_unperturbed_dof_count_rectangle():
    m = M.make_rectangle()
    lay = trial_dof_layout(m, UNP)
    assert lay.n_dofs == 8 + 16 + 8 + 15 == 47


@pytest.mark.parametrize("factory", [M.make_rectangle, M.make_lshape,
                                     lambda: M.refine_nvb(M.make_lshape(), [0, 4])])
def test_perturbed_dof_count(factory):
    m = factory()
    sk = m.skeleton()
    lay = trial_dof_layout(m, SP, sk)
    nV, nT, nE = m.n_vertices, m.n_triangles, sk.n_edges
    nVG = m.boundary_vertex.sum()
    # u, sigma (2), rho per element; shared boundary traces; two fluxes per edge
    assert lay.n_dofs == 4 * nT + nV + (nV - nVG) + 2 * nE
    assert lay.n_dofs == sum(lay.counts.values())


@pytest.mark.parametrize("kind", [UNP, SP])
def test_constrained_sets(kind):
    m = M.refine_nvb(M.make_rectangle(), [1, 6])
    sk = m.skeleton()
    lay = trial_dof_layout(m, kind, sk)
    tr, fl = lay.constrained_trace_dofs, lay.constrained_flux_dofs
    assert tr.size == m.boundary_vertex.sum()
    assert fl.size == sk.boundary.sum()
    assert np.intersect1d(tr, fl).size == 0
    a = lay.block("uhat_a")
    s = lay.block("sighat_a")
    assert np.all((tr >= a.start) & (tr < a.stop))
    assert np.all((fl >= s.start) & (fl < s.stop))


def test_perturbed_trace_sharing():
    m = M.make_lshape()
    lay = trial_dof_layout(m, SP)
    bv = np.flatnonzero(m.boundary_vertex)
    iv = np.flatnonzero(~m.boundary_vertex)
    assert np.array_equal(lay.uhat_b_index[bv], lay.offsets["uhat_a"] + bv)
    b = lay.block("uhat_b")
    assert np.all((lay.uhat_b_index[iv] >= b.start) & (lay.uhat_b_index[iv] < b.stop))
    x = np.arange(lay.n_dofs, dtype=float)
    assert np.array_equal(lay.uhat_a(x)[bv], lay.uhat_b(x)[bv])


def test_element_dofs_share_traces():
    m = M.make_rectangle()
    sk = m.skeleton()
    lay = trial_dof_layout(m, UNP, sk)
    d = lay.element_dofs(m, sk)
    # the two elements meeting at an interior edge reference the same flux DOF
    for e in np.flatnonzero(~sk.boundary):
        left, right = sk.left[e], sk.right[e]
        kl = list(sk.element_edges[left]).index(e)
        kr = list(sk.element_edges[right]).index(e)
        assert d[left, 6 + kl] == d[right, 6 + kr]
    # a vertex shared by several elements has a single trace index
    for v in range(m.n_vertices):
        idx = {d[t, 3 + k] for t, k in zip(*np.nonzero(m.triangles == v))}
        assert idx == {lay.offsets["uhat_a"] + v}


def test_eval_trial_traces():
    m = M.make_rectangle()
    sk = m.skeleton()
    lay = trial_dof_layout(m, UNP, sk)
    x = np.zeros(lay.n_dofs)
    for e in sk.boundary_edges:
        assert eval_trial_traces(lay, sk, x, e) == ((0.0, 0.0), 0.0)
    v = sk.edges[sk.boundary_edges[0], 0]
    x[lay.offsets["uhat_a"] + v] = 1.0
    for e in sk.boundary_edges:
        (ua, ub), _ = eval_trial_traces(lay, sk, x, e)
        a, b = sk.edges[e]
        assert (ua, ub) == (float(a == v), float(b == v))
    with pytest.raises(ValueError):
        eval_trial_traces(lay, sk, x, int(np.flatnonzero(~sk.boundary)[0]))


def test_nodal_interpolant():
    m = M.refine_nvb(M.make_lshape(), [2, 3])
    f = nodal_interpolant_s1(m, np.ones(m.n_vertices))
    assert np.allclose(f.gradients(), 0.0)
    g = nodal_interpolant_s1(m, m.vertices[:, 0])
    assert np.allclose(g.gradients(), [1.0, 0.0])
    rng = np.random.default_rng(3)
    vals = rng.standard_normal(m.n_vertices)
    h = nodal_interpolant_s1(m, vals)
    for t in range(m.n_triangles):
        for k in range(3):
            v = m.triangles[t, k]
            assert abs(h(t, m.vertices[v]) - vals[v]) < 1e-13


def _edge_flux(field, mesh, sk, e, t):
    """Integral of q . n_E over edge e, evaluated on element t (two-point Gauss)."""
    a, b = mesh.vertices[sk.edges[e]]
    g = 0.5 / np.sqrt(3.0)
    pts = [a + (0.5 - g) * (b - a), a + (0.5 + g) * (b - a)]
    return sum(0.5 * sk.lengths[e] * field(t, p) @ sk.normals[e] for p in pts)


def test_rt0_zero_and_unit_flux():
    m = M.make_rectangle()
    sk = m.skeleton()
    q0 = rt0_interpolant(m, sk, np.zeros(sk.n_edges))
    assert np.allclose(q0.a, 0) and np.allclose(q0.b, 0)
    for j in range(sk.n_edges):
        dof = np.zeros(sk.n_edges)
        dof[j] = 1.0
        q = rt0_interpolant(m, sk, dof)
        for t in range(m.n_triangles):
            for e in sk.element_edges[t]:
                expect = sk.lengths[j] if e == j else 0.0
                assert abs(_edge_flux(q, m, sk, e, t) - expect) < 1e-13


def test_rt0_reproduces_linear_field():
    m = M.refine_nvb(M.make_lshape(), [0, 9])
    sk = m.skeleton()
    # q = (x, y) / 2 has normal component (mid . n) / 2 constant on every edge
    sig = 0.5 * np.einsum("ij,ij->i", sk.midpoints(m.vertices), sk.normals)
    q = rt0_interpolant(m, sk, sig)
    assert np.allclose(q.divergence(), 1.0)
    assert np.allclose(q.a, 0.0, atol=1e-14) and np.allclose(q.b, 0.5)


@given(st.sampled_from([2, 4]), st.integers(0, 2 ** 31 - 1))
def test_polynomial_reproduction(degree, seed):
    rng = np.random.default_rng(seed)
    P = basis(degree)
    coef = rng.standard_normal((degree + 1, degree + 1))

    def poly(x, y):
        return sum(coef[i, j] * x ** i * y ** j
                   for i in range(degree + 1) for j in range(degree + 1 - i))

    c = P.interpolate(poly)
    pts = rng.random((10, 2))
    pts = pts[pts.sum(axis=1) <= 1.0]
    assert np.allclose(P.eval(pts) @ c, poly(pts[:, 0], pts[:, 1]), atol=1e-12, rtol=0)
