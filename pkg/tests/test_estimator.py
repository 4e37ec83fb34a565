import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from signorini_dpg import mesh as M
from signorini_dpg.estimator import (EstimatorReport, LevelError, adaptive_loop,
                                     boundary_indicators, estimate, mark_bulk, solve_level)
from signorini_dpg.oracles import dense_monolithic, residual_oracle
from signorini_dpg.problems import solution_for
from signorini_dpg.spaces import ProblemKind, trial_dof_layout

UNP = ProblemKind.unperturbed()


def two_elements():
    return M.from_arrays(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]),
                         np.array([[0, 1, 2], [1, 3, 2]]))


def test_edge_indicator_example():
    m = M.refine_uniform(M.make_rectangle())
    sk = m.skeleton()
    lay = trial_dof_layout(m, UNP, sk)
    e = sk.boundary_edges[3]
    assert sk.lengths[e] == 0.5
    x = np.zeros(lay.n_dofs)
    x[lay.offsets["sighat_a"] + e] = 2.0
    a, b = sk.edges[e]
    x[lay.offsets["uhat_a"] + a] = 1.0
    x[lay.offsets["uhat_a"] + b] = 3.0
    eta_E = boundary_indicators(m, UNP, x, lay, sk)
    assert eta_E[3] == pytest.approx(2.0)
    sp_kind = ProblemKind.singularly_perturbed(1e-4)
    lay_sp = trial_dof_layout(m, sp_kind, sk)
    y = np.zeros(lay_sp.n_dofs)
    y[lay_sp.offsets["sighat_a"] + e] = 2.0
    y[lay_sp.offsets["uhat_a"] + a] = 1.0
    y[lay_sp.offsets["uhat_a"] + b] = 3.0
    assert boundary_indicators(m, sp_kind, y, lay_sp, sk)[3] == pytest.approx(0.2)


@pytest.mark.parametrize("kind", [UNP, ProblemKind.singularly_perturbed(1e-2)])
def test_zero_solution_zero_load(kind):
    m = M.make_lshape()
    lay = trial_dof_layout(m, kind)
    rep = estimate(m, kind, np.zeros(lay.n_dofs), lambda x, y: 0 * x, lay)
    assert np.all(rep.eta_T == 0) and np.all(rep.eta_E == 0)
    assert rep.eta == 0.0
    assert mark_bulk(rep).size == 0


def test_element_indicators_against_dense_oracle(rng):
    """u = 1 with matching traces on element 0, random fields on element 1."""
    m = two_elements()
    sk = m.skeleton()
    f = lambda x, y: 1.0 + 0 * x   # noqa: E731
    S, F, Bg, Gg, Lg, lay = dense_monolithic(m, UNP, f)
    x = np.zeros(lay.n_dofs)
    x[lay.offsets["u"]] = 1.0
    x[lay.offsets["uhat_a"] + m.triangles[0]] = 1.0
    x[lay.offsets["u"] + 1] = rng.standard_normal()
    x[lay.offsets["sigma"] + 2:lay.offsets["sigma"] + 4] = rng.standard_normal(2)
    own = set(sk.element_edges[0])
    other = [e for e in sk.element_edges[1] if e not in own]
    x[lay.offsets["sighat_a"] + np.array(other)] = rng.standard_normal(len(other))
    rep = estimate(m, UNP, x, f, lay, sk)
    ref = residual_oracle(Bg, Gg, Lg, x, 2, UNP.beta)
    assert rep.eta_T[0] <= 1e-24
    assert rep.eta_T[1] == pytest.approx(ref[1], rel=1e-12)


def test_estimator_totals():
    ex = solution_for("smooth")
    m = M.refine_uniform(M.make_rectangle())
    x, lay, sk, _ = solve_level(m, UNP, ex.f)
    rep = estimate(m, UNP, x, ex.f, lay, sk)
    assert rep.eta ** 2 == pytest.approx(rep.eta_volume ** 2 + rep.eta_boundary ** 2)
    assert rep.element_mass().sum() == pytest.approx(rep.total)
    assert np.all(rep.eta_T >= 0)


@pytest.mark.parametrize("kind", [UNP, ProblemKind.singularly_perturbed(1e-2),
                                  ProblemKind.singularly_perturbed(1e-6)])
def test_edge_indicators_nonnegative_at_convergence(kind):
    ex = solution_for("smooth" if not kind.perturbed else "contact-layer", kind.epsilon)
    m = M.make_rectangle()
    for _ in range(3):
        x, lay, sk, state = solve_level(m, kind, ex.f)
        assert state.converged
        rep = estimate(m, kind, x, ex.f, lay, sk)
        assert rep.eta_E.min() >= -1e-10
        m = M.refine_nvb(m, mark_bulk(rep))


# -- marking ------------------------------------------------------------------

def test_mark_bulk_example():
    assert list(mark_bulk(np.array([4.0, 1, 1, 1, 1]), 0.5)) == [0]


def test_mark_bulk_theta_one_marks_positive():
    mu = np.array([0.0, 2.0, 1.0, 0.0, 3.0])
    assert list(mark_bulk(mu, 1.0)) == [1, 2, 4]


def test_mark_bulk_ties_by_index():
    assert list(mark_bulk(np.array([1.0, 1.0, 1.0, 1.0]), 0.5)) == [0, 1]


def test_mark_bulk_invalid_theta():
    with pytest.raises(ValueError):
        mark_bulk(np.ones(3), 0.0)
    with pytest.raises(ValueError):
        mark_bulk(np.ones(3), 1.5)


def test_mark_bulk_uses_edge_attribution():
    rep = EstimatorReport(eta_T=np.array([1.0, 1.0, 1.5]), eta_E=np.array([2.0, -1e-14]),
                          boundary_edges=np.array([0, 5]), edge_owner=np.array([1, 2]))
    assert list(mark_bulk(rep, 0.5)) == [1]


@given(st.lists(st.floats(0, 10), min_size=1, max_size=10), st.floats(0.05, 1.0))
def test_mark_bulk_is_minimal(values, theta):
    mu = np.array(values)
    marked = mark_bulk(mu, theta)
    total = mu.sum()
    if total == 0:
        assert marked.size == 0
        return
    target = theta * total
    assert mu[marked].sum() >= target * (1 - 1e-12)
    # exhaustive search for the smallest cardinality reaching the target
    best = None
    for k in range(1, mu.size + 1):
        masses = [mu[list(c)].sum() for c in itertools.combinations(range(mu.size), k)]
        if max(masses) >= target * (1 - 1e-12):
            best = (k, max(masses))
            break
    assert marked.size == best[0]
    assert mu[marked].sum() == pytest.approx(best[1], rel=1e-12)


# -- adaptive loop ------------------------------------------------------------

def test_single_level_matches_direct_solve():
    ex = solution_for("smooth")
    m = M.make_rectangle()
    res = adaptive_loop(UNP, m, ex.f, max_elems=1)
    assert len(res) == 1
    x, *_ = solve_level(m, UNP, ex.f)
    assert np.array_equal(res[0].x, x)


def test_theta_one_is_uniform_refinement():
    ex = solution_for("smooth")
    res = adaptive_loop(UNP, M.make_rectangle(), ex.f, theta=1.0, max_elems=128)
    uniform = M.make_rectangle()
    for r in res:
        assert np.all(r.report.element_mass() > 0)
        assert np.array_equal(r.mesh.triangles, uniform.triangles)
        assert np.array_equal(r.mesh.vertices, uniform.vertices)
        uniform = M.refine_uniform(uniform)


def test_budget_stops_loop():
    ex = solution_for("smooth")
    res = adaptive_loop(UNP, M.make_rectangle(), ex.f, max_elems=200)
    assert res[-1].n_elements >= 200
    assert all(r.n_elements < 200 for r in res[:-1])
    res = adaptive_loop(UNP, M.make_rectangle(), ex.f, max_dofs=300)
    assert res[-1].n_dofs >= 300


def test_solver_errors_carry_level():
    calls = {"n": 0}

    def load(x, y):
        calls["n"] += 1
        if calls["n"] > 1:
            raise FloatingPointError("bad load")
        return 0 * x

    with pytest.raises(LevelError) as exc:
        adaptive_loop(UNP, M.make_rectangle(), load, uniform=True, max_elems=100)
    assert exc.value.level >= 0 and "bad load" in str(exc.value)


def test_lshape_adaptive_grades_toward_corner():
    from signorini_dpg.problems import lshape_load
    res = adaptive_loop(UNP, M.make_lshape(), lshape_load, max_elems=1500)
    m = res[-1].mesh
    corner = np.flatnonzero(np.all(m.vertices == 0.0, axis=1))[0]
    at_corner = np.any(m.triangles == corner, axis=1)
    assert m.diameters()[at_corner].min() < 0.2 * m.diameters().mean()
