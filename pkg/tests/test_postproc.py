import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from signorini_dpg import mesh as M
from signorini_dpg.oracles import duffy_rule
from signorini_dpg.postproc import (ErrorMetrics, balanced_ratio, convergence_rates,
                                    error_quantities)
from signorini_dpg.problems import ManufacturedSolution, solution_for
from signorini_dpg.spaces import ProblemKind, rt0_interpolant, trial_dof_layout

UNP = ProblemKind.unperturbed()


class LinearSolution(ManufacturedSolution):
    def _all(self, x, y):
        x = np.asarray(x, dtype=float)
        return 1.0 + 2.0 * x - 0.5 * y, 2.0 + 0 * x, -0.5 + 0 * x, 0 * x


def oracle_metrics(mesh, x, exact, n=14):
    """Unperturbed error quantities by Duffy quadrature and explicit interpolants."""
    sk = mesh.skeleton()
    lay = trial_dof_layout(mesh, UNP, sk)
    u_h, s_h = lay.u(x), lay.sigma(x)
    uh, sig = lay.uhat_a(x), lay.sighat_a(x)
    acc = np.zeros(6)
    for t, tri in enumerate(mesh.triangles):
        P = mesh.vertices[tri]
        pts, w = duffy_rule(P, n)
        u, ux, uy, lap = exact._all(pts[:, 0], pts[:, 1])
        grad = np.stack([ux, uy], axis=1)
        # P1 interpolant: solve for a + b.x through the three vertex values
        A = np.column_stack([np.ones(3), P])
        c = np.linalg.solve(A, uh[tri])
        I = c[0] + pts @ c[1:]
        # RT0 q = a + b x from the three edge fluxes along the stored normals
        rows, rhs = [], []
        for k in range(3):
            e = sk.element_edges[t, k]
            mid = 0.5 * (P[k] + P[(k + 1) % 3])
            n_ = sk.normals[e]
            rows.append([n_[0], n_[1], mid @ n_])
            rhs.append(sig[e])
        a0, a1, b = np.linalg.solve(np.array(rows), np.array(rhs))
        q = np.array([a0, a1])[None, :] + b * pts
        acc += [w @ (u - u_h[t]) ** 2, w @ ((grad - s_h[t]) ** 2).sum(1), w @ (u - I) ** 2,
                w @ ((grad - c[1:]) ** 2).sum(1), w @ ((grad - q) ** 2).sum(1),
                w @ (lap - 2 * b) ** 2]
    return {"err_u": np.sqrt(acc[0]), "err_sigma": np.sqrt(acc[1]),
            "err_uhat": np.sqrt(acc[2] + acc[3]), "err_sighat": np.sqrt(acc[4] + acc[5])}


def test_linear_traces_have_zero_trace_error():
    m = M.refine_nvb(M.make_rectangle(), [0, 3])
    ex = LinearSolution()
    lay = trial_dof_layout(m, UNP)
    x = np.zeros(lay.n_dofs)
    x[lay.block("uhat_a")] = ex.u(m.vertices[:, 0], m.vertices[:, 1])
    assert error_quantities(m, UNP, x, ex, lay).err_uhat <= 1e-12


def test_zero_solution_gives_norm_of_exact():
    m = M.make_rectangle()
    ex = solution_for("smooth")
    lay = trial_dof_layout(m, UNP)
    met = error_quantities(m, UNP, np.zeros(lay.n_dofs), ex, lay)
    ref = oracle_metrics(m, np.zeros(lay.n_dofs), ex)
    assert met.err_u == pytest.approx(ref["err_u"], rel=1e-10)


def test_fixed_vector_against_oracle(rng):
    m = M.make_rectangle()
    ex = solution_for("smooth")
    lay = trial_dof_layout(m, UNP)
    x = rng.standard_normal(lay.n_dofs)
    met = error_quantities(m, UNP, x, ex, lay)
    ref = oracle_metrics(m, x, ex)
    for key, val in ref.items():
        assert getattr(met, key) == pytest.approx(val, rel=1e-8)
    tot = np.sqrt(sum(v ** 2 for v in ref.values()))
    assert met.err_total == pytest.approx(tot, rel=1e-8)


@pytest.mark.parametrize("eps", [1e-2, 1e-6])
def test_perturbed_weights_with_zero_solution(eps):
    m = M.refine_uniform(M.make_rectangle())
    ex = solution_for("smooth")         # polynomial pieces: both rules are exact
    kind = ProblemKind.singularly_perturbed(eps)
    lay = trial_dof_layout(m, kind)
    met = error_quantities(m, kind, np.zeros(lay.n_dofs), ex, lay)
    ref = oracle_metrics(m, np.zeros(trial_dof_layout(m, UNP).n_dofs), ex)
    nu, ngrad = ref["err_u"], ref["err_sigma"]
    nlap = np.sqrt(ref["err_sighat"] ** 2 - ngrad ** 2)
    assert met.err_u == pytest.approx(nu, rel=1e-10)
    assert met.err_sigma == pytest.approx(eps ** 0.25 * ngrad, rel=1e-10)
    assert met.err_rho == pytest.approx(eps ** 0.75 * nlap, rel=1e-8)
    assert met.err_uhat_a == pytest.approx(np.sqrt(nu ** 2 + eps ** 0.5 * ngrad ** 2), rel=1e-10)
    assert met.err_sighat_b == pytest.approx(
        np.sqrt(eps ** 0.5 * ngrad ** 2 + eps ** 1.5 * nlap ** 2), rel=1e-8)


def _prolong(coarse, fine, parent, x, lay_c, lay_f):
    """Represent the coarse discrete functions exactly on the refined mesh."""
    sk_c, sk_f = coarse.skeleton(), fine.skeleton()
    y = np.zeros(lay_f.n_dofs)
    y[lay_f.block("u")] = lay_c.u(x)[parent]
    y[lay_f.block("sigma")] = lay_c.sigma(x)[parent].ravel()
    uh = lay_c.uhat_a(x)
    vals = np.zeros(fine.n_vertices)
    for t, tri in enumerate(fine.triangles):
        P = coarse.vertices[coarse.triangles[parent[t]]]
        c = np.linalg.solve(np.column_stack([np.ones(3), P]), uh[coarse.triangles[parent[t]]])
        vals[tri] = c[0] + fine.vertices[tri] @ c[1:]
    y[lay_f.block("uhat_a")] = vals
    q = rt0_interpolant(coarse, sk_c, lay_c.sighat_a(x))
    mids = sk_f.midpoints(fine.vertices)
    owner = parent[sk_f.left]
    qv = q.a[owner] + q.b[owner, None] * mids
    y[lay_f.block("sighat_a")] = np.einsum("ij,ij->i", qv, sk_f.normals)
    return y


def test_prolonged_solution_has_same_errors(rng):
    coarse = M.make_rectangle()
    fine, parent = M.refine_nvb(coarse, np.arange(8), return_parents=True)
    ex = solution_for("smooth")
    lay_c, lay_f = trial_dof_layout(coarse, UNP), trial_dof_layout(fine, UNP)
    x = rng.standard_normal(lay_c.n_dofs)
    y = _prolong(coarse, fine, parent, x, lay_c, lay_f)
    a = error_quantities(coarse, UNP, x, ex, lay_c)
    b = error_quantities(fine, UNP, y, ex, lay_f)
    for key in ("err_u", "err_sigma", "err_uhat", "err_sighat"):
        assert getattr(b, key) <= getattr(a, key) * (1 + 1e-10)
        assert getattr(b, key) == pytest.approx(getattr(a, key), rel=1e-8)


def test_rt0_divergence_identity(rng):
    m = M.refine_nvb(M.make_lshape(), [1, 2, 3])
    sk = m.skeleton()
    q = rt0_interpolant(m, sk, rng.standard_normal(sk.n_edges))
    for t in rng.choice(m.n_triangles, 20, replace=False):
        P = m.vertices[m.triangles[t]]
        # divergence from the Jacobian of the affine field through three points
        V = np.array([q(t, p) for p in P])
        J = np.linalg.solve(np.column_stack([P[1] - P[0], P[2] - P[0]]).T, V[1:] - V[0]).T
        signed = sum(sk.signs[t, k] * (q.a[t] + q.b[t] * 0.5 * (P[k] + P[(k + 1) % 3]))
                     @ sk.normals[sk.element_edges[t, k]] * sk.lengths[sk.element_edges[t, k]]
                     for k in range(3))
        area = m.areas()[t]
        assert abs(np.trace(J) - q.divergence()[t]) <= 1e-12 * max(1, abs(np.trace(J)))
        assert abs(signed / area - q.divergence()[t]) <= 1e-12 * max(1, abs(signed / area))


# -- rates and ratios -----------------------------------------------------------

def test_rate_examples():
    steps, fit = convergence_rates([100, 400], [1.0, 0.5])
    assert steps[0] == pytest.approx(1.0) and fit == pytest.approx(1.0)
    steps, fit = convergence_rates([10, 40, 160], [3.0, 3.0, 3.0])
    assert np.allclose(steps, 0.0) and fit == pytest.approx(0.0)


def test_rates_reject_nonpositive():
    with pytest.raises(ValueError):
        convergence_rates([1, 2], [1.0, 0.0])
    with pytest.raises(ValueError):
        convergence_rates([1], [1.0])


@given(st.integers(0, 2 ** 31 - 1))
def test_noisy_synthetic_rate(seed):
    rng = np.random.default_rng(seed)
    N = 8 * 4.0 ** np.arange(8)
    v = N ** (-1.4 / 2) * (1 + 0.01 * rng.uniform(-1, 1, N.size))
    assert 1.3 <= convergence_rates(N, v)[1] <= 1.5


def test_fitted_rate_uses_last_half():
    N = 8 * 4.0 ** np.arange(6)
    v = np.concatenate([N[:3] ** -1.0, N[2] ** -1.0 * (N[3:] / N[2]) ** -0.5])
    assert convergence_rates(N, v)[1] == pytest.approx(1.0)


class _Report:
    def __init__(self, eta_volume):
        self.eta_volume = eta_volume


def test_balanced_ratio():
    zero = ErrorMetrics(0.0, 0.0, err_rho=0.0)
    assert balanced_ratio(zero, _Report(2.0)) == 0.0
    m = ErrorMetrics(3.0, 4.0, err_rho=0.0)
    assert balanced_ratio(m, _Report(5.0)) == pytest.approx(1.0)
    with pytest.raises(ZeroDivisionError):
        balanced_ratio(m, _Report(0.0))
