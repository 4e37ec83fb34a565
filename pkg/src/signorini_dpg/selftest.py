"""Quick oracle-equivalence and invariant suites on tiny meshes.

Each suite returns (passed, detail).  ``faults`` names debug corruptions
used to check that the suites actually detect errors; ``gram-sign`` flips
the sign of every element Gram matrix before the SPD check.
"""
from __future__ import annotations

import numpy as np

from . import mesh as meshes
from .dpg_system import assemble, solve_linear
from .forms import local_b_matrix, local_gram, local_load
from .oracles import dense_monolithic, lcp_enumeration, local_matrices_oracle
from .problems import solution_for
from .spaces import ProblemKind
from .vi_solver import ConstraintSet, solve_vi

FAULTS = ("gram-sign",)


def _kinds():
    return [ProblemKind.unperturbed("s"), ProblemKind.singularly_perturbed(1e-2)]


def _random_triangles(rng, count):
    out = []
    while len(out) < count:
        c = rng.uniform(-1.0, 1.0, (3, 2))
        a = 0.5 * ((c[1, 0] - c[0, 0]) * (c[2, 1] - c[0, 1]) - (c[1, 1] - c[0, 1]) * (c[2, 0] - c[0, 0]))
        if abs(a) < 0.05:
            continue
        if a < 0:
            c = c[[0, 2, 1]]
        out.append(c)
    return out


def suite_gram_spd(rng, faults):
    worst = np.inf
    for kind in _kinds():
        for c in _random_triangles(rng, 4):
            G = local_gram(c, kind)
            if "gram-sign" in faults:
                G = -G
            if not np.allclose(G, G.T, rtol=0, atol=1e-12 * np.abs(G).max()):
                return False, "Gram matrix not symmetric"
            lam = np.linalg.eigvalsh(G)
            worst = min(worst, lam[0] / np.abs(lam).max())
    return worst > 0, f"min eig/max eig = {worst:.3e}"


def _poly_load(x, y):
    return 1.0 + x * y - 2.0 * x ** 3 + y ** 2


def suite_forms_oracle(rng, faults):
    worst = 0.0
    for kind in _kinds():
        for c in _random_triangles(rng, 2):
            signs = rng.choice([-1.0, 1.0], 3)
            B, G, L = local_matrices_oracle(c, kind, signs, _poly_load)
            for mine, ref in ((local_b_matrix(c, kind, signs), B),
                              (local_gram(c, kind), G),
                              (local_load(c, kind, _poly_load), L)):
                worst = max(worst, np.abs(mine - ref).max() / np.abs(ref).max())
    return worst < 1e-10, f"max relative deviation {worst:.2e}"


def suite_symmetric_part(rng, faults):
    worst = 0.0
    for kind in _kinds():
        sysm = assemble(meshes.make_rectangle(), None, kind, condense=True)
        As, A0, An = (sysm.composite(s).toarray() for s in ("s", "0", "n"))
        scale = np.abs(As).max()
        worst = max(worst, np.abs(As - As.T).max() / scale,
                    np.abs(A0.T - An).max() / scale,
                    np.abs(0.5 * (A0 + An) - As).max() / scale)
    return worst < 1e-13, f"max relative deviation {worst:.2e}"


def suite_coercivity(rng, faults):
    mins = []
    for kind in _kinds():
        sysm = assemble(meshes.make_rectangle(), None, kind, condense=True)
        for star in ("0", "n", "s"):
            A = sysm.composite(star).toarray()
            lam = np.linalg.eigvalsh(0.5 * (A + A.T))
            mins.append(lam[0] / lam[-1])
    worst = min(mins)
    return worst > 0, f"min eig/max eig of symmetric parts = {worst:.3e}"


def suite_condensation(rng, faults):
    worst = 0.0
    for kind in _kinds():
        ex = solution_for("smooth")
        m = meshes.make_rectangle()
        S, F, *_ = dense_monolithic(m, kind, ex.f)
        full = assemble(m, None, kind, ex.f)
        cond = assemble(m, None, kind, ex.f, condense=True)
        worst = max(worst, np.abs(full.S.toarray() - S).max() / np.abs(S).max(),
                    np.abs(full.rhs - F).max() / np.abs(F).max())
        x_full = solve_linear(full.composite(), full.rhs)
        x_cond = cond.recover(solve_linear(cond.composite(), cond.rhs))
        worst = max(worst, np.abs(x_full - x_cond).max() / np.abs(x_full).max())
    return worst < 1e-9, f"max relative deviation {worst:.2e}"


def suite_pdas(rng, faults):
    worst = 0.0
    for _ in range(20):
        n = 6
        Q = rng.standard_normal((n, n))
        A = Q @ Q.T + n * np.eye(n)
        b = rng.standard_normal(n)
        C = np.sort(rng.choice(n, 4, replace=False))
        st = solve_vi(A, ConstraintSet(C), rhs=b)
        ref = lcp_enumeration(A, b, C)
        if len(ref) != 1:
            return False, f"enumeration found {len(ref)} solutions"
        worst = max(worst, np.abs(st.x - ref[0]).max() / max(1.0, np.abs(ref[0]).max()))
    # a real DPG cone problem must end at a KKT point
    ex = solution_for("smooth")
    sysm = assemble(meshes.make_rectangle(), None, ProblemKind.unperturbed("s"), ex.f, condense=True)
    st = solve_vi(sysm)
    ok = worst < 1e-10 and st.converged
    return ok, f"max deviation {worst:.2e}, DPG KKT residual {st.kkt['max']:.2e}"


SUITES = {
    "gram-spd": suite_gram_spd,
    "forms-oracle": suite_forms_oracle,
    "symmetric-part": suite_symmetric_part,
    "coercivity": suite_coercivity,
    "condensation-oracle": suite_condensation,
    "pdas-enumeration": suite_pdas,
}


def run_selftest(seed: int = 0, faults=()) -> list[tuple[str, bool, str]]:
    """Run every suite with a seeded generator; return (name, passed, detail)."""
    unknown = set(faults) - set(FAULTS)
    if unknown:
        raise ValueError(f"unknown fault {sorted(unknown)}")
    report = []
    for name, suite in SUITES.items():
        rng = np.random.default_rng([seed, len(report)])
        try:
            ok, detail = suite(rng, set(faults))
        except Exception as exc:  # a crash counts as a failed suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        report.append((name, bool(ok), detail))
    return report
