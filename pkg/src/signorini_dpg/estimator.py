"""Residual indicators, bulk marking and the adaptive loop."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dpg_system import assemble, residual_dual_norm
from .mesh import Triangulation, refine_nvb, refine_uniform
from .spaces import DofLayout, ProblemKind, trial_dof_layout
from .vi_solver import ActiveSetState, ConstraintSet, VIParams, solve_vi

log = logging.getLogger(__name__)


@dataclass
class EstimatorReport:
    """Squared indicators per element and per boundary edge."""

    eta_T: np.ndarray
    eta_E: np.ndarray
    boundary_edges: np.ndarray
    edge_owner: np.ndarray

    @property
    def eta_T_total(self) -> float:
        return float(self.eta_T.sum())

    @property
    def eta_E_total(self) -> float:
        return float(self.eta_E.sum())

    @property
    def total(self) -> float:
        return self.eta_T_total + self.eta_E_total

    # square roots, as tabulated
    @property
    def eta_volume(self) -> float:
        return float(np.sqrt(self.eta_T_total))

    @property
    def eta_boundary(self) -> float:
        # the edge pairings are sign-definite only for the symmetric variant;
        # a negative sum (possible for 0 and n) is reported as zero
        return float(np.sqrt(max(self.eta_E_total, 0.0)))

    @property
    def eta(self) -> float:
        return float(np.sqrt(max(self.total, 0.0)))

    def element_mass(self) -> np.ndarray:
        """eta(T)^2 plus the indicators of the boundary edges of T."""
        mu = self.eta_T.copy()
        np.add.at(mu, self.edge_owner, self.eta_E)
        return mu


def boundary_indicators(mesh: Triangulation, kind: ProblemKind, x, layout: DofLayout,
                        skel=None) -> np.ndarray:
    """<flux, trace>_E on every boundary edge (exact: constant times linear)."""
    skel = skel if skel is not None else mesh.skeleton()
    be = skel.boundary_edges
    uh = layout.uhat_a(x)
    a, b = skel.edges[be, 0], skel.edges[be, 1]
    sig = layout.sighat_a(x)[be]
    return kind.boundary_scale * sig * skel.lengths[be] * 0.5 * (uh[a] + uh[b])


def estimate(mesh: Triangulation, kind: ProblemKind, x, f, layout: DofLayout | None = None,
             skel=None) -> EstimatorReport:
    skel = skel if skel is not None else mesh.skeleton()
    layout = layout if layout is not None else trial_dof_layout(mesh, kind, skel)
    eta_T = residual_dual_norm(mesh, kind, x, f, layout, skel)
    eta_E = boundary_indicators(mesh, kind, x, layout, skel)
    be = skel.boundary_edges
    return EstimatorReport(eta_T, eta_E, be, skel.left[be])


def mark_bulk(report: EstimatorReport | np.ndarray, theta: float = 0.5) -> np.ndarray:
    """Smallest set of elements carrying a theta fraction of the total mass.

    Accepts a report (edge indicators are added to their element) or a plain
    array of element masses.  Elements are taken by decreasing mass, ties by
    increasing index.  Slightly negative masses (round-off in the edge
    indicators) count as zero.
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")
    mu = report.element_mass() if isinstance(report, EstimatorReport) else np.asarray(report, float)
    mu = np.maximum(mu, 0.0)
    order = np.lexsort((np.arange(mu.size), -mu))
    csum = np.cumsum(mu[order])
    if csum.size == 0 or csum[-1] <= 0.0:
        return np.zeros(0, dtype=np.int64)
    k = int(np.searchsorted(csum, theta * csum[-1], side="left")) + 1
    return np.sort(order[:min(k, mu.size)])


@dataclass
class LevelResult:
    level: int
    mesh: Triangulation
    x: np.ndarray
    layout: DofLayout
    state: ActiveSetState
    report: EstimatorReport
    metrics: object = None
    extra: dict = field(default_factory=dict)

    @property
    def n_elements(self) -> int:
        return self.mesh.n_triangles

    @property
    def n_dofs(self) -> int:
        return self.layout.n_dofs


class LevelError(RuntimeError):
    def __init__(self, level, n_elements, cause):
        super().__init__(f"level {level} (#T = {n_elements}): {cause}")
        self.level = level
        self.n_elements = n_elements


def solve_level(mesh: Triangulation, kind: ProblemKind, f, params: VIParams | None = None):
    """Assemble, solve the inequality and return (x, layout, skeleton, state)."""
    skel = mesh.skeleton()
    layout = trial_dof_layout(mesh, kind, skel)
    system = assemble(mesh, layout, kind, f, skel=skel, condense=True)
    state = solve_vi(system, ConstraintSet.for_system(system), params)
    return system.recover(state.x), layout, skel, state


def adaptive_loop(kind: ProblemKind, mesh: Triangulation, f, *, max_elems: int = 10_000,
                  max_dofs: int | None = None, theta: float = 0.5, uniform: bool = False,
                  exact=None, max_levels: int = 60, params: VIParams | None = None,
                  on_level: Callable[[LevelResult], None] | None = None) -> list:
    """Solve, estimate, mark and refine until the element or DOF budget is hit.

    The loop stops after the first level whose mesh has at least
    ``max_elems`` elements (or ``max_dofs`` unknowns), or when marking is empty.
    ``uniform=True`` replaces bulk marking by uniform refinement.
    """
    from .postproc import error_quantities

    results = []
    for level in range(max_levels):
        try:
            x, layout, skel, state = solve_level(mesh, kind, f, params)
            report = estimate(mesh, kind, x, f, layout, skel)
            metrics = None
            if exact is not None:
                metrics = error_quantities(mesh, kind, x, exact, layout, skel)
        except Exception as exc:  # attach the failing level
            raise LevelError(level, mesh.n_triangles, exc) from exc
        res = LevelResult(level, mesh, x, layout, state, report, metrics)
        results.append(res)
        log.info("level %d  #T=%d  dofs=%d  eta=%.4e  pdas=%d", level, mesh.n_triangles,
                 layout.n_dofs, report.eta, state.iterations)
        if on_level is not None:
            on_level(res)
        if mesh.n_triangles >= max_elems or (max_dofs is not None and layout.n_dofs >= max_dofs):
            break
        if uniform:
            mesh = refine_uniform(mesh)
            continue
        marked = mark_bulk(report, theta)
        if marked.size == 0:
            break
        mesh = refine_nvb(mesh, marked)
    return results
