"""Error quantities against manufactured solutions, rates and ratios."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .mesh import Skeleton, Triangulation
from .quadrature import triangle_rule
from .spaces import DofLayout, ProblemKind, nodal_interpolant_s1, rt0_interpolant, trial_dof_layout

# 10 x 10 collapsed rule, exact to degree 19
ERROR_RULE = 10
CHUNK = 8192


@dataclass
class ErrorMetrics:
    err_u: float
    err_sigma: float
    err_uhat: float | None = None
    err_sighat: float | None = None
    err_rho: float | None = None
    err_uhat_a: float | None = None
    err_uhat_b: float | None = None
    err_sighat_a: float | None = None
    err_sighat_b: float | None = None
    err_total: float = 0.0
    epsilon: float = 1.0

    @property
    def perturbed(self) -> bool:
        return self.err_rho is not None

    def field_error(self) -> float:
        """(err(u)^2 + err(sigma)^2 + err(rho)^2)^{1/2}."""
        return float(np.sqrt(self.err_u ** 2 + self.err_sigma ** 2 + (self.err_rho or 0.0) ** 2))

    def as_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None and k != "epsilon"}


def total_error(m: ErrorMetrics) -> float:
    if m.perturbed:
        e = m.epsilon
        sq = (m.err_u ** 2 + m.err_sigma ** 2 + m.err_rho ** 2
              + e ** 1.5 * m.err_uhat_a ** 2 + e * m.err_uhat_b ** 2
              + e ** 1.5 * m.err_sighat_a ** 2 + e ** 2.5 * m.err_sighat_b ** 2)
    else:
        sq = m.err_u ** 2 + m.err_sigma ** 2 + m.err_uhat ** 2 + m.err_sighat ** 2
    return float(np.sqrt(sq))


def _sum_sq(vals, w, det):
    # vals (t, q) or (t, q, 2); integral over elements of |vals|^2
    v2 = vals ** 2 if vals.ndim == 2 else (vals ** 2).sum(axis=-1)
    return float(np.sum(det[:, None] * v2 * w[None, :]))


def error_quantities(mesh: Triangulation, kind: ProblemKind, x, exact,
                     layout: DofLayout | None = None, skel: Skeleton | None = None) -> ErrorMetrics:
    """Errors of a discrete solution against an exact one.

    Field errors are L2 errors of the piecewise constants.  Trace errors use
    the nodal S1 interpolant of the vertex values and the lowest order
    Raviart-Thomas field built from the edge fluxes.  When the problem is
    perturbed sigma = eps^{1/4} grad u and rho = eps^{1/4} Lap u, and the
    derivative parts of the trace errors carry eps weights.
    """
    skel = skel if skel is not None else mesh.skeleton()
    layout = layout if layout is not None else trial_dof_layout(mesh, kind, skel)
    x = np.asarray(x, dtype=float)
    eps = kind.epsilon
    sp = kind.perturbed
    scale = eps ** 0.25 if sp else 1.0
    wgrad = np.sqrt(eps) if sp else 1.0
    wdiv = eps if sp else 1.0

    ref, w = triangle_rule(ERROR_RULE)
    bary = np.column_stack([1 - ref.sum(axis=1), ref])
    u_h = layout.u(x)
    s_h = layout.sigma(x)
    rho_h = layout.rho(x) if sp else None
    traces = {"a": nodal_interpolant_s1(mesh, layout.uhat_a(x))}
    fluxes = {"a": rt0_interpolant(mesh, skel, layout.sighat_a(x))}
    if sp:
        traces["b"] = nodal_interpolant_s1(mesh, layout.uhat_b(x))
        fluxes["b"] = rt0_interpolant(mesh, skel, layout.sighat_b(x))
    tgrads = {k: t.gradients() for k, t in traces.items()}
    tvals = {k: t.values[mesh.triangles] for k, t in traces.items()}

    acc = {"u": 0.0, "sigma": 0.0, "rho": 0.0}
    for k in traces:
        acc[f"uhat_{k}_l2"] = acc[f"uhat_{k}_h1"] = 0.0
        acc[f"sighat_{k}_l2"] = acc[f"sighat_{k}_div"] = 0.0
    corners = mesh.corners()
    det_all = 2.0 * mesh.areas()
    for start in range(0, mesh.n_triangles, CHUNK):
        c = slice(start, min(start + CHUNK, mesh.n_triangles))
        p = np.einsum("qk,tkd->tqd", bary, corners[c])
        det = det_all[c]
        u, ux, uy, lap = exact._all(p[..., 0], p[..., 1])
        grad = np.stack([ux, uy], axis=-1)
        acc["u"] += _sum_sq(u - u_h[c, None], w, det)
        acc["sigma"] += _sum_sq(scale * grad - s_h[c, None, :], w, det)
        if sp:
            acc["rho"] += _sum_sq(scale * lap - rho_h[c, None], w, det)
        for k in traces:
            ut = np.einsum("qk,tk->tq", bary, tvals[k][c])
            acc[f"uhat_{k}_l2"] += _sum_sq(u - ut, w, det)
            acc[f"uhat_{k}_h1"] += _sum_sq(grad - tgrads[k][c, None, :], w, det)
            q = fluxes[k]
            qv = q.a[c, None, :] + q.b[c, None, None] * p
            acc[f"sighat_{k}_l2"] += _sum_sq(scale * grad - qv, w, det)
            acc[f"sighat_{k}_div"] += _sum_sq(scale * lap - 2.0 * q.b[c, None], w, det)

    def trace_err(k):
        return float(np.sqrt(acc[f"uhat_{k}_l2"] + wgrad * acc[f"uhat_{k}_h1"]))

    def flux_err(k):
        return float(np.sqrt(acc[f"sighat_{k}_l2"] + wdiv * acc[f"sighat_{k}_div"]))

    m = ErrorMetrics(err_u=float(np.sqrt(acc["u"])), err_sigma=float(np.sqrt(acc["sigma"])),
                     epsilon=eps)
    if sp:
        m.err_rho = float(np.sqrt(eps * acc["rho"]))
        m.err_uhat_a, m.err_uhat_b = trace_err("a"), trace_err("b")
        m.err_sighat_a, m.err_sighat_b = flux_err("a"), flux_err("b")
    else:
        m.err_uhat, m.err_sighat = trace_err("a"), flux_err("a")
    m.err_total = total_error(m)
    return m


def convergence_rates(n_elements, values, fit_fraction: float = 0.5):
    """Per-step and fitted rates alpha with value ~ N^(-alpha/2).

    The fitted rate is the least-squares slope over the last ``fit_fraction``
    of the levels (at least two points).
    """
    N = np.asarray(n_elements, dtype=float)
    v = np.asarray(values, dtype=float)
    if N.size != v.size or N.size < 2:
        raise ValueError("need at least two levels")
    if np.any(v <= 0) or np.any(N <= 0):
        raise ValueError("rates need positive values")
    lN, lv = np.log(N), np.log(v)
    steps = -2.0 * np.diff(lv) / np.diff(lN)
    k = max(2, int(np.ceil(fit_fraction * N.size)))
    slope = np.polyfit(lN[-k:], lv[-k:], 1)[0]
    return steps, float(-2.0 * slope)


def balanced_ratio(metrics: ErrorMetrics, report) -> float:
    """Field error in the balanced norm over eta of the volume indicators."""
    denom = report.eta_volume if hasattr(report, "eta_volume") else float(report)
    if denom <= 0:
        raise ZeroDivisionError("volume estimator vanishes")
    return metrics.field_error() / denom
