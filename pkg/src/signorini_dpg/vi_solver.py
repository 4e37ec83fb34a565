"""Primal-dual active set solver for  A x - rhs >= 0 complementarity on a cone.

The discrete problem is: find x with x_i >= 0 on the constrained indices C,
(A x - rhs)_i = 0 off C, and lambda = (A x - rhs) >= 0 with x_i lambda_i = 0
on C.  For symmetric A this is the first-order system of the quadratic
program min 1/2 x^T A x - rhs^T x over the cone.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dpg_system import DpgSystem, solve_linear

log = logging.getLogger(__name__)


class VIError(RuntimeError):
    """Solver failure carrying the iteration trace."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


class MaxIterationsError(VIError):
    pass


class CyclingError(VIError):
    pass


@dataclass(frozen=True)
class ConstraintSet:
    """Indices i subject to x_i >= 0."""

    indices: np.ndarray

    def __post_init__(self):
        idx = np.unique(np.asarray(self.indices, dtype=np.int64))
        object.__setattr__(self, "indices", idx)

    @classmethod
    def empty(cls) -> "ConstraintSet":
        return cls(np.zeros(0, dtype=np.int64))

    @classmethod
    def for_system(cls, system: DpgSystem, star: str | None = None) -> "ConstraintSet":
        return cls(system.constrained(star))

    def __len__(self):
        return self.indices.size

    def mask(self, n: int) -> np.ndarray:
        m = np.zeros(n, dtype=bool)
        m[self.indices] = True
        return m


@dataclass
class VIParams:
    c: float = 1.0
    tol: float = 1e-10
    max_iter: int = 100
    max_cycle_dofs: int = 3
    # dense reduced complementarity fallback, limited by entries of the Schur factor
    pivot_fallback_entries: int = 40_000_000
    # last resort for an unresolvable cycle: keep its best member if its KKT
    # residual is below this (None raises CyclingError instead)
    accept_tol: float | None = 1e-6
    trace_path: str | Path | None = None


@dataclass
class ActiveSetState:
    x: np.ndarray
    lam: np.ndarray
    active: np.ndarray
    iterations: int
    history: list = field(default_factory=list)
    kkt: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return bool(self.kkt.get("ok", False))

    @property
    def kkt_residual(self) -> float:
        return float(self.kkt.get("max", np.nan))


def kkt_report(A, rhs, x, constraints: ConstraintSet, tol: float = 1e-10) -> dict:
    """KKT residuals scaled by max|rhs|.

    Returns the worst primal violation, dual violation, complementarity and
    stationarity off the constraint set, together with an ``ok`` flag.
    """
    rhs = np.asarray(rhs, dtype=float)
    r = A @ x - rhs
    n = rhs.size
    on = constraints.mask(n)
    scale = max(np.abs(rhs).max(initial=0.0), np.finfo(float).tiny)
    xc, lc = x[on], r[on]
    rep = {
        "primal": float(max(0.0, -xc.min(initial=0.0)) / scale),
        "dual": float(max(0.0, -lc.min(initial=0.0)) / scale),
        "complementarity": float(np.abs(xc * lc).max(initial=0.0) / scale),
        "stationarity": float(np.abs(r[~on]).max(initial=0.0) / scale),
    }
    # complementarity has units of x * rhs; compare against tol * max(1, |x|)
    xs = max(1.0, np.abs(x).max(initial=0.0))
    rep["ok"] = (rep["primal"] <= tol and rep["dual"] <= tol
                 and rep["complementarity"] <= tol * xs and rep["stationarity"] <= tol)
    rep["max"] = max(rep["primal"], rep["dual"], rep["complementarity"] / xs,
                     rep["stationarity"])
    return rep


def _write_trace(path, trace):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "active", "kkt_residual"])
        for row in trace:
            w.writerow([row[0], row[1], f"{row[2]:.6e}"])


def _break_cycle(A, b, constraints, cycle, params, it, history, trace):
    """Resolve a PDAS cycle by enumerating the indices that flip inside it.

    Indices active in every set of the cycle stay active; those active in
    some but not all sets are tried in every combination.  The first
    combination (in binary order) that satisfies the KKT conditions is
    returned, otherwise None.
    """
    always, flip = _cycle_split(cycle)
    if flip.size > params.max_cycle_dofs:
        return None
    n = b.size
    for mask in range(2 ** flip.size):
        pick = flip[[(mask >> j) & 1 == 1 for j in range(flip.size)]]
        active = np.union1d(always, pick)
        x = solve_linear(A, b, active)
        rep = kkt_report(A, b, x, constraints, params.tol)
        trace.append((it, int(active.size), rep["max"]))
        if rep["ok"]:
            lam = np.zeros(n)
            lam[active] = (A @ x - b)[active]
            history.append(int(active.size))
            return ActiveSetState(x, lam, active, it, history, rep)
    return None


def lemke(M, q, max_iter: int | None = None, tol: float = 1e-13):
    """Complementary pivoting for  w = M z + q,  w, z >= 0,  w^T z = 0.

    Returns z, or None on ray termination.  Always succeeds when M is a
    P-matrix; it is used here only as a fallback for small reduced problems.
    """
    M = np.asarray(M, dtype=float)
    q = np.asarray(q, dtype=float)
    n = q.size
    if n == 0 or q.min() >= 0:
        return np.zeros(n)
    max_iter = max_iter or 50 * (n + 1)
    T = np.hstack([np.eye(n), -M, -np.ones((n, 1)), q[:, None]])
    art = 2 * n
    basis = np.arange(n)
    row, entering = int(np.argmin(q)), art
    for _ in range(max_iter):
        T[row] /= T[row, entering]
        col = T[:, entering].copy()
        col[row] = 0.0
        T -= np.outer(col, T[row])
        leaving = basis[row]
        basis[row] = entering
        if leaving == art:
            z = np.zeros(2 * n + 1)
            z[basis] = T[:, -1]
            return np.maximum(z[n:2 * n], 0.0)
        entering = leaving + n if leaving < n else leaving - n
        col = T[:, entering]
        ok = col > tol
        if not ok.any():
            return None
        ratios = np.full(n, np.inf)
        ratios[ok] = T[ok, -1] / col[ok]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol * max(1.0, abs(best)))
        row = int(ties[basis[ties] == art][0]) if np.any(basis[ties] == art) else int(ties[0])
    return None


def _reduced_lcp(A, b, fixed, cand, params):
    """Complementarity on ``cand`` with x = 0 on ``fixed`` and equations elsewhere.

    The free unknowns are eliminated by one sparse factorization; the Schur
    complement on ``cand`` is dense and solved by :func:`lemke`.  Returns x or
    None (too large, singular or a ray).
    """
    n = b.size
    F = np.setdiff1d(np.arange(n), np.union1d(fixed, cand))
    if F.size * (cand.size + 1) > params.pivot_fallback_entries:
        return None
    A = sp.csc_matrix(A)
    rhs = np.column_stack([A[F][:, cand].toarray(), b[F]])
    if F.size:
        try:
            lu = spla.splu(sp.csc_matrix(A[F][:, F]), permc_spec="COLAMD")
        except RuntimeError:
            return None
        K = lu.solve(rhs)
    else:
        K = np.zeros((0, cand.size + 1))
    ACF = A[cand][:, F]
    M = A[cand][:, cand].toarray() - ACF @ K[:, :-1]
    q = -(b[cand] - ACF @ K[:, -1])
    z = lemke(M, q)
    if z is None:
        return None
    x = np.zeros(n)
    x[cand] = z
    x[F] = K[:, -1] - K[:, :-1] @ z
    return x


def _pivot_fallback(A, b, constraints, params):
    """Solve the complementarity problem reduced to the constrained indices."""
    return _reduced_lcp(A, b, np.zeros(0, dtype=np.int64), constraints.indices, params)


def _cycle_split(cycle):
    """Indices active in every set of a cycle, and those that flip inside it."""
    sets = [np.frombuffer(k, dtype=np.int64) for k in cycle]
    always = sets[0]
    for s_ in sets[1:]:
        always = np.intersect1d(always, s_)
    return always, np.setdiff1d(np.unique(np.concatenate(sets)), always)


def _global_fallback(A, b, constraints, params, it, history, trace):
    xp = _pivot_fallback(A, b, constraints, params)
    if xp is None:
        return None
    rep = kkt_report(A, b, xp, constraints, params.tol)
    trace.append((it, -1, rep["max"]))
    if not rep["ok"]:
        return None
    n = b.size
    C = constraints.indices
    r = A @ xp - b
    lam = np.zeros(n)
    act = C[(xp[C] == 0.0) & (r[C] > 0.0)]
    lam[act] = r[act]
    history.append(int(act.size))
    return ActiveSetState(xp, lam, act, it, history, rep)


def solve_vi(system, constraints: ConstraintSet | None = None,
             params: VIParams | None = None, *, rhs=None) -> ActiveSetState:
    """Primal-dual active set iteration with a fixed parameter c.

    ``system`` is a :class:`DpgSystem` (its composite matrix and load are
    used, constraints default to the variant's cone) or a square matrix, in
    which case ``rhs`` must be given.  The active set starts empty.
    """
    params = params or VIParams()
    if isinstance(system, DpgSystem):
        A = system.composite()
        b = system.rhs if rhs is None else np.asarray(rhs, dtype=float)
        if constraints is None:
            constraints = ConstraintSet.for_system(system)
    else:
        A = system if sp.issparse(system) else np.asarray(system, dtype=float)
        if rhs is None:
            raise ValueError("rhs is required when passing a bare matrix")
        b = np.asarray(rhs, dtype=float)
        if constraints is None:
            constraints = ConstraintSet.empty()
    A = sp.csr_matrix(A)
    n = b.size
    C = constraints.indices
    if C.size and (C.min() < 0 or C.max() >= n):
        raise ValueError("constraint index out of range")

    active = np.zeros(0, dtype=np.int64)
    seen = {active.tobytes()}
    visited = [active.tobytes()]
    trace, history = [], []
    local_tried = False
    solved = {}
    for it in range(1, params.max_iter + 1):
        x = solve_linear(A, b, active)
        r = A @ x - b
        lam = np.zeros(n)
        lam[active] = r[active]
        rep = kkt_report(A, b, x, constraints, params.tol)
        solved[active.tobytes()] = (x, lam, active, rep)
        history.append(int(active.size))
        trace.append((it, int(active.size), rep["max"]))
        crit = lam[C] - params.c * x[C]
        new_active = C[crit > 0]
        if np.array_equal(new_active, active):
            if params.trace_path is not None:
                _write_trace(params.trace_path, trace)
            state = ActiveSetState(x, lam, active, it, history, rep)
            if not rep["ok"]:
                raise VIError(f"active set settled after {it} iterations but KKT residual "
                              f"{rep['max']:.3e} exceeds {params.tol:g}", trace)
            return state
        key = new_active.tobytes()
        if key in seen:
            cycle = visited[visited.index(key):]
            state = _break_cycle(A, b, constraints, cycle, params, it, history, trace)
            if state is None and not local_tried:
                # complementarity on the flipping indices only, then resume the iteration
                local_tried = True
                always, flip = _cycle_split(cycle)
                xl = _reduced_lcp(A, b, always, flip, params)
                if xl is not None:
                    rl = A @ xl - b
                    new_active = np.union1d(always, flip[(xl[flip] == 0.0) & (rl[flip] > 0.0)])
                    key = new_active.tobytes()
                    trace.append((it, int(new_active.size), kkt_report(
                        A, b, xl, constraints, params.tol)["max"]))
                    if key not in seen:
                        seen.add(key)
                        visited.append(key)
                        active = new_active
                        continue
            if state is None:
                state = _global_fallback(A, b, constraints, params, it, history, trace)
            if state is None and params.accept_tol is not None:
                x, lam, act, rep = min((solved[k] for k in cycle), key=lambda s_: s_[3]["max"])
                if rep["max"] <= params.accept_tol:
                    log.warning("unresolvable active set cycle; keeping the member with KKT "
                                "residual %.3e", rep["max"])
                    state = ActiveSetState(x, lam, act, it, history, dict(rep, cycle=True))
            if params.trace_path is not None:
                _write_trace(params.trace_path, trace)
            if state is None:
                raise CyclingError(f"active set cycling detected at iteration {it}", trace)
            return state
        seen.add(key)
        visited.append(key)
        active = new_active
    if params.trace_path is not None:
        _write_trace(params.trace_path, trace)
    raise MaxIterationsError(f"no convergence within {params.max_iter} iterations", trace)
