"""Slow, independent ground truth used by the tests and the acceptance suite.

Nothing here shares code paths with the enumeration engine beyond the
polyhedron data structure: projections come from Fourier-Motzkin
elimination, LPs go through ``scipy.optimize.linprog``, and the monolithic
dispatch model is assembled directly from the case with cvxpy.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from .model import NetworkCase
from .network import Polyhedron

DOMINANCE_TOL = 1e-10
ROW_CAP = 1_000_000


class OracleScaleError(RuntimeError):
    """The elimination grew past the row cap; the oracle is for tiny systems only."""


@dataclass
class FmeSystem:
    """``A z <= b`` over named columns.  Rows are scaled to max-abs coefficient 1.

    ``history`` holds, per row, the set of original rows it was combined from;
    it drives the Chernikov redundancy test.
    """

    A: np.ndarray
    b: np.ndarray
    names: List[str]
    history: Optional[List[frozenset]] = None
    n_eliminated: int = 0

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float)).reshape(-1, len(self.names))
        self.b = np.asarray(self.b, dtype=float).ravel()
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise ValueError("non-finite coefficients")
        if self.history is None:
            self.history = [frozenset([k]) for k in range(len(self.b))]
        self.A, self.b, self.history = _normalize(self.A, self.b, self.history)

    @property
    def n_rows(self) -> int:
        return len(self.b)

    def contains(self, z, tol: float = 1e-9) -> bool:
        z = np.asarray(z, dtype=float)
        return bool(np.all(self.A @ z <= self.b + tol))


class InfeasibleSystemError(ValueError):
    pass


NOISE_TOL = 1e-11


def _normalize(A, b, hist):
    # cancellation leaves ~1e-16 residue that must not be blown up by scaling
    ref = np.maximum(1.0, np.maximum(np.abs(b), np.max(np.abs(A), axis=1, initial=0.0)))
    A = np.where(np.abs(A) <= NOISE_TOL * ref[:, None], 0.0, A)
    scale = np.max(np.abs(A), axis=1) if A.shape[1] else np.zeros(len(b))
    zero = scale == 0
    if np.any(b[zero] < -1e-9 * ref[zero]):
        raise InfeasibleSystemError("a constant row 0 <= b has b < 0")
    keep = ~zero
    A, b = A[keep] / scale[keep, None], b[keep] / scale[keep]
    hist = [h for h, k in zip(hist, keep) if k]
    return _prune(A, b, hist)


def _prune(A, b, hist):
    """Drop duplicates and parallel rows with a looser right-hand side."""
    if len(b) == 0:
        return A, b, hist
    key = np.round(A, 10) + 0.0
    order = np.lexsort(np.vstack([b, key.T[::-1]]))
    keep = []
    last = None
    for i in order:
        k = key[i].tobytes()
        if k != last:
            keep.append(i)
            last = k
    keep = np.array(sorted(keep))
    return A[keep], b[keep], [hist[i] for i in keep]


def fme_eliminate(sys: FmeSystem, var) -> FmeSystem:
    """Project out one column (index or name) by Fourier-Motzkin combination."""
    j = sys.names.index(var) if isinstance(var, str) else int(var)
    col = sys.A[:, j]
    pos, neg = np.flatnonzero(col > 0), np.flatnonzero(col < 0)
    zero = np.flatnonzero(col == 0)
    k = sys.n_eliminated + 1
    cap_rows = len(zero) + len(pos) * len(neg)
    if cap_rows > ROW_CAP:
        raise OracleScaleError(f"elimination of {sys.names[j]} would create {cap_rows} rows")
    rows = [sys.A[zero]]
    rhs = [sys.b[zero]]
    hist = [sys.history[i] for i in zero]
    for i in pos:
        for m in neg:
            h = sys.history[i] | sys.history[m]
            # Chernikov: a combination of more than k+1 originals after k steps is redundant
            if len(h) > k + 1:
                continue
            a, c = col[i], -col[m]
            rows.append((c * sys.A[i] + a * sys.A[m])[None, :])
            rhs.append(np.array([c * sys.b[i] + a * sys.b[m]]))
            hist.append(h)
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    A = np.delete(A, j, axis=1)
    names = sys.names[:j] + sys.names[j + 1:]
    return FmeSystem(A, b, names, hist, k)


def _substitute_equalities(A, b, E, e, n_elim, tol=1e-12):
    """Use equality rows to solve for eliminated columns (the first ``n_elim``).

    Returns the reduced inequality system, the reduced equality system that
    only involves kept columns, and the list of remaining eliminated columns.
    """
    A, b, E, e = A.copy(), b.copy(), E.copy(), e.copy()
    alive = list(range(A.shape[1]))
    elim = set(range(n_elim))
    used = np.zeros(len(e), dtype=bool)
    while True:
        best = None
        for r in np.flatnonzero(~used):
            cols = [c for c in elim if abs(E[r, c]) > tol]
            if cols:
                c = max(cols, key=lambda c: abs(E[r, c]))
                if best is None or abs(E[r, c]) > abs(E[best[0], best[1]]):
                    best = (r, c)
        if best is None:
            break
        r, c = best
        used[r] = True
        piv = E[r] / E[r, c]
        pe = e[r] / E[r, c]
        A_c = A[:, c].copy()
        A -= np.outer(A_c, piv)
        b -= A_c * pe
        E_c = E[:, c].copy()
        E_c[r] = 0.0
        E -= np.outer(E_c, piv)
        e -= E_c * pe
        A[:, c] = 0.0
        E[:, c] = 0.0
        elim.discard(c)
    rest = ~used
    return A, b, E[rest], e[rest], sorted(elim)


def fme_project(omega: Polyhedron, order: Optional[Sequence[int]] = None) -> FmeSystem:
    """H-representation of the projection of ``omega`` onto its ``y`` block.

    Equalities first eliminate ``x`` columns by substitution; the remaining
    ``x`` columns are eliminated one at a time, in ``order`` if given (indices
    into ``x``), otherwise greedily by the smallest ``pos * neg`` product.
    """
    nx, ny = omega.n_x, omega.n_y
    A = np.hstack([omega.A, omega.B])
    E = np.hstack([omega.A_eq, omega.B_eq])
    A, b, E, e, left = _substitute_equalities(A, omega.d, E, omega.d_eq, nx)
    names = [f"x{k}" for k in range(nx)] + omega.y_labels()
    A_all = np.vstack([A, E, -E])
    b_all = np.concatenate([b, e, -e])
    # drop x columns already substituted away (they are zero everywhere now)
    cols = left + list(range(nx, nx + ny))
    sys = FmeSystem(A_all[:, cols], b_all, [names[c] for c in cols])
    todo = [names[c] for c in left]
    if order is not None:
        wanted = [f"x{k}" for k in order]
        todo = [v for v in wanted if v in todo] + [v for v in todo if v not in wanted]
        for v in todo:
            sys = fme_eliminate(sys, v)
        return sys
    while todo:
        def cost(v):
            c = sys.A[:, sys.names.index(v)]
            return int(np.sum(c > 0)) * int(np.sum(c < 0)) - int(np.sum(c != 0))
        v = min(todo, key=cost)
        todo.remove(v)
        sys = fme_eliminate(sys, v)
    return sys


def polygon_vertices(sys: FmeSystem, tol: float = 1e-9) -> np.ndarray:
    """Vertices of a bounded 2-D system, counter-clockwise around their centroid.

    Each row's line is clipped against all other rows; the endpoints of the
    surviving edges are the candidate vertices.  Degenerate regions (a segment
    or a single point) return their 2 or 1 extreme points.
    """
    if sys.A.shape[1] != 2:
        raise ValueError("polygon_vertices needs exactly two columns")
    A, b = sys.A, sys.b
    pts = []
    scale = 1.0
    for i in range(len(b)):
        a = A[i]
        p0 = a * b[i] / (a @ a)
        d = np.array([-a[1], a[0]])
        # rows restrict p0 + s d: (A d) s <= b - A p0
        slope = A @ d
        room = b - A @ p0
        par = np.abs(slope) <= 1e-12
        if np.any(room[par] < -tol * scale):
            continue
        lo, hi = -np.inf, np.inf
        up, dn = slope > 1e-12, slope < -1e-12
        if np.any(up):
            hi = float(np.min(room[up] / slope[up]))
        if np.any(dn):
            lo = float(np.max(room[dn] / slope[dn]))
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise ValueError("region is unbounded")
        if hi >= lo - tol * scale:
            pts.append(p0 + lo * d)
            pts.append(p0 + hi * d)
    if not pts:
        return np.zeros((0, 2))
    P = np.array(pts)
    scale = max(1.0, float(np.abs(P).max()))
    key = np.round(P / (1e-8 * scale))
    _, first = np.unique(key, axis=0, return_index=True)
    P = P[np.sort(first)]
    if len(P) > 2:
        P = P[_extreme_2d(P)]
    elif len(P) == 2 and np.linalg.norm(P[0] - P[1]) <= 1e-8 * scale:
        P = P[:1]
    c = P.mean(axis=0)
    ang = np.arctan2(P[:, 1] - c[1], P[:, 0] - c[0])
    return P[np.argsort(ang)]


def _extreme_2d(P):
    """Indices of points of ``P`` that are not convex combinations of the others."""
    return [k for k in range(len(P)) if not in_convex_hull(np.delete(P, k, axis=0), P[k])]


def support_sample(omega: Polyhedron, directions) -> np.ndarray:
    """``max eta.y`` over ``omega`` for each row of ``directions``.

    Unbounded directions give ``+inf``; an empty ``omega`` raises.
    """
    D = np.atleast_2d(np.asarray(directions, dtype=float))
    nx = omega.n_x
    A_ub = np.hstack([omega.A, omega.B])
    A_eq = np.hstack([omega.A_eq, omega.B_eq])
    out = np.empty(len(D))
    for k, eta in enumerate(D):
        if not np.any(eta):
            raise ValueError("zero direction")
        c = np.concatenate([np.zeros(nx), -eta])
        res = linprog(c, A_ub=A_ub if len(omega.d) else None, b_ub=omega.d if len(omega.d) else None,
                      A_eq=A_eq if len(omega.d_eq) else None,
                      b_eq=omega.d_eq if len(omega.d_eq) else None,
                      bounds=(None, None), method="highs")
        if res.status == 3:
            out[k] = np.inf
        elif res.status == 2:
            raise ValueError("omega is empty")
        elif res.status != 0:
            raise RuntimeError(f"support LP failed: {res.message}")
        else:
            out[k] = -res.fun
    return out


@dataclass
class Membership:
    inside: bool
    residual: float


def membership(point, omega: Polyhedron, tol: float = 1e-7) -> Membership:
    """Does some ``x`` make ``(x, point)`` feasible?  Residual = smallest max violation."""
    y = np.asarray(point, dtype=float)
    if y.shape != (omega.n_y,):
        raise ValueError(f"point has shape {y.shape}, expected ({omega.n_y},)")
    nx = omega.n_x
    m, k = len(omega.d), len(omega.d_eq)
    A_ub = np.vstack([np.hstack([omega.A, -np.ones((m, 1))]),
                      np.hstack([omega.A_eq, -np.ones((k, 1))]),
                      np.hstack([-omega.A_eq, -np.ones((k, 1))])])
    r = omega.d_eq - omega.B_eq @ y
    b_ub = np.concatenate([omega.d - omega.B @ y, r, -r])
    c = np.zeros(nx + 1)
    c[-1] = 1.0
    bounds = [(None, None)] * nx + [(0, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"membership LP failed: {res.message}")
    resid = max(float(res.x[-1]), 0.0)
    return Membership(resid <= tol, resid)


def in_convex_hull(V, q, tol: float = 1e-9) -> bool:
    """Is ``q`` a convex combination of the rows of ``V``?"""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    q = np.asarray(q, dtype=float)
    n = len(V)
    if n == 0:
        return False
    # minimize the l1 residual of sum lam_i V_i - q over the simplex
    d = V.shape[1]
    c = np.concatenate([np.zeros(n), np.ones(2 * d)])
    A_eq = np.vstack([np.hstack([V.T, np.eye(d), -np.eye(d)]),
                      np.concatenate([np.ones(n), np.zeros(2 * d)])[None, :]])
    b_eq = np.concatenate([q, [1.0]])
    res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"hull membership LP failed: {res.message}")
    return res.fun <= tol * max(1.0, np.abs(q).max())


class HullMembership:
    """Repeated convex-combination LPs against one vertex set.

    One HiGHS model is kept and only the right-hand side changes per query:
    ``min |r|_1  s.t.  sum lam_i V_i + r = q,  sum lam_i = 1,  lam >= 0``.
    """

    def __init__(self, V):
        import highspy
        import scipy.sparse as sp

        V = np.atleast_2d(np.asarray(V, dtype=float))
        n, d = V.shape
        self.d = d
        inf = highspy.kHighsInf
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("threads", 1)
        h.addVars(n + 2 * d, np.zeros(n + 2 * d), np.full(n + 2 * d, inf))
        h.changeColsCost(n + 2 * d, np.arange(n + 2 * d, dtype=np.int32),
                         np.concatenate([np.zeros(n), np.ones(2 * d)]))
        M = sp.csr_matrix(np.vstack([np.hstack([V.T, np.eye(d), -np.eye(d)]),
                                     np.concatenate([np.ones(n), np.zeros(2 * d)])[None, :]]))
        h.addRows(d + 1, np.zeros(d + 1), np.zeros(d + 1), M.nnz, M.indptr.astype(np.int32),
                  M.indices.astype(np.int32), M.data)
        self.h = h
        self.rows = np.arange(d + 1, dtype=np.int32)

    def residual(self, q) -> float:
        rhs = np.append(np.asarray(q, dtype=float), 1.0)
        self.h.changeRowsBounds(self.d + 1, self.rows, rhs, rhs)
        self.h.run()
        return max(float(self.h.getInfo().objective_function_value), 0.0)

    def __call__(self, q, tol: float = 1e-9) -> bool:
        return self.residual(q) <= tol * max(1.0, float(np.abs(q).max()))


def lp_extreme_points(points, tol: float = 1e-9) -> np.ndarray:
    """Indices of the extreme points of a finite set (duplicates count once, first kept)."""
    P = np.asarray(points, dtype=float)
    keep = []
    for k in range(len(P)):
        if any(np.linalg.norm(P[k] - P[j]) <= tol for j in keep):
            continue
        others = np.array([P[j] for j in range(len(P))
                           if j != k and np.linalg.norm(P[j] - P[k]) > tol])
        if len(others) == 0 or not in_convex_hull(others, P[k], tol):
            keep.append(k)
    return np.array(keep, dtype=int)


def brute_force_lp(c, A_ub, b_ub, sense: str = "max", tol: float = 1e-9):
    """Optimum of a bounded LP ``A_ub x <= b_ub`` by enumerating all basic points.

    Returns ``(value, point)`` or ``(None, None)`` when infeasible.  Meant for
    a handful of variables only.
    """
    A = np.asarray(A_ub, dtype=float)
    b = np.asarray(b_ub, dtype=float)
    c = np.asarray(c, dtype=float)
    n = A.shape[1]
    best, arg = None, None
    for rows in itertools.combinations(range(len(b)), n):
        M = A[list(rows)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, b[list(rows)])
        if np.all(A @ x <= b + tol * max(1.0, np.abs(x).max())):
            v = float(c @ x)
            if best is None or (v > best if sense == "max" else v < best):
                best, arg = v, x
    return best, arg


def hausdorff_to_polygon(P, Q) -> float:
    """Largest distance from a vertex of one set to the nearest vertex of the other."""
    P, Q = np.atleast_2d(P), np.atleast_2d(Q)
    d = np.linalg.norm(P[:, None, :] - Q[None, :, :], axis=2)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


@dataclass
class MonolithicResult:
    total_cost: float
    dcs_cost: float
    grid_cost: float
    gate_power: np.ndarray
    grid_power: np.ndarray
    storage_products: List[np.ndarray] = field(default_factory=list)


def monolithic_ed(case: NetworkCase, solver: Optional[str] = None) -> MonolithicResult:
    """Centralized dispatch assembled directly from the case data with cvxpy.

    This is a second, independent construction of the same LP: flows,
    balances, capacity polygons, devices and grid rows are written out here
    without going through the symbolic row builders.
    """
    import cvxpy as cp

    case.validate()
    T, dt, N = case.T, case.time.dt_hours, case.lin_segments
    ids = case.bus_ids()
    pos = {b: k for k, b in enumerate(ids)}
    nb, nl = len(ids), len(case.branches)
    u = cp.Variable((nb, T))
    th = cp.Variable((nb, T))
    fp = cp.Variable((nl, T)) if nl else None
    fq = cp.Variable((nl, T)) if nl else None
    gp, gq = cp.Variable(T), cp.Variable(T)
    cons = []
    ang = 2 * np.pi * np.arange(1, N + 1) / N
    cosk, sink, shrink = np.cos(ang), np.sin(ang), math.cos(math.pi / N)

    def polygon(P, Q, s):
        return [cosk[k] * P + sink[k] * Q <= s * shrink for k in range(N)]

    ref = pos[case.feeder.bus]
    cons += [u[ref, :] == 1.0, th[ref, :] == 0.0]
    for k, bus in enumerate(case.buses):
        cons += [u[k, :] >= bus.v_min ** 2, u[k, :] <= bus.v_max ** 2]
    for l, br in enumerate(case.branches):
        i, j = pos[br.from_bus], pos[br.to_bus]
        cons.append(fp[l, :] == 0.5 * br.g * (u[i, :] - u[j, :]) - br.b * (th[i, :] - th[j, :]))
        cons.append(fq[l, :] == -0.5 * br.b * (u[i, :] - u[j, :]) - br.g * (th[i, :] - th[j, :]))
        for t in range(T):
            cons += polygon(fp[l, t], fq[l, t], br.s_max)
    for t in range(T):
        cons += polygon(gp[t], gq[t], case.feeder.s_max)

    inj_p = [[0 for _ in range(T)] for _ in range(nb)]
    inj_q = [[0 for _ in range(T)] for _ in range(nb)]
    cost = 0
    pv_vars = []
    for unit in case.pv:
        p, q = cp.Variable(T), cp.Variable(T)
        pv_vars.append(p)
        k = pos[unit.bus]
        lo, hi = math.tan(unit.pf_angle_min), math.tan(unit.pf_angle_max)
        cons += [p >= np.array(unit.p_min), p <= np.array(unit.p_max), q <= hi * p, q >= lo * p]
        for t in range(T):
            cons += polygon(p[t], q[t], unit.s_max[t])
            inj_p[k][t] = inj_p[k][t] + p[t]
            inj_q[k][t] = inj_q[k][t] + q[t]
        cost = cost + unit.cost_per_mwh * dt * cp.sum(p)
    es_vars = []
    for unit in case.storage:
        pd, pc, e = cp.Variable(T), cp.Variable(T), cp.Variable(T)
        es_vars.append((pd, pc))
        k = pos[unit.bus]
        cons += [pd >= 0, pd <= unit.p_dis_max, pc >= 0, pc <= unit.p_chg_max,
                 e >= unit.e_min, e <= unit.e_max, e[T - 1] == unit.e0]
        for t in range(T):
            prev = unit.e0 if t == 0 else e[t - 1]
            cons.append(e[t] == prev + unit.eta_c * dt * pc[t] - dt / unit.eta_d * pd[t])
            inj_p[k][t] = inj_p[k][t] + pd[t] - pc[t]
        cost = cost + dt * (unit.cost_dis * cp.sum(pd) + unit.cost_chg * cp.sum(pc))
    for unit in case.flexbuildings:
        p = cp.Variable(T)
        k = pos[unit.bus]
        cons += [p >= unit.p_min, p <= unit.p_max, cp.sum(p) == unit.energy_total]
        for t in range(T):
            inj_p[k][t] = inj_p[k][t] - p[t]
        cost = cost + unit.cost_per_mwh * dt * cp.sum(p)

    for k, bus in enumerate(case.buses):
        for t in range(T):
            out_p = bus.shunt_g * u[k, t]
            out_q = -bus.shunt_b * u[k, t]
            for l, br in enumerate(case.branches):
                if br.from_bus == bus.id:
                    out_p, out_q = out_p + fp[l, t], out_q + fq[l, t]
                elif br.to_bus == bus.id:
                    out_p, out_q = out_p - fp[l, t], out_q - fq[l, t]
            gin_p = gp[t] if k == ref else 0
            gin_q = gq[t] if k == ref else 0
            cons.append(inj_p[k][t] + gin_p - bus.load_p[t] == out_p)
            cons.append(inj_q[k][t] + gin_q - bus.load_q[t] == out_q)

    g = case.grid
    pm = cp.Variable(T)
    cons += [pm == np.array(g.grid_load) + gp, pm >= g.p_min, pm <= g.p_max]
    lim = g.ramp * dt
    for t in range(T):
        if t == 0:
            if g.p_initial is not None:
                cons.append(cp.abs(pm[0] - g.p_initial) <= lim)
        else:
            cons.append(cp.abs(pm[t] - pm[t - 1]) <= lim)
    grid_cost = g.cost_per_mwh * dt * cp.sum(pm)
    prob = cp.Problem(cp.Minimize(cost + grid_cost), cons)
    if solver is None:
        solver = "GLPK" if "GLPK" in cp.installed_solvers() else None
    prob.solve(solver=solver)
    if prob.status != cp.OPTIMAL:
        raise RuntimeError(f"monolithic dispatch is {prob.status}")
    prods = [np.asarray(pd.value) * np.asarray(pc.value) for pd, pc in es_vars]
    dcs = float(cost.value) if hasattr(cost, "value") else float(cost)
    return MonolithicResult(float(prob.value), dcs, float(grid_cost.value),
                            np.asarray(gp.value), np.asarray(pm.value), prods)
