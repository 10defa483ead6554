"""Economic dispatch of the cluster together with the upstream grid unit.

Two modes share the same grid rows:

* centralized: the full cluster polyhedron is part of the LP;
* aggregated: the cluster is represented only by the vertices of its
  projected region, combined convexly with weights ``lam``.

Both modes pick, among cost-optimal solutions, the lexicographically
largest gate-power schedule, so gate schedules from the two modes are
comparable even when the optimum is not unique.
"""

from __future__ import annotations

import enum
import time as _time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .lp import LpModel, LpProblem, LpStatus
from .model import GridUnit, NetworkCase, TimeGrid, scale_pv
from .network import EmptyRegionError, Polyhedron, assemble_polyhedron, values_by_key
from .pve import PveConfig, PveTrace, run_pve

DEVICE_KINDS = {"pv_p": "pv", "pv_q": "pv", "es_dis": "storage", "es_chg": "storage",
                "es_out": "storage", "es_energy": "storage", "fb_p": "flexbuilding"}


class Mode(str, enum.Enum):
    CENTRALIZED = "centralized"
    AGGREGATED = "aggregated"


class DispatchInfeasibleError(RuntimeError):
    """No joint dispatch exists.  ``subsystem`` is ``"dcs"`` or ``"grid"``."""

    def __init__(self, subsystem: str, message: str):
        super().__init__(f"{subsystem}: {message}")
        self.subsystem = subsystem


@dataclass
class AggregateRegion:
    """Vertices of the cluster region; columns are gate power per slot, then cost."""

    vertices: np.ndarray

    def __post_init__(self):
        self.vertices = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if self.vertices.shape[0] < 1:
            raise ValueError("aggregate region needs at least one vertex")

    @property
    def T(self) -> int:
        return self.vertices.shape[1] - 1


@dataclass
class DispatchResult:
    mode: Mode
    gate_power: np.ndarray
    grid_power: np.ndarray
    dcs_cost: float
    grid_cost: float
    total_cost: float
    lam: Optional[np.ndarray] = None
    device_schedules: Optional[Dict[str, np.ndarray]] = None

    def point(self) -> np.ndarray:
        """``(gate_power..., dcs_cost)`` as a point of the cluster region."""
        return np.append(self.gate_power, self.dcs_cost)

    def as_dict(self) -> dict:
        out = {"mode": self.mode.value, "gate_power": self.gate_power.tolist(),
               "grid_power": self.grid_power.tolist(), "dcs_cost": self.dcs_cost,
               "grid_cost": self.grid_cost, "total_cost": self.total_cost}
        if self.lam is not None:
            out["lambda"] = self.lam.tolist()
        if self.device_schedules is not None:
            out["device_schedules"] = {k: v.tolist() for k, v in self.device_schedules.items()}
        return out


def _grid_rows(grid: GridUnit, time: TimeGrid, ncols: int, p0: int):
    """Ramp rows over the grid output columns ``p0 .. p0+T-1``."""
    T = time.T
    lim = grid.ramp * time.dt_hours
    rows, rhs = [], []
    for t in range(T):
        if t == 0 and grid.p_initial is None:
            continue
        for s in (1.0, -1.0):
            r = np.zeros(ncols)
            r[p0 + t] = s
            if t == 0:
                rhs.append(lim + s * grid.p_initial)
            else:
                r[p0 + t - 1] = -s
                rhs.append(lim)
            rows.append(r)
    return np.array(rows).reshape(-1, ncols), np.array(rhs)


def _solve(A_ub, b_ub, A_eq, b_eq, lb, ub, cost, tiebreak):
    prob = LpProblem(np.zeros(len(cost)), "min", A_ub, b_ub, A_eq, b_eq, lb, ub)
    model = LpModel(prob)
    return model.lexicographic([cost] + [-c for c in tiebreak], "min")


def _grid_cost(grid: GridUnit, time: TimeGrid, p) -> float:
    return float(grid.cost_per_mwh * time.dt_hours * np.sum(p))


def centralized_ed(case: NetworkCase, omega: Optional[Polyhedron] = None) -> DispatchResult:
    """Joint least-cost dispatch over the full cluster model and the grid unit."""
    if omega is None:
        omega = assemble_polyhedron(case, check_feasible=False)
    g, tg, T = case.grid, case.time, case.T
    nx, ny = omega.n_x, omega.n_y
    n = nx + ny + T
    p0 = nx + ny
    A_ub = sp.hstack([sp.csr_matrix(omega.A), sp.csr_matrix(omega.B),
                      sp.csr_matrix((omega.A.shape[0], T))])
    R, r = _grid_rows(g, tg, n, p0)
    A_ub = sp.vstack([A_ub, sp.csr_matrix(R)])
    b_ub = np.concatenate([omega.d, r])
    # balance: p_t - gate_t = grid load
    bal = np.zeros((T, n))
    bal[np.arange(T), p0 + np.arange(T)] = 1.0
    bal[np.arange(T), nx + np.arange(T)] = -1.0
    A_eq = sp.vstack([sp.hstack([sp.csr_matrix(omega.A_eq), sp.csr_matrix(omega.B_eq),
                                 sp.csr_matrix((omega.A_eq.shape[0], T))]), sp.csr_matrix(bal)])
    b_eq = np.concatenate([omega.d_eq, g.grid_load])
    lb = np.full(n, -np.inf)
    ub = np.full(n, np.inf)
    lb[p0:], ub[p0:] = g.p_min, g.p_max
    cost = np.zeros(n)
    cost[nx + T] = 1.0
    cost[p0:] = g.cost_per_mwh * tg.dt_hours
    tie = [np.eye(n)[nx + t] for t in range(T)]
    sol = _solve(A_ub, b_ub, A_eq, b_eq, lb, ub, cost, tie)
    if sol.status is LpStatus.INFEASIBLE:
        _diagnose(omega)
    if sol.status is not LpStatus.OPTIMAL:
        raise DispatchInfeasibleError("dcs", f"dispatch LP is {sol.status.value}")
    x, y, p = sol.x[:nx], sol.x[nx:p0], sol.x[p0:]
    schedules = _schedules(omega, x, y)
    gc = _grid_cost(g, tg, p)
    return DispatchResult(Mode.CENTRALIZED, y[:T].copy(), p.copy(), float(y[T]), gc,
                          float(y[T]) + gc, device_schedules=schedules)


def _diagnose(omega: Polyhedron):
    M, d, M_eq, d_eq = omega.stacked()
    alone = LpModel(LpProblem(np.zeros(M.shape[1]), "min", M, d, M_eq, d_eq)).solve()
    if alone.status is LpStatus.INFEASIBLE:
        raise DispatchInfeasibleError("dcs", "cluster constraints admit no operating point")
    raise DispatchInfeasibleError(
        "grid", "grid bounds/ramp cannot meet grid load plus any feasible gate power")


def _schedules(omega: Polyhedron, x, y) -> Dict[str, np.ndarray]:
    vals = values_by_key(omega, x, y)
    series: Dict[str, Dict[int, float]] = {}
    for v, val in vals.items():
        group = DEVICE_KINDS.get(v.kind)
        if group is None:
            continue
        series.setdefault(f"{group}[{v.owner}].{v.kind}", {})[v.slot] = val
    return {k: np.array([s[t] for t in sorted(s)]) for k, s in sorted(series.items())}


def aggregated_ed(region: AggregateRegion, grid: GridUnit, time: TimeGrid) -> DispatchResult:
    """Least-cost dispatch with the cluster given as a convex combination of vertices."""
    V = region.vertices
    T = time.T
    if region.T != T:
        raise ValueError(f"region has {region.T} slots, time grid has {T}")
    m = V.shape[0]
    n = m + T
    R, r = _grid_rows(grid, time, n, m)
    A_eq = np.zeros((T + 1, n))
    A_eq[0, :m] = 1.0
    A_eq[1:, :m] = -V[:, :T].T
    A_eq[1:, m:] = np.eye(T)
    b_eq = np.concatenate([[1.0], grid.grid_load])
    lb = np.concatenate([np.zeros(m), np.full(T, grid.p_min)])
    ub = np.concatenate([np.full(m, np.inf), np.full(T, grid.p_max)])
    cost = np.concatenate([V[:, T], np.full(T, grid.cost_per_mwh * time.dt_hours)])
    tie = [np.concatenate([V[:, t], np.zeros(T)]) for t in range(T)]
    sol = _solve(R if len(R) else None, r if len(R) else None, A_eq, b_eq, lb, ub, cost, tie)
    if sol.status is not LpStatus.OPTIMAL:
        raise DispatchInfeasibleError("grid", f"aggregated dispatch LP is {sol.status.value}")
    lam = np.clip(sol.x[:m], 0.0, None)
    p = sol.x[m:]
    y = lam @ V
    gc = _grid_cost(grid, time, p)
    return DispatchResult(Mode.AGGREGATED, y[:T], p.copy(), float(y[T]), gc, float(y[T]) + gc,
                          lam=lam)


def recover_witness(omega: Polyhedron, y):
    """Internal schedule ``x`` for a region point ``y``: minimize the largest violation.

    Returns ``(x, residual)``; ``residual`` is zero (up to solver tolerance)
    exactly when ``y`` lies in the projected region.
    """
    y = np.asarray(y, dtype=float)
    nx = omega.n_x
    m, k = omega.A.shape[0], omega.A_eq.shape[0]
    # columns: x, s
    A_ub = np.vstack([np.hstack([omega.A, -np.ones((m, 1))]),
                      np.hstack([omega.A_eq, -np.ones((k, 1))]),
                      np.hstack([-omega.A_eq, -np.ones((k, 1))])])
    b_ub = np.concatenate([omega.d - omega.B @ y, omega.d_eq - omega.B_eq @ y,
                           -(omega.d_eq - omega.B_eq @ y)])
    c = np.zeros(nx + 1)
    c[-1] = 1.0
    lb = np.concatenate([np.full(nx, -np.inf), [0.0]])
    sol = LpModel(LpProblem(c, "min", A_ub, b_ub, lb=lb)).solve()
    if not sol.optimal:
        raise EmptyRegionError(f"witness LP is {sol.status.value}")
    return sol.x[:nx], float(sol.x[-1])


@dataclass
class IterationDeviation:
    iteration: int
    n_vertices: int
    aggregated: Optional[DispatchResult]
    cost_rel: float
    gate_max: float


@dataclass
class ModeComparison:
    centralized: DispatchResult
    aggregated: DispatchResult
    trace: PveTrace
    hull: object
    cost_abs: float
    cost_rel: float
    gate_delta: np.ndarray
    tolerance: float
    gate_tolerance: float
    witness_residual: float
    per_iteration: List[IterationDeviation] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def gate_max(self) -> float:
        return float(np.max(np.abs(self.gate_delta))) if self.gate_delta.size else 0.0

    @property
    def converged(self) -> bool:
        return self.trace.converged

    @property
    def passed(self) -> bool:
        return self.cost_rel <= self.tolerance and self.gate_max <= self.gate_tolerance

    def summary(self) -> dict:
        return {"passed": self.passed, "converged": self.converged,
                "cost_centralized": self.centralized.total_cost,
                "cost_aggregated": self.aggregated.total_cost,
                "cost_abs": self.cost_abs, "cost_rel": self.cost_rel,
                "gate_max": self.gate_max, "tolerance": self.tolerance,
                "gate_tolerance": self.gate_tolerance,
                "witness_residual": self.witness_residual,
                "n_vertices": int(self.hull.n_vertices), "n_facets": int(self.hull.n_facets),
                "timings": self.timings}


def relative_deviation(c_agg: float, c_cen: float) -> float:
    return abs(c_agg - c_cen) / max(abs(c_cen), 1.0)


def compare_modes(case: NetworkCase, cfg: Optional[PveConfig] = None, tolerance: float = 1e-4,
                  gate_tolerance: float = 1e-3, per_iteration: bool = True) -> ModeComparison:
    """Aggregate the cluster, dispatch it both ways and report the differences.

    With ``per_iteration`` the aggregated dispatch is also repeated on the
    region available after every PVE round.
    """
    cfg = cfg or PveConfig()
    t0 = _time.perf_counter()
    omega = assemble_polyhedron(case)
    hull, trace = run_pve(omega, cfg)
    t1 = _time.perf_counter()
    cen = centralized_ed(case, omega)
    t2 = _time.perf_counter()
    agg = aggregated_ed(AggregateRegion(hull.vertices), case.grid, case.time)
    t3 = _time.perf_counter()
    _, resid = recover_witness(omega, agg.point())
    rows = []
    if per_iteration:
        for rec in trace.records:
            try:
                a = aggregated_ed(AggregateRegion(trace.region_at(rec.iteration)), case.grid,
                                  case.time)
            except DispatchInfeasibleError:
                # an early inner region may not reach any grid-feasible gate schedule
                rows.append(IterationDeviation(rec.iteration, rec.n_vertices, None, np.inf, np.inf))
                continue
            rows.append(IterationDeviation(rec.iteration, rec.n_vertices, a,
                                           relative_deviation(a.total_cost, cen.total_cost),
                                           float(np.max(np.abs(a.gate_power - cen.gate_power)))))
    return ModeComparison(cen, agg, trace, hull, abs(agg.total_cost - cen.total_cost),
                          relative_deviation(agg.total_cost, cen.total_cost),
                          agg.gate_power - cen.gate_power, tolerance, gate_tolerance, resid, rows,
                          {"aggregate": t1 - t0, "centralized": t2 - t1, "aggregated": t3 - t2})


@dataclass
class SweepPoint:
    alpha: float
    dcs_cost: float
    total_cost: float
    aggregated_dcs_cost: float
    aggregated_total_cost: float
    passed: bool


def pv_capacity_sweep(case: NetworkCase, alphas: Sequence[float],
                      cfg: Optional[PveConfig] = None, tolerance: float = 1e-4) -> List[SweepPoint]:
    """Cost of the cluster and of the joint system as PV capacity is scaled by each alpha."""
    out = []
    for a in alphas:
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {a}")
        cmp = compare_modes(scale_pv(case, a), cfg, tolerance, per_iteration=False)
        out.append(SweepPoint(float(a), cmp.centralized.dcs_cost, cmp.centralized.total_cost,
                              cmp.aggregated.dcs_cost, cmp.aggregated.total_cost, cmp.passed))
    return out
