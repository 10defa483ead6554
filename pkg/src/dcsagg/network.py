"""Linearized network rows and assembly of the full cluster polyhedron.

The assembled set is ``{(x, y) : A x + B y <= d,  A_eq x + B_eq y = d_eq}``
where ``y = (gate_p[0..T-1], dcs_cost)`` is kept and every other variable
(voltages, angles, flows, device set-points, gate reactive power) is ``x``.

Sign conventions: gate power is positive when importing into the cluster;
storage output is discharge minus charge; flexible buildings consume.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .linear import LinearConstraint, Var, capacity_polygon_rows, eq, ge, le
from .model import (Branch, NetworkCase, TimeGrid, ValidationError, dcs_cost_expression,
                    device_constraints)

__all__ = [
    "EmptyRegionError", "Polyhedron", "VariableIndex", "assemble_polyhedron",
    "bus_balance_rows", "capacity_polygon_rows", "linear_flow_rows", "network_rows",
]

RETAINED_KINDS = ("gate_p", "dcs_cost")


class EmptyRegionError(RuntimeError):
    """The constraint set has no feasible point."""


def linear_flow_rows(branch: Branch, time: TimeGrid, owner: int = 0) -> List[LinearConstraint]:
    """Lossless linear branch flows in squared-voltage ``u`` and angle ``theta``.

    ``P = g/2 (u_i - u_j) - b (th_i - th_j)``,
    ``Q = -b/2 (u_i - u_j) - g (th_i - th_j)``.
    """
    i, j, g, b = branch.from_bus, branch.to_bus, branch.g, branch.b
    rows = []
    for t in range(time.T):
        ui, uj = Var("u", i, t), Var("u", j, t)
        ti, tj = Var("theta", i, t), Var("theta", j, t)
        fp, fq = Var("flow_p", owner, t), Var("flow_q", owner, t)
        rows.append(eq({fp: 1.0, ui: -0.5 * g, uj: 0.5 * g, ti: b, tj: -b}, 0.0,
                       f"branch[{owner}]@{t}.p"))
        rows.append(eq({fq: 1.0, ui: 0.5 * b, uj: -0.5 * b, ti: g, tj: -g}, 0.0,
                       f"branch[{owner}]@{t}.q"))
    return rows


def _add(coeffs: Dict[Var, float], v: Var, c: float):
    coeffs[v] = coeffs.get(v, 0.0) + c


def bus_balance_rows(case: NetworkCase) -> List[LinearConstraint]:
    """Active/reactive nodal balance per bus and slot.

    ``injections - load = g_ii u_i + sum(outgoing flows)`` and
    ``q_injections - q_load = -b_ii u_i + sum(outgoing q flows)``.
    The feeder bus additionally receives the gate injection.
    """
    known = set(case.bus_ids())
    for k, br in enumerate(case.branches):
        if br.from_bus not in known or br.to_bus not in known:
            raise ValidationError(f"branches[{k}]", f"branch {k} is dangling")
    rows = []
    for t in range(case.T):
        for bus in case.buses:
            i = bus.id
            cp: Dict[Var, float] = {}
            cq: Dict[Var, float] = {}
            for k, u in enumerate(case.pv):
                if u.bus == i:
                    _add(cp, Var("pv_p", k, t), 1.0)
                    _add(cq, Var("pv_q", k, t), 1.0)
            for k, u in enumerate(case.storage):
                if u.bus == i:
                    _add(cp, Var("es_out", k, t), 1.0)
            for k, u in enumerate(case.flexbuildings):
                if u.bus == i:
                    _add(cp, Var("fb_p", k, t), -1.0)
            if i == case.feeder.bus:
                _add(cp, Var("gate_p", 0, t), 1.0)
                _add(cq, Var("gate_q", 0, t), 1.0)
            if bus.shunt_g:
                _add(cp, Var("u", i, t), -bus.shunt_g)
            if bus.shunt_b:
                _add(cq, Var("u", i, t), bus.shunt_b)
            for k, br in enumerate(case.branches):
                if br.from_bus == i:
                    _add(cp, Var("flow_p", k, t), -1.0)
                    _add(cq, Var("flow_q", k, t), -1.0)
                elif br.to_bus == i:
                    _add(cp, Var("flow_p", k, t), 1.0)
                    _add(cq, Var("flow_q", k, t), 1.0)
            rows.append(eq(cp, bus.load_p[t], f"bus[{i}]@{t}.p"))
            rows.append(eq(cq, bus.load_q[t], f"bus[{i}]@{t}.q"))
    return rows


def network_rows(case: NetworkCase) -> List[LinearConstraint]:
    """Flows, balances, voltage bounds, reference bus and capacity polygons."""
    n = case.lin_segments
    rows = []
    for k, br in enumerate(case.branches):
        rows.extend(linear_flow_rows(br, case.time, k))
    rows.extend(bus_balance_rows(case))
    ref = case.feeder.bus
    for t in range(case.T):
        for bus in case.buses:
            u, th = Var("u", bus.id, t), Var("theta", bus.id, t)
            if bus.id == ref:
                rows.append(eq({u: 1.0}, 1.0, f"ref@{t}.u"))
                rows.append(eq({th: 1.0}, 0.0, f"ref@{t}.theta"))
            else:
                rows.append(ge({u: 1.0}, bus.v_min ** 2, f"bus[{bus.id}]@{t}.v_min"))
                rows.append(le({u: 1.0}, bus.v_max ** 2, f"bus[{bus.id}]@{t}.v_max"))
        for k, br in enumerate(case.branches):
            rows.extend(capacity_polygon_rows(br.s_max, n, Var("flow_p", k, t),
                                              Var("flow_q", k, t), f"branch[{k}]@{t}.cap"))
        rows.extend(capacity_polygon_rows(case.feeder.s_max, n, Var("gate_p", 0, t),
                                          Var("gate_q", 0, t), f"feeder@{t}.cap"))
    return rows


@dataclass
class VariableIndex:
    """Column bookkeeping: retained ``y`` keys in fixed order, the rest in ``x``."""

    x_keys: List[Var]
    y_keys: List[Var]

    def __post_init__(self):
        self._x = {v: k for k, v in enumerate(self.x_keys)}
        self._y = {v: k for k, v in enumerate(self.y_keys)}
        if len(self._x) != len(self.x_keys) or len(self._y) != len(self.y_keys):
            raise ValueError("duplicate variable keys")
        if set(self._x) & set(self._y):
            raise ValueError("variable both retained and eliminated")

    def locate(self, v: Var):
        """``("x", col)`` or ``("y", col)``."""
        if v in self._y:
            return "y", self._y[v]
        return "x", self._x[v]

    def x_col(self, v: Var) -> int:
        return self._x[v]

    def y_col(self, v: Var) -> int:
        return self._y[v]

    @property
    def n_x(self) -> int:
        return len(self.x_keys)

    @property
    def n_y(self) -> int:
        return len(self.y_keys)

    @classmethod
    def from_rows(cls, rows: Sequence[LinearConstraint], y_keys: Sequence[Var]) -> "VariableIndex":
        y_keys = list(y_keys)
        ys = set(y_keys)
        seen = {}
        for r in rows:
            for v in r.coeffs:
                if v not in ys and v not in seen:
                    seen[v] = None
        return cls(sorted(seen, key=_var_order), y_keys)


def _var_order(v: Var):
    return (v.kind, v.owner, -1 if v.slot is None else v.slot)


def _as_rows(a, ncols):
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return np.zeros((a.shape[0] if a.ndim == 2 else 0, ncols))
    return a.reshape(-1, ncols)


@dataclass
class Polyhedron:
    """``{(x, y): A x + B y <= d, A_eq x + B_eq y = d_eq}`` with equalities kept separate."""

    A: np.ndarray
    B: np.ndarray
    d: np.ndarray
    A_eq: np.ndarray
    B_eq: np.ndarray
    d_eq: np.ndarray
    index: Optional[VariableIndex] = None
    metadata: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        self.d = np.asarray(self.d, dtype=float).ravel()
        self.A_eq = _as_rows(self.A_eq, self.A.shape[1])
        self.B_eq = _as_rows(self.B_eq, self.B.shape[1])
        self.d_eq = np.asarray(self.d_eq, dtype=float).ravel()
        m, k = self.A.shape[0], self.A_eq.shape[0]
        if self.B.shape[0] != m or self.d.shape[0] != m:
            raise ValueError("inequality block row counts differ")
        if self.B_eq.shape[0] != k or self.d_eq.shape[0] != k:
            raise ValueError("equality block row counts differ")
        for arr in (self.A, self.B, self.d, self.A_eq, self.B_eq, self.d_eq):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite coefficient")
        self.metadata.setdefault("equalities", "separate block")

    @property
    def n_x(self) -> int:
        return self.A.shape[1]

    @property
    def n_y(self) -> int:
        return self.B.shape[1]

    @classmethod
    def from_inequalities(cls, A, B, d, A_eq=None, B_eq=None, d_eq=None, **kw) -> "Polyhedron":
        """Convenience constructor; ``A`` may have zero columns (no eliminated variables)."""
        B = np.atleast_2d(np.asarray(B, dtype=float))
        m = B.shape[0]
        A = np.zeros((m, 0)) if A is None else np.asarray(A, dtype=float).reshape(m, -1)
        nx, ny = A.shape[1], B.shape[1]
        if A_eq is None and B_eq is None:
            A_eq, B_eq, d_eq = np.zeros((0, nx)), np.zeros((0, ny)), np.zeros(0)
        else:
            k = np.atleast_2d(B_eq).shape[0] if B_eq is not None else np.atleast_2d(A_eq).shape[0]
            A_eq = np.zeros((k, nx)) if A_eq is None else A_eq
            B_eq = np.zeros((k, ny)) if B_eq is None else B_eq
        return cls(A, B, d, A_eq, B_eq, d_eq, **kw)

    def residual(self, x, y) -> float:
        """Largest constraint violation at ``(x, y)``; zero when feasible."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        r = 0.0
        if self.d.size:
            r = max(r, float(np.max(self.A @ x + self.B @ y - self.d)))
        if self.d_eq.size:
            r = max(r, float(np.max(np.abs(self.A_eq @ x + self.B_eq @ y - self.d_eq))))
        return max(r, 0.0)

    def stacked(self):
        """``(M_ub, d, M_eq, d_eq)`` over the joint vector ``[x, y]``."""
        return (np.hstack([self.A, self.B]), self.d,
                np.hstack([self.A_eq, self.B_eq]), self.d_eq)

    def y_labels(self) -> List[str]:
        if self.index is None:
            return [f"y{k}" for k in range(self.n_y)]
        return [v.kind if v.slot is None else f"{v.kind}[{v.slot}]" for v in self.index.y_keys]


def retained_keys(T: int) -> List[Var]:
    return [Var("gate_p", 0, t) for t in range(T)] + [Var("dcs_cost", 0, None)]


def rows_to_polyhedron(rows: Sequence[LinearConstraint], index: VariableIndex,
                       metadata=None) -> Polyhedron:
    """Dense matrices from symbolic rows; all-zero rows are dropped after a sanity check."""
    ineq = [r for r in rows if r.sense == "<="]
    eqs = [r for r in rows if r.sense == "=="]

    def block(sel):
        A = np.zeros((len(sel), index.n_x))
        B = np.zeros((len(sel), index.n_y))
        d = np.zeros(len(sel))
        for k, r in enumerate(sel):
            for v, c in r.coeffs.items():
                side, col = index.locate(v)
                (B if side == "y" else A)[k, col] += c
            d[k] = r.rhs
        return A, B, d

    A, B, d = block(ineq)
    A_eq, B_eq, d_eq = block(eqs)
    keep = np.any(A != 0, axis=1) | np.any(B != 0, axis=1)
    if np.any(d[~keep] < -1e-12):
        bad = [ineq[k].tag for k in np.flatnonzero(~keep) if d[k] < -1e-12]
        raise EmptyRegionError(f"constant rows violated: {bad}")
    keep_eq = np.any(A_eq != 0, axis=1) | np.any(B_eq != 0, axis=1)
    if np.any(np.abs(d_eq[~keep_eq]) > 1e-12):
        bad = [eqs[k].tag for k in np.flatnonzero(~keep_eq) if abs(d_eq[k]) > 1e-12]
        raise EmptyRegionError(f"constant equalities violated: {bad}")
    meta = dict(metadata or {})
    meta["tags"] = [r.tag for r, k in zip(ineq, keep) if k]
    meta["eq_tags"] = [r.tag for r, k in zip(eqs, keep_eq) if k]
    return Polyhedron(A[keep], B[keep], d[keep], A_eq[keep_eq], B_eq[keep_eq], d_eq[keep_eq],
                      index=index, metadata=meta)


def cluster_rows(case: NetworkCase) -> List[LinearConstraint]:
    """Every row of the cluster model, including the cost definition."""
    rows = network_rows(case)
    rows.extend(device_constraints(case))
    cost = {Var("dcs_cost", 0, None): 1.0}
    for v, c in dcs_cost_expression(case).items():
        if c:
            cost[v] = cost.get(v, 0.0) - c
    rows.append(eq(cost, 0.0, "dcs_cost"))
    return rows


def assemble_polyhedron(case: NetworkCase, check_feasible: bool = True) -> Polyhedron:
    """Full cluster polyhedron with ``y = (gate_p[0..T-1], dcs_cost)`` retained.

    Raises :class:`EmptyRegionError` when ``check_feasible`` and no point exists.
    """
    case.validate()
    rows = cluster_rows(case)
    index = VariableIndex.from_rows(rows, retained_keys(case.T))
    omega = rows_to_polyhedron(rows, index, {"T": case.T, "segments": case.lin_segments})
    if check_feasible:
        from .lp import LpProblem, LpStatus, solve_lp

        M, d, M_eq, d_eq = omega.stacked()
        sol = solve_lp(LpProblem(np.zeros(M.shape[1]), A_ub=M, b_ub=d, A_eq=M_eq, b_eq=d_eq))
        if sol.status is not LpStatus.OPTIMAL:
            raise EmptyRegionError("cluster constraints admit no feasible operating point")
    return omega


def values_by_key(omega: Polyhedron, x, y) -> Dict[Var, float]:
    """Map a joint point back to ``{Var: value}``."""
    idx = omega.index
    out = {v: float(x[k]) for k, v in enumerate(idx.x_keys)}
    out.update({v: float(y[k]) for k, v in enumerate(idx.y_keys)})
    return out
