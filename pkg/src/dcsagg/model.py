"""Domain types of a distributed-resource cluster and per-device constraints.

All powers are in MW (MVAr, MVA), energies in MWh, costs in USD/MWh.  With
the 1 MVA base used throughout, per-unit powers coincide numerically with MW.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from .linear import LinearConstraint, LinearExpr, Var, capacity_polygon_rows, eq, ge, le

logger = logging.getLogger(__name__)

DEFAULT_SEGMENTS = 12


class ValidationError(ValueError):
    """Invalid case data.  ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


def _series(value, T: Optional[int] = None) -> Tuple[float, ...]:
    if np.ndim(value) == 0:
        if T is None:
            return (float(value),)
        return tuple(float(value) for _ in range(T))
    return tuple(float(v) for v in value)


def _set_series(obj, names, T=None):
    for name in names:
        object.__setattr__(obj, name, _series(getattr(obj, name), T))


@dataclass(frozen=True)
class TimeGrid:
    T: int
    dt_hours: float = 1.0

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 1:
            raise ValidationError("time.T", f"must be a positive integer, got {self.T}")
        if not self.dt_hours > 0:
            raise ValidationError("time.dt_hours", f"must be positive, got {self.dt_hours}")


@dataclass(frozen=True)
class Bus:
    id: int
    load_p: Tuple[float, ...]
    load_q: Tuple[float, ...]
    v_min: float = 0.95
    v_max: float = 1.05
    shunt_g: float = 0.0
    shunt_b: float = 0.0

    def __post_init__(self):
        _set_series(self, ("load_p", "load_q"))


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    g: float
    b: float
    s_max: float


@dataclass(frozen=True)
class FeederLink:
    bus: int
    s_max: float


@dataclass(frozen=True)
class PvUnit:
    bus: int
    p_max: Tuple[float, ...]
    s_max: Tuple[float, ...]
    p_min: Tuple[float, ...] = (0.0,)
    s_min: Tuple[float, ...] = (0.0,)
    pf_angle_min: float = -np.arccos(0.9)
    pf_angle_max: float = np.arccos(0.9)
    cost_per_mwh: float = 0.0

    def __post_init__(self):
        _set_series(self, ("p_max", "s_max", "p_min", "s_min"))

    def sized(self, T: int) -> "PvUnit":
        """Broadcast length-1 series to ``T`` slots."""
        out = {}
        for name in ("p_max", "s_max", "p_min", "s_min"):
            s = getattr(self, name)
            out[name] = s * T if len(s) == 1 and T > 1 else s
        return replace(self, **out)


@dataclass(frozen=True)
class StorageUnit:
    bus: int
    e_min: float
    e_max: float
    e0: float
    p_dis_max: float
    p_chg_max: float
    eta_c: float = 1.0
    eta_d: float = 1.0
    cost_dis: float = 0.0
    cost_chg: float = 0.0


@dataclass(frozen=True)
class FlexBuilding:
    bus: int
    p_min: float
    p_max: float
    energy_total: float
    cost_per_mwh: float = 0.0


@dataclass(frozen=True)
class GridUnit:
    bus: int
    p_min: float
    p_max: float
    ramp: float
    cost_per_mwh: float
    grid_load: Tuple[float, ...]
    p_initial: Optional[float] = None

    def __post_init__(self):
        _set_series(self, ("grid_load",))


@dataclass(frozen=True)
class NetworkCase:
    time: TimeGrid
    buses: Tuple[Bus, ...]
    branches: Tuple[Branch, ...]
    feeder: FeederLink
    grid: GridUnit
    pv: Tuple[PvUnit, ...] = ()
    storage: Tuple[StorageUnit, ...] = ()
    flexbuildings: Tuple[FlexBuilding, ...] = ()
    lin_segments: int = DEFAULT_SEGMENTS

    def __post_init__(self):
        for name in ("buses", "branches", "pv", "storage", "flexbuildings"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "pv", tuple(u.sized(self.time.T) for u in self.pv))

    @property
    def T(self) -> int:
        return self.time.T

    def bus_ids(self) -> List[int]:
        return [b.id for b in self.buses]

    def validate(self) -> "NetworkCase":
        """Raise :class:`ValidationError` on the first broken invariant."""
        T = self.T
        ids = self.bus_ids()
        if not ids:
            raise ValidationError("buses", "at least one bus is required")
        if len(set(ids)) != len(ids):
            raise ValidationError("buses", "duplicate bus ids")
        known = set(ids)
        for k, bus in enumerate(self.buses):
            p = f"buses[{k}]"
            if not 0 < bus.v_min <= bus.v_max:
                raise ValidationError(p, f"need 0 < v_min <= v_max, got {bus.v_min}, {bus.v_max}")
            for name in ("load_p", "load_q"):
                if len(getattr(bus, name)) != T:
                    raise ValidationError(f"{p}.{name}", f"expected {T} values")
        for k, br in enumerate(self.branches):
            p = f"branches[{k}]"
            if br.from_bus not in known:
                raise ValidationError(f"{p}.from", f"branch {k} references unknown bus {br.from_bus}")
            if br.to_bus not in known:
                raise ValidationError(f"{p}.to", f"branch {k} references unknown bus {br.to_bus}")
            if br.from_bus == br.to_bus:
                raise ValidationError(p, f"branch {k} is a self-loop on bus {br.from_bus}")
            if not br.s_max > 0:
                raise ValidationError(f"{p}.s_max", "must be positive")
        if self.feeder.bus not in known:
            raise ValidationError("feeder.bus", f"unknown bus {self.feeder.bus}")
        if not self.feeder.s_max > 0:
            raise ValidationError("feeder.s_max", "must be positive")
        if self.lin_segments < 4:
            raise ValidationError("options.lin_segments", f"must be >= 4, got {self.lin_segments}")
        unreached = known - _reachable(self.feeder.bus, self.branches)
        if unreached:
            raise ValidationError("branches", f"buses {sorted(unreached)} are not connected to the feeder")
        for group in ("pv", "storage", "flexbuildings"):
            for k, unit in enumerate(getattr(self, group)):
                if unit.bus not in known:
                    raise ValidationError(f"{group}[{k}].bus", f"unknown bus {unit.bus}")
        for k, unit in enumerate(self.pv):
            validate_pv(unit, self.time, f"pv[{k}]")
        for k, unit in enumerate(self.storage):
            validate_storage(unit, f"storage[{k}]")
        for k, unit in enumerate(self.flexbuildings):
            validate_flexbuilding(unit, self.time, f"flexbuildings[{k}]")
        g = self.grid
        if g.p_min > g.p_max:
            raise ValidationError("grid", f"p_min {g.p_min} > p_max {g.p_max}")
        if g.ramp < 0:
            raise ValidationError("grid.ramp", "must be nonnegative")
        if len(g.grid_load) != T:
            raise ValidationError("grid.grid_load", f"expected {T} values")
        return self


def _reachable(root, branches):
    adj = {}
    for br in branches:
        adj.setdefault(br.from_bus, []).append(br.to_bus)
        adj.setdefault(br.to_bus, []).append(br.from_bus)
    seen = {root}
    todo = deque([root])
    while todo:
        i = todo.popleft()
        for j in adj.get(i, ()):
            if j not in seen:
                seen.add(j)
                todo.append(j)
    return seen


def validate_pv(unit: PvUnit, time: TimeGrid, path: str = "pv"):
    T = time.T
    unit = unit.sized(T)
    for name in ("p_max", "s_max", "p_min", "s_min"):
        if len(getattr(unit, name)) != T:
            raise ValidationError(f"{path}.{name}", f"expected {T} values")
    for t in range(T):
        if not 0 <= unit.p_min[t] <= unit.p_max[t]:
            raise ValidationError(f"{path}.p_min", f"slot {t}: need 0 <= p_min <= p_max")
        if unit.s_max[t] < 0:
            raise ValidationError(f"{path}.s_max", f"slot {t}: negative capacity")
        if unit.s_min[t] > 0:
            # the annulus s_min <= |S| is not convex
            raise ValidationError(f"{path}.s_min", "positive apparent-power floor is not supported")
    if not -np.pi / 2 < unit.pf_angle_min <= unit.pf_angle_max < np.pi / 2:
        raise ValidationError(f"{path}.pf_angle_min", "need -pi/2 < min <= max < pi/2")


def validate_storage(unit: StorageUnit, path: str = "storage"):
    if not unit.e_min <= unit.e0 <= unit.e_max:
        raise ValidationError(f"{path}.e0", f"initial energy {unit.e0} outside [{unit.e_min}, {unit.e_max}]")
    if unit.p_dis_max < 0 or unit.p_chg_max < 0:
        raise ValidationError(path, "power caps must be nonnegative")
    for name in ("eta_c", "eta_d"):
        if not 0 < getattr(unit, name) <= 1:
            raise ValidationError(f"{path}.{name}", "efficiency must lie in (0, 1]")


def validate_flexbuilding(unit: FlexBuilding, time: TimeGrid, path: str = "flexbuildings"):
    T = time.T
    if unit.p_min > unit.p_max:
        raise ValidationError(path, f"p_min {unit.p_min} > p_max {unit.p_max}")
    lo, hi = T * unit.p_min, T * unit.p_max
    if not lo - 1e-12 <= unit.energy_total <= hi + 1e-12:
        raise ValidationError(f"{path}.energy_total", f"{unit.energy_total} outside [{lo}, {hi}]")


# device constraints ---------------------------------------------------------

def pv_constraints(unit: PvUnit, time: TimeGrid, owner: int = 0,
                   segments: int = DEFAULT_SEGMENTS) -> List[LinearConstraint]:
    """Active-power box, linearized capacity disc and power-factor cone per slot."""
    validate_pv(unit, time)
    unit = unit.sized(time.T)
    tan_lo, tan_hi = np.tan(unit.pf_angle_min), np.tan(unit.pf_angle_max)
    rows = []
    for t in range(time.T):
        p, q = Var("pv_p", owner, t), Var("pv_q", owner, t)
        tag = f"pv[{owner}]@{t}"
        rows.append(ge({p: 1.0}, unit.p_min[t], tag + ".p_min"))
        rows.append(le({p: 1.0}, unit.p_max[t], tag + ".p_max"))
        rows.extend(capacity_polygon_rows(unit.s_max[t], segments, p, q, tag + ".s_max"))
        rows.append(le({q: 1.0, p: -tan_hi}, 0.0, tag + ".pf_hi"))
        rows.append(le({q: -1.0, p: tan_lo}, 0.0, tag + ".pf_lo"))
    return rows


def storage_constraints(unit: StorageUnit, time: TimeGrid, owner: int = 0) -> List[LinearConstraint]:
    """Relaxed storage model: no charge/discharge exclusivity binaries.

    ``es_energy`` at slot t is the energy after slot t; the value before slot 0
    is the constant ``e0``, and the energy after the last slot returns to it.
    """
    validate_storage(unit)
    dt = time.dt_hours
    rows = []
    for t in range(time.T):
        pd, pc = Var("es_dis", owner, t), Var("es_chg", owner, t)
        pes, e = Var("es_out", owner, t), Var("es_energy", owner, t)
        tag = f"es[{owner}]@{t}"
        rows.append(eq({pes: 1.0, pd: -1.0, pc: 1.0}, 0.0, tag + ".out"))
        bal = {e: 1.0, pc: -unit.eta_c * dt, pd: dt / unit.eta_d}
        if t == 0:
            rows.append(eq(bal, unit.e0, tag + ".energy"))
        else:
            bal[Var("es_energy", owner, t - 1)] = -1.0
            rows.append(eq(bal, 0.0, tag + ".energy"))
        rows.append(ge({pd: 1.0}, 0.0, tag + ".dis_lo"))
        rows.append(le({pd: 1.0}, unit.p_dis_max, tag + ".dis_hi"))
        rows.append(ge({pc: 1.0}, 0.0, tag + ".chg_lo"))
        rows.append(le({pc: 1.0}, unit.p_chg_max, tag + ".chg_hi"))
        rows.append(ge({e: 1.0}, unit.e_min, tag + ".e_min"))
        rows.append(le({e: 1.0}, unit.e_max, tag + ".e_max"))
    rows.append(eq({Var("es_energy", owner, time.T - 1): 1.0}, unit.e0, f"es[{owner}].cyclic"))
    return rows


def flexbuilding_constraints(unit: FlexBuilding, time: TimeGrid, owner: int = 0) -> List[LinearConstraint]:
    validate_flexbuilding(unit, time)
    rows = []
    for t in range(time.T):
        p = Var("fb_p", owner, t)
        rows.append(ge({p: 1.0}, unit.p_min, f"fb[{owner}]@{t}.p_min"))
        rows.append(le({p: 1.0}, unit.p_max, f"fb[{owner}]@{t}.p_max"))
    total = {Var("fb_p", owner, t): 1.0 for t in range(time.T)}
    rows.append(eq(total, unit.energy_total, f"fb[{owner}].total"))
    return rows


def dcs_cost_expression(case: NetworkCase) -> LinearExpr:
    """Total DER operating cost as a linear expression (USD)."""
    dt = case.time.dt_hours
    expr: LinearExpr = {}
    for t in range(case.T):
        for k, u in enumerate(case.pv):
            expr[Var("pv_p", k, t)] = u.cost_per_mwh * dt
        for k, u in enumerate(case.storage):
            expr[Var("es_dis", k, t)] = u.cost_dis * dt
            expr[Var("es_chg", k, t)] = u.cost_chg * dt
        for k, u in enumerate(case.flexbuildings):
            expr[Var("fb_p", k, t)] = u.cost_per_mwh * dt
    return expr


def device_constraints(case: NetworkCase) -> List[LinearConstraint]:
    rows = []
    for k, u in enumerate(case.pv):
        rows.extend(pv_constraints(u, case.time, k, case.lin_segments))
    for k, u in enumerate(case.storage):
        rows.extend(storage_constraints(u, case.time, k))
    for k, u in enumerate(case.flexbuildings):
        rows.extend(flexbuilding_constraints(u, case.time, k))
    return rows


@dataclass
class StorageCheck:
    index: int
    discharge_covers_charge: bool
    margin_cost_order: float
    charge_below_price: bool
    margin_price: float

    @property
    def ok(self) -> bool:
        return self.discharge_covers_charge and self.charge_below_price


@dataclass
class RelaxationReport:
    units: List[StorageCheck] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(u.ok for u in self.units)

    def failures(self) -> List[StorageCheck]:
        return [u for u in self.units if not u.ok]


def validate_relaxation_conditions(case: NetworkCase) -> RelaxationReport:
    """Check the two cost conditions under which dropping storage binaries is exact.

    (i) discharge cost >= charge cost, (ii) charge cost < grid marginal price.
    Reporting only; a failing case is flagged, not rejected.
    """
    report = RelaxationReport()
    price = case.grid.cost_per_mwh
    for k, u in enumerate(case.storage):
        m1 = u.cost_dis - u.cost_chg
        m2 = price - u.cost_chg
        report.units.append(StorageCheck(k, m1 >= 0, m1, m2 > 0, m2))
    if not report.ok:
        logger.warning("storage relaxation conditions fail for units %s",
                       [u.index for u in report.failures()])
    return report


def scale_pv(case: NetworkCase, alpha: float) -> NetworkCase:
    """Copy of ``case`` with every PV power/apparent cap multiplied by ``alpha``."""
    pv = tuple(
        replace(u,
                p_max=tuple(alpha * v for v in u.p_max),
                p_min=tuple(alpha * v for v in u.p_min),
                s_max=tuple(alpha * v for v in u.s_max))
        for u in case.pv
    )
    return replace(case, pv=pv)

