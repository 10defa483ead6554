"""JSON case files and a seeded generator of synthetic radial clusters.

A case file is a JSON object with a ``schema_version`` field and the
sections ``time``, ``buses``, ``branches``, ``feeder``, ``pv``, ``storage``,
``flexbuildings``, ``grid`` and ``options``.  Units: powers in MW / MVAr /
MVA, energies in MWh, prices in USD/MWh, durations in hours, voltages and
admittances in p.u. on a 1 MVA base (so per-unit power equals MW and no
conversion happens on load).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from .model import (DEFAULT_SEGMENTS, Branch, Bus, FeederLink, FlexBuilding, GridUnit,
                    NetworkCase, PvUnit, StorageUnit, TimeGrid, ValidationError,
                    scale_pv, validate_relaxation_conditions)

SCHEMA_VERSION = 1

UNITS = {
    "time.dt_hours": "h",
    "buses[].load_p": "MW", "buses[].load_q": "MVAr", "buses[].v_min": "p.u.",
    "buses[].v_max": "p.u.", "buses[].shunt_g": "p.u.", "buses[].shunt_b": "p.u.",
    "branches[].g": "p.u.", "branches[].b": "p.u.", "branches[].s_max": "MVA",
    "feeder.s_max": "MVA",
    "pv[].p_min": "MW", "pv[].p_max": "MW", "pv[].s_min": "MVA", "pv[].s_max": "MVA",
    "pv[].pf_angle_min": "rad", "pv[].pf_angle_max": "rad", "pv[].cost_per_mwh": "USD/MWh",
    "storage[].e_min": "MWh", "storage[].e_max": "MWh", "storage[].e0": "MWh",
    "storage[].p_dis_max": "MW", "storage[].p_chg_max": "MW",
    "storage[].cost_dis": "USD/MWh", "storage[].cost_chg": "USD/MWh",
    "flexbuildings[].p_min": "MW", "flexbuildings[].p_max": "MW",
    "flexbuildings[].energy_total": "MWh", "flexbuildings[].cost_per_mwh": "USD/MWh",
    "grid.p_min": "MW", "grid.p_max": "MW", "grid.ramp": "MW/h",
    "grid.p_initial": "MW", "grid.cost_per_mwh": "USD/MWh", "grid.grid_load": "MW",
}


@dataclass
class CaseFile:
    case: NetworkCase
    options: Dict[str, Any] = field(default_factory=dict)

    @property
    def epsilon(self) -> Optional[float]:
        return self.options.get("epsilon")


class _Reader:
    def __init__(self, obj, path):
        if not isinstance(obj, dict):
            raise ValidationError(path, "expected an object")
        self.obj, self.path = obj, path

    def get(self, key, kind="num", default=...):
        p = f"{self.path}.{key}" if self.path else key
        if key not in self.obj:
            if default is ...:
                raise ValidationError(p, "missing field")
            return default
        v = self.obj[key]
        if kind == "int":
            if isinstance(v, bool) or not isinstance(v, int):
                raise ValidationError(p, f"expected an integer, got {v!r}")
            return v
        if kind == "num":
            return _number(v, p)
        if kind == "series":
            if isinstance(v, list):
                return tuple(_number(e, f"{p}[{k}]") for k, e in enumerate(v))
            return _number(v, p)
        raise AssertionError(kind)

    def unknown(self, allowed):
        extra = set(self.obj) - set(allowed)
        if extra:
            raise ValidationError(self.path or "<root>", f"unknown fields {sorted(extra)}")


def _number(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ValidationError(path, f"expected a finite number, got {v!r}")
    return float(v)


def _list(obj, key):
    v = obj.get(key, [])
    if not isinstance(v, list):
        raise ValidationError(key, "expected a list")
    return v


def case_from_dict(doc: Dict[str, Any]) -> CaseFile:
    """Parse and validate a case document; errors carry the field path."""
    root = _Reader(doc, "")
    root.unknown(["schema_version", "name", "description", "time", "buses", "branches",
                  "feeder", "pv", "storage", "flexbuildings", "grid", "options"])
    version = root.get("schema_version", "int")
    if version != SCHEMA_VERSION:
        raise ValidationError("schema_version", f"unsupported version {version}")
    if "time" not in doc:
        raise ValidationError("time", "missing section")
    tr = _Reader(doc["time"], "time")
    tr.unknown(["T", "dt_hours"])
    time = TimeGrid(tr.get("T", "int"), tr.get("dt_hours", default=1.0))

    buses = []
    for k, b in enumerate(_list(doc, "buses")):
        r = _Reader(b, f"buses[{k}]")
        r.unknown(["id", "load_p", "load_q", "v_min", "v_max", "shunt_g", "shunt_b"])
        buses.append(Bus(r.get("id", "int"), r.get("load_p", "series"),
                         r.get("load_q", "series", 0.0), r.get("v_min", default=0.95),
                         r.get("v_max", default=1.05), r.get("shunt_g", default=0.0),
                         r.get("shunt_b", default=0.0)))
    # scalar loads are constant over the horizon
    buses = [b if len(b.load_p) == time.T and len(b.load_q) == time.T else
             Bus(b.id, b.load_p * time.T if len(b.load_p) == 1 else b.load_p,
                 b.load_q * time.T if len(b.load_q) == 1 else b.load_q,
                 b.v_min, b.v_max, b.shunt_g, b.shunt_b) for b in buses]

    branches = []
    for k, b in enumerate(_list(doc, "branches")):
        r = _Reader(b, f"branches[{k}]")
        r.unknown(["from", "to", "g", "b", "s_max"])
        branches.append(Branch(r.get("from", "int"), r.get("to", "int"), r.get("g"),
                               r.get("b"), r.get("s_max")))
    if "feeder" not in doc:
        raise ValidationError("feeder", "missing section")
    fr = _Reader(doc["feeder"], "feeder")
    fr.unknown(["bus", "s_max"])
    feeder = FeederLink(fr.get("bus", "int"), fr.get("s_max"))

    pv = []
    for k, u in enumerate(_list(doc, "pv")):
        r = _Reader(u, f"pv[{k}]")
        r.unknown(["bus", "p_min", "p_max", "s_min", "s_max", "pf_angle_min", "pf_angle_max",
                   "cost_per_mwh"])
        pv.append(PvUnit(r.get("bus", "int"), r.get("p_max", "series"), r.get("s_max", "series"),
                         r.get("p_min", "series", 0.0), r.get("s_min", "series", 0.0),
                         r.get("pf_angle_min", default=-math.acos(0.9)),
                         r.get("pf_angle_max", default=math.acos(0.9)),
                         r.get("cost_per_mwh", default=0.0)))
    storage = []
    for k, u in enumerate(_list(doc, "storage")):
        r = _Reader(u, f"storage[{k}]")
        r.unknown(["bus", "e_min", "e_max", "e0", "p_dis_max", "p_chg_max", "eta_c", "eta_d",
                   "cost_dis", "cost_chg"])
        storage.append(StorageUnit(r.get("bus", "int"), r.get("e_min"), r.get("e_max"),
                                   r.get("e0"), r.get("p_dis_max"), r.get("p_chg_max"),
                                   r.get("eta_c", default=1.0), r.get("eta_d", default=1.0),
                                   r.get("cost_dis", default=0.0), r.get("cost_chg", default=0.0)))
    fbs = []
    for k, u in enumerate(_list(doc, "flexbuildings")):
        r = _Reader(u, f"flexbuildings[{k}]")
        r.unknown(["bus", "p_min", "p_max", "energy_total", "cost_per_mwh"])
        fbs.append(FlexBuilding(r.get("bus", "int"), r.get("p_min"), r.get("p_max"),
                                r.get("energy_total"), r.get("cost_per_mwh", default=0.0)))
    if "grid" not in doc:
        raise ValidationError("grid", "missing section")
    gr = _Reader(doc["grid"], "grid")
    gr.unknown(["bus", "p_min", "p_max", "ramp", "cost_per_mwh", "grid_load", "p_initial"])
    load = gr.get("grid_load", "series")
    if isinstance(load, float):
        load = (load,) * time.T
    p_init = doc["grid"].get("p_initial")
    grid = GridUnit(gr.get("bus", "int", 0), gr.get("p_min"), gr.get("p_max"), gr.get("ramp"),
                    gr.get("cost_per_mwh"), load,
                    None if p_init is None else gr.get("p_initial"))

    options = dict(doc.get("options") or {})
    opt = _Reader(options, "options")
    opt.unknown(["lin_segments", "epsilon"])
    segments = opt.get("lin_segments", "int", DEFAULT_SEGMENTS)
    if "epsilon" in options:
        options["epsilon"] = opt.get("epsilon")
    case = NetworkCase(time, tuple(buses), tuple(branches), feeder, grid, tuple(pv),
                       tuple(storage), tuple(fbs), segments)
    case.validate()
    return CaseFile(case, options)


def case_to_dict(case: NetworkCase, options: Optional[Dict[str, Any]] = None,
                 name: Optional[str] = None) -> Dict[str, Any]:
    doc: Dict[str, Any] = {"schema_version": SCHEMA_VERSION}
    if name:
        doc["name"] = name
    doc["time"] = {"T": case.time.T, "dt_hours": case.time.dt_hours}
    doc["buses"] = [{"id": b.id, "load_p": list(b.load_p), "load_q": list(b.load_q),
                     "v_min": b.v_min, "v_max": b.v_max, "shunt_g": b.shunt_g,
                     "shunt_b": b.shunt_b} for b in case.buses]
    doc["branches"] = [{"from": b.from_bus, "to": b.to_bus, "g": b.g, "b": b.b,
                        "s_max": b.s_max} for b in case.branches]
    doc["feeder"] = {"bus": case.feeder.bus, "s_max": case.feeder.s_max}
    doc["pv"] = [{"bus": u.bus, "p_min": list(u.p_min), "p_max": list(u.p_max),
                  "s_min": list(u.s_min), "s_max": list(u.s_max),
                  "pf_angle_min": u.pf_angle_min, "pf_angle_max": u.pf_angle_max,
                  "cost_per_mwh": u.cost_per_mwh} for u in case.pv]
    doc["storage"] = [{"bus": u.bus, "e_min": u.e_min, "e_max": u.e_max, "e0": u.e0,
                       "p_dis_max": u.p_dis_max, "p_chg_max": u.p_chg_max, "eta_c": u.eta_c,
                       "eta_d": u.eta_d, "cost_dis": u.cost_dis, "cost_chg": u.cost_chg}
                      for u in case.storage]
    doc["flexbuildings"] = [{"bus": u.bus, "p_min": u.p_min, "p_max": u.p_max,
                             "energy_total": u.energy_total, "cost_per_mwh": u.cost_per_mwh}
                            for u in case.flexbuildings]
    g = case.grid
    doc["grid"] = {"bus": g.bus, "p_min": g.p_min, "p_max": g.p_max, "ramp": g.ramp,
                   "cost_per_mwh": g.cost_per_mwh, "grid_load": list(g.grid_load),
                   "p_initial": g.p_initial}
    opts = {"lin_segments": case.lin_segments}
    opts.update(options or {})
    doc["options"] = opts
    return doc


def dumps_case(case: NetworkCase, options=None, name=None) -> str:
    return json.dumps(case_to_dict(case, options, name), indent=2) + "\n"


def load_case_file(path) -> CaseFile:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError("<file>", f"not valid JSON: {exc}") from None
    return case_from_dict(doc)


def load_case(path) -> NetworkCase:
    return load_case_file(path).case


def write_case(case: NetworkCase, path, options=None, name=None):
    Path(path).write_text(dumps_case(case, options, name))


def demo_case_path() -> Path:
    return Path(__file__).with_name("data") / "demo6.json"


def demo_case() -> NetworkCase:
    return load_case(demo_case_path())


class GenerationError(RuntimeError):
    """No feasible synthetic case within the retry cap."""


def _r(x, nd=4):
    return float(round(float(x), nd))


def _draw_case(rng, n_bus, n_pv, n_es, n_fb, T, segments) -> NetworkCase:
    # solar-like shape over the horizon, never exactly zero so PV always matters
    shape = 0.6 + 0.4 * np.sin(np.linspace(0.3, np.pi - 0.3, T)) if T > 1 else np.ones(1)
    buses = []
    for i in range(n_bus):
        if i == 0:
            lp = [0.0] * T
        else:
            base = rng.uniform(0.1, 0.5)
            lp = [_r(base * rng.uniform(0.8, 1.2)) for _ in range(T)]
        buses.append(Bus(i, tuple(lp), tuple(_r(0.3 * p) for p in lp)))
    branches = []
    for i in range(1, n_bus):
        parent = int(rng.integers(0, i))
        r, x = rng.uniform(0.005, 0.02), rng.uniform(0.005, 0.03)
        z2 = r * r + x * x
        branches.append(Branch(parent, i, _r(r / z2, 3), _r(-x / z2, 3),
                               _r(rng.uniform(3.0, 6.0), 2)))
    non_feeder = list(range(1, n_bus)) or [0]

    def place():
        return int(rng.choice(non_feeder))

    pv = []
    for _ in range(n_pv):
        peak = rng.uniform(0.6, 1.5)
        pmax = tuple(_r(peak * s) for s in shape)
        pv.append(PvUnit(place(), pmax, (_r(1.1 * peak),) * T, (0.0,) * T, (0.0,) * T,
                         cost_per_mwh=_r(rng.uniform(5, 15), 2)))
    storage = []
    for _ in range(n_es):
        e_max = _r(rng.uniform(1.0, 2.0))
        c_chg = _r(rng.uniform(1.0, 3.0), 2)
        storage.append(StorageUnit(place(), _r(0.1 * e_max), e_max, _r(0.5 * e_max),
                                   _r(rng.uniform(0.3, 0.6)), _r(rng.uniform(0.3, 0.6)),
                                   _r(rng.uniform(0.9, 0.97), 3), _r(rng.uniform(0.9, 0.97), 3),
                                   _r(c_chg + rng.uniform(1.0, 3.0), 2), c_chg))
    fbs = []
    for _ in range(n_fb):
        lo, hi = _r(rng.uniform(0.1, 0.3)), _r(rng.uniform(0.6, 1.0))
        fbs.append(FlexBuilding(place(), lo, hi, _r(T * (lo + hi) / 2),
                                _r(rng.uniform(0.0, 5.0), 2)))
    # alternating swings larger than the ramp limit make the cluster's
    # flexibility (storage included) worth paying for
    level, sign, load = rng.uniform(6.0, 9.0), float(rng.choice([-1.0, 1.0])), []
    for _ in range(T):
        load.append(_r(level, 3))
        level += sign * rng.uniform(1.5, 2.5)
        sign = -sign
    ramp = _r(rng.uniform(0.8, 1.5), 2)
    grid = GridUnit(0, 0.0, 50.0, ramp, _r(rng.uniform(40, 60), 2), tuple(load))
    return NetworkCase(TimeGrid(T), tuple(buses), tuple(branches), FeederLink(0, 10.0), grid,
                       tuple(pv), tuple(storage), tuple(fbs), segments)


def gen_case(seed: int = 0, n_bus: int = 6, n_pv: int = 2, n_es: int = 1, n_fb: int = 1,
             T: int = 3, lin_segments: int = DEFAULT_SEGMENTS, max_tries: int = 50) -> NetworkCase:
    """Seeded synthetic radial cluster.

    Bus 0 is the feeder.  Storage prices always satisfy the relaxation
    conditions.  Every draw is checked with a feasibility LP on the cluster
    and on the joint cluster plus grid problem, with and without PV, before
    it is returned.
    """
    from .dispatch import DispatchInfeasibleError, centralized_ed
    from .network import EmptyRegionError, assemble_polyhedron

    if n_bus < 1 or T < 1 or min(n_pv, n_es, n_fb) < 0:
        raise ValueError("sizes must be >= 1 bus, >= 1 slot, nonnegative fleets")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        case = _draw_case(rng, n_bus, n_pv, n_es, n_fb, T, lin_segments)
        try:
            case.validate()
            assemble_polyhedron(case)
            centralized_ed(case)
            # also feasible with PV removed, so capacity sweeps start from a valid case
            centralized_ed(scale_pv(case, 0.0))
        except (ValidationError, EmptyRegionError, DispatchInfeasibleError):
            continue
        if validate_relaxation_conditions(case).ok:
            return case
    raise GenerationError(f"no feasible case after {max_tries} draws (seed {seed})")
