import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import rows_extreme, rows_polyhedron, single_bus_case
from dcsagg.linear import Var, eq
from dcsagg.model import (FlexBuilding, GridUnit, NetworkCase, PvUnit, StorageUnit, TimeGrid,
                          ValidationError, dcs_cost_expression, flexbuilding_constraints,
                          pv_constraints, storage_constraints, validate_relaxation_conditions)
from dcsagg.oracle import lp_extreme_points

P0, Q0 = Var("pv_p", 0, 0), Var("pv_q", 0, 0)


def fix(v, value):
    return eq({v: 1.0}, value)


# pv ------------------------------------------------------------------------

def test_pv_zero_output_forces_zero_q():
    unit = PvUnit(0, p_max=(0.0,), s_max=(1.0,))
    rows = pv_constraints(unit, TimeGrid(1))
    assert rows_extreme(rows, [Q0], [1.0])[0] == pytest.approx(0.0, abs=1e-12)
    assert rows_extreme(rows, [Q0], [-1.0])[0] == pytest.approx(0.0, abs=1e-12)


def test_pv_45_degree_cone_corners():
    unit = PvUnit(0, p_max=(1.0,), s_max=(10.0,), pf_angle_min=-np.pi / 4, pf_angle_max=np.pi / 4)
    rows = pv_constraints(unit, TimeGrid(1))
    _, y = rows_extreme(rows, [P0, Q0], [1.0, 1.0])
    np.testing.assert_allclose(y, [1.0, 1.0], atol=1e-9)
    _, y = rows_extreme(rows, [P0, Q0], [1.0, -1.0])
    np.testing.assert_allclose(y, [1.0, -1.0], atol=1e-9)


def test_pv_region_matches_sampling():
    n = 16
    unit = PvUnit(0, p_max=(1.0,), s_max=(1.0,), pf_angle_min=-np.pi / 4, pf_angle_max=np.pi / 4)
    om = rows_polyhedron(pv_constraints(unit, TimeGrid(1), segments=n), [P0, Q0])
    assert om.n_x == 0
    rng = np.random.default_rng(0)
    Y = rng.uniform(-1.1, 1.1, size=(100_000, 2))
    inside_poly = np.all(Y @ om.B.T <= om.d + 1e-12, axis=1)
    p, q = Y[:, 0], Y[:, 1]
    cone = (p >= 0) & (p <= 1) & (np.abs(q) <= p)
    inside_disc = cone & (p ** 2 + q ** 2 <= 1.0)
    inside_inner = cone & (np.hypot(p, q) <= np.cos(np.pi / n))
    # the inscribed polygon sits between the apothem disc and the true disc
    assert np.all(inside_poly <= inside_disc)
    assert np.all(inside_inner <= inside_poly)


def test_pv_rejects_bad_bounds():
    with pytest.raises(ValidationError, match="p_min"):
        pv_constraints(PvUnit(0, p_max=(1.0,), s_max=(1.0,), p_min=(2.0,)), TimeGrid(1))
    with pytest.raises(ValidationError, match="s_min"):
        pv_constraints(PvUnit(0, p_max=(1.0,), s_max=(1.0,), s_min=(0.1,)), TimeGrid(1))


# storage -------------------------------------------------------------------

def es(kind, t):
    return Var(kind, 0, t)


def test_storage_lossless_bookkeeping():
    unit = StorageUnit(0, e_min=0, e_max=5, e0=0, p_dis_max=2, p_chg_max=2)
    rows = storage_constraints(unit, TimeGrid(2))
    rows += [fix(es("es_chg", 0), 1.0), fix(es("es_dis", 0), 0.0)]
    for s in (1.0, -1.0):
        v, _ = rows_extreme(rows, [es("es_energy", 0)], [s])
        assert s * v == pytest.approx(1.0)


def test_storage_cyclic_single_slot_nets_zero():
    unit = StorageUnit(0, e_min=0, e_max=5, e0=1, p_dis_max=2, p_chg_max=2)
    rows = storage_constraints(unit, TimeGrid(1))
    keys = [es("es_dis", 0), es("es_chg", 0)]
    for d in ([1.0, -1.0], [-1.0, 1.0]):
        v, _ = rows_extreme(rows, keys, d)
        assert v == pytest.approx(0.0, abs=1e-12)


def test_storage_lossy_round_trip():
    unit = StorageUnit(0, e_min=0, e_max=5, e0=1, p_dis_max=2, p_chg_max=2, eta_c=0.9, eta_d=0.8)
    rows = storage_constraints(unit, TimeGrid(2))
    rows += [fix(es("es_chg", 0), 1.0), fix(es("es_dis", 0), 0.0), fix(es("es_chg", 1), 0.0)]
    for s in (1.0, -1.0):
        v, _ = rows_extreme(rows, [es("es_dis", 1)], [s])
        assert s * v == pytest.approx(0.72)


def test_storage_output_identity():
    unit = StorageUnit(0, e_min=0, e_max=5, e0=2, p_dis_max=2, p_chg_max=2)
    rows = storage_constraints(unit, TimeGrid(2))
    rows += [fix(es("es_dis", 0), 1.5), fix(es("es_chg", 0), 0.25)]
    v, _ = rows_extreme(rows, [es("es_out", 0)], [1.0])
    assert v == pytest.approx(1.25)


def test_storage_rejects_e0_outside():
    with pytest.raises(ValidationError, match="e0"):
        storage_constraints(StorageUnit(0, 0, 1, 2, 1, 1), TimeGrid(1))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.floats(0.7, 1.0), st.floats(0.7, 1.0), st.integers(0, 10_000))
def test_storage_trajectory_stays_in_band(T, eta_c, eta_d, seed):
    unit = StorageUnit(0, e_min=0.5, e_max=2.0, e0=1.0, p_dis_max=1.0, p_chg_max=1.0,
                       eta_c=eta_c, eta_d=eta_d)
    rows = storage_constraints(unit, TimeGrid(T))
    keys = [es("es_dis", t) for t in range(T)] + [es("es_chg", t) for t in range(T)]
    d = np.random.default_rng(seed).normal(size=2 * T)
    _, y = rows_extreme(rows, keys, d)
    pd, pc = y[:T], y[T:]
    e, traj = unit.e0, []
    for t in range(T):
        e = e + eta_c * pc[t] - pd[t] / eta_d
        traj.append(e)
    assert min(traj) >= unit.e_min - 1e-9 and max(traj) <= unit.e_max + 1e-9
    assert traj[-1] == pytest.approx(unit.e0, abs=1e-9)


# flexible buildings --------------------------------------------------------

def fb(t):
    return Var("fb_p", 0, t)


def test_flexbuilding_degenerate_box_is_a_point():
    rows = flexbuilding_constraints(FlexBuilding(0, 0.5, 0.5, 1.5), TimeGrid(3))
    keys = [fb(t) for t in range(3)]
    for d in np.eye(3).tolist() + (-np.eye(3)).tolist():
        _, y = rows_extreme(rows, keys, d)
        np.testing.assert_allclose(y, 0.5, atol=1e-12)


def test_flexbuilding_segment_endpoints():
    rows = flexbuilding_constraints(FlexBuilding(0, 0.0, 2.0, 2.0), TimeGrid(2))
    keys = [fb(0), fb(1)]
    np.testing.assert_allclose(rows_extreme(rows, keys, [1, 0])[1], [2, 0], atol=1e-12)
    np.testing.assert_allclose(rows_extreme(rows, keys, [0, 1])[1], [0, 2], atol=1e-12)


def test_flexbuilding_slice_vertices_match_fme():
    from dcsagg.oracle import FmeSystem, fme_eliminate
    rows = flexbuilding_constraints(FlexBuilding(0, 0.0, 1.0, 2.0), TimeGrid(3))
    keys = [fb(t) for t in range(3)]
    om = rows_polyhedron(rows, keys)
    # vertices by brute force on the 3-variable slice: the permutations of (1, 1, 0)
    found = {tuple(np.round(rows_extreme(rows, keys, d)[1], 9))
             for d in np.random.default_rng(1).normal(size=(200, 3))}
    assert found == {(1.0, 1.0, 0.0), (1.0, 0.0, 1.0), (0.0, 1.0, 1.0)}
    # FME eliminating fb_2 after substituting the total leaves the 2-D triangle image
    A = np.vstack([om.B, om.B_eq, -om.B_eq])
    b = np.concatenate([om.d, om.d_eq, -om.d_eq])
    proj = fme_eliminate(FmeSystem(A, b, ["p0", "p1", "p2"]), "p2")
    for v in found:
        assert proj.contains(np.array(v[:2]))
    assert not proj.contains(np.array([1.0, 1.0 + 1e-3]))
    assert not proj.contains(np.array([0.5, 0.4]))


def test_flexbuilding_nonempty_iff_energy_in_range():
    for total, ok in [(0.0, True), (3.0, True), (3.01, False), (-0.01, False)]:
        unit = FlexBuilding(0, 0.0, 1.0, total)
        if ok:
            flexbuilding_constraints(unit, TimeGrid(3))
        else:
            with pytest.raises(ValidationError, match="energy_total"):
                flexbuilding_constraints(unit, TimeGrid(3))


# cost and relaxation conditions --------------------------------------------

def test_cost_expression_zero_and_dot_product():
    case = single_bus_case(T=3, pv=(PvUnit(0, p_max=(5.0,), s_max=(5.0,)),))
    assert all(c == 0 for c in dcs_cost_expression(case).values())
    case = single_bus_case(T=3, pv=(PvUnit(0, p_max=(5.0,), s_max=(5.0,), cost_per_mwh=10.0),))
    expr = dcs_cost_expression(case)
    value = sum(c * [1.0, 2.0, 3.0][v.slot] for v, c in expr.items())
    assert value == pytest.approx(60.0)


def test_cost_expression_matches_per_device_sum():
    case = single_bus_case(
        T=2, pv=(PvUnit(0, p_max=(2.0,), s_max=(2.0,), cost_per_mwh=3.0),),
        storage=(StorageUnit(0, 0, 2, 1, 1, 1, cost_dis=7.0, cost_chg=2.0),),
        flexbuildings=(FlexBuilding(0, 0.0, 1.0, 1.0, cost_per_mwh=4.0),))
    case = NetworkCase(TimeGrid(2, 0.5), case.buses, case.branches, case.feeder, case.grid,
                       case.pv, case.storage, case.flexbuildings)
    expr = dcs_cost_expression(case)
    rng = np.random.default_rng(3)
    vals = {v: rng.uniform(0, 1) for v in expr}
    direct = sum(0.5 * (3.0 * vals[Var("pv_p", 0, t)] + 7.0 * vals[Var("es_dis", 0, t)]
                        + 2.0 * vals[Var("es_chg", 0, t)] + 4.0 * vals[Var("fb_p", 0, t)])
                 for t in range(2))
    assert sum(c * vals[v] for v, c in expr.items()) == pytest.approx(direct)
    assert all(c >= 0 for c in expr.values())


@pytest.mark.parametrize("dis,chg,ok_i,ok_ii", [(5, 3, True, True), (2, 3, False, True),
                                                (70, 60, True, False)])
def test_relaxation_conditions(dis, chg, ok_i, ok_ii):
    case = single_bus_case(storage=(StorageUnit(0, 0, 1, 0.5, 1, 1, cost_dis=dis, cost_chg=chg),),
                           cost=50.0)
    rep = validate_relaxation_conditions(case)
    u = rep.units[0]
    assert (u.discharge_covers_charge, u.charge_below_price) == (ok_i, ok_ii)
    assert rep.ok == (ok_i and ok_ii)


def test_row_counts_are_deterministic():
    from dcsagg.model import device_constraints
    case = single_bus_case(T=3, pv=(PvUnit(0, p_max=(1.0,), s_max=(1.0,)),),
                           storage=(StorageUnit(0, 0, 1, 0.5, 1, 1),),
                           flexbuildings=(FlexBuilding(0, 0.0, 1.0, 1.0),))
    rows = device_constraints(case)
    assert len(rows) == 3 * (2 + 12 + 2) + (3 * 8 + 1) + (3 * 2 + 1)
    assert [r.tag for r in rows] == [r.tag for r in device_constraints(case)]


def test_case_validation_paths():
    case = single_bus_case()
    with pytest.raises(ValidationError) as e:
        NetworkCase(case.time, case.buses, case.branches, case.feeder,
                    GridUnit(0, 0, 1, -1, 1, (0, 0))).validate()
    assert e.value.path == "grid.ramp"
    with pytest.raises(ValidationError):
        TimeGrid(0)
