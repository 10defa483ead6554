import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from dcsagg.network import Polyhedron, assemble_polyhedron
from dcsagg.oracle import (FmeSystem, HullMembership, OracleScaleError, fme_eliminate,
                           fme_project, in_convex_hull, membership, polygon_vertices,
                           support_sample)
import dcsagg.oracle as oracle


def rowset(sys):
    return {tuple(np.round(np.append(a, b), 9) + 0.0) for a, b in zip(sys.A, sys.b)}


def test_hand_elimination():
    s = FmeSystem([[1, 1], [-1, 0], [0, -1]], [1, 0, 0], ["x", "y"])
    out = fme_eliminate(s, "x")
    assert out.names == ["y"]
    assert rowset(out) == {(1.0, 1.0), (-1.0, 0.0)}


def test_absent_variable_leaves_rows():
    s = FmeSystem([[0, 1, 2], [0, -1, 0], [0, 0, -1]], [4, 0, 0], ["x", "y", "z"])
    out = fme_eliminate(s, 0)
    assert rowset(out) == {tuple(np.round(np.append(a[1:], b), 9) + 0.0)
                           for a, b in zip(s.A, s.b)}


def test_rows_normalised():
    s = FmeSystem([[4, -2], [0.5, 0.25]], [8, 1], ["x", "y"])
    np.testing.assert_allclose(np.abs(s.A).max(axis=1), 1.0)


def test_duplicate_and_dominated_rows_dropped():
    s = FmeSystem([[1, 0], [2, 0], [1, 0]], [1, 1, 3], ["x", "y"])
    assert rowset(s) == {(1.0, 0.0, 0.5)}


def test_row_cap(monkeypatch):
    monkeypatch.setattr(oracle, "ROW_CAP", 3)
    s = FmeSystem([[1, 0], [1, 1], [-1, 0], [-1, 1]], [1, 1, 1, 1], ["x", "y"])
    with pytest.raises(OracleScaleError):
        fme_eliminate(s, "x")


def exists_x(A, b, n_keep, z):
    n_x = A.shape[1] - n_keep
    res = linprog(np.zeros(n_x), A_ub=A[:, :n_x], b_ub=b - A[:, n_x:] @ z, bounds=(None, None),
                  method="highs")
    return res.status == 0


def random_system(seed, n=5, m=14):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m, n))
    b = rng.uniform(0.5, 1.5, size=m)
    A = np.vstack([A, np.eye(n), -np.eye(n)])
    return A, np.concatenate([b, np.full(2 * n, 2.0)])


@pytest.mark.parametrize("seed", [0, 1])
def test_projection_membership_matches_lp(seed):
    A, b = random_system(seed)
    names = [f"v{k}" for k in range(5)]
    s = FmeSystem(A, b, names)
    for v in names[:3]:
        s = fme_eliminate(s, v)
    Z = np.random.default_rng(100 + seed).uniform(-2.2, 2.2, size=(1000, 2))
    agree = [s.contains(z, 1e-9) == exists_x(A, b, 2, z) for z in Z]
    assert all(agree)


def test_elimination_order_independent():
    A, b = random_system(3)
    names = [f"v{k}" for k in range(5)]
    s1 = s2 = FmeSystem(A, b, names)
    for v in ["v0", "v1", "v2"]:
        s1 = fme_eliminate(s1, v)
    for v in ["v2", "v0", "v1"]:
        s2 = fme_eliminate(s2, v)
    Z = np.random.default_rng(4).uniform(-2.2, 2.2, size=(2000, 2))
    for z in Z:
        assert s1.contains(z, 1e-9) == s2.contains(z, 1e-9)


def unit_box():
    B = np.vstack([np.eye(2), -np.eye(2)])
    return Polyhedron.from_inequalities(None, B, [1, 1, 0, 0])


def test_support_of_box_and_homogeneity():
    om = unit_box()
    assert support_sample(om, [[1, 0]])[0] == pytest.approx(1.0)
    D = np.random.default_rng(0).normal(size=(10, 2))
    np.testing.assert_allclose(support_sample(om, 2 * D), 2 * support_sample(om, D))


def test_support_unbounded_flagged():
    om = Polyhedron.from_inequalities(None, [[-1.0, 0.0]], [0.0])
    assert np.isinf(support_sample(om, [[1.0, 0.0]])[0])


def test_membership_inside_and_outside(small_case):
    om = assemble_polyhedron(small_case)
    from dcsagg.pve import search_vertex
    v = search_vertex(om, np.ones(om.n_y))
    m = membership(v, om)
    assert m.inside and m.residual <= 1e-7
    far = v.copy()
    far[0] = small_case.feeder.s_max + 1.0
    m = membership(far, om)
    assert not m.inside and m.residual > 0
    with pytest.raises(ValueError):
        membership(v[:1], om)


def test_fme_project_of_small_case_t1():
    from dcsagg.casefile import gen_case
    om = assemble_polyhedron(gen_case(5, n_bus=4, n_pv=1, T=1))
    s = fme_project(om)
    P = polygon_vertices(s)
    assert len(P) >= 3
    for p in P:
        assert membership(p, om).residual <= 1e-7
    # support of the polygon matches the LP support of the projection
    D = np.random.default_rng(2).normal(size=(30, 2))
    np.testing.assert_allclose((P @ D.T).max(axis=0), support_sample(om, D), rtol=1e-7, atol=1e-7)


def test_convex_hull_membership():
    V = np.array([[0, 0], [1, 0], [0, 1]], dtype=float)
    assert in_convex_hull(V, [0.2, 0.2]) and not in_convex_hull(V, [0.6, 0.6])
    hm = HullMembership(V)
    assert hm([0.2, 0.2]) and not hm([0.6, 0.6])
    assert hm.residual([0.6, 0.6]) == pytest.approx(0.2)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_hull_membership_agrees(seed):
    rng = np.random.default_rng(seed)
    V = rng.normal(size=(10, 3))
    hm = HullMembership(V)
    for q in rng.normal(size=(10, 3)):
        assert hm(q, 1e-8) == in_convex_hull(V, q, 1e-8)
