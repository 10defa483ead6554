import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dcsagg.hull import (DegenerateDimensionError, NumericalDegeneracyError, affine_rank,
                         facet_normal, hull_halfspaces, quickhull)
from dcsagg.oracle import in_convex_hull, lp_extreme_points

SQUARE = np.array([[0, 0], [1, 0], [0, 1], [1, 1], [0.5, 0.5]], dtype=float)


def as_set(V, nd=9):
    return {tuple(np.round(v, nd)) for v in V}


def test_square_with_center():
    h = quickhull(SQUARE)
    assert h.n_vertices == 4 and h.n_facets == 4
    assert (0.5, 0.5) not in as_set(h.vertices)


def test_standard_simplex_3d():
    h = quickhull(np.vstack([np.zeros(3), np.eye(3)]))
    assert h.n_vertices == 4 and h.n_facets == 4


def test_duplicates_are_dropped():
    h = quickhull(np.vstack([SQUARE, SQUARE]))
    assert h.n_vertices == 4


def test_degenerate_input_reports_rank():
    with pytest.raises(DegenerateDimensionError) as e:
        quickhull([[0, 0, 0], [1, 1, 0], [2, 0, 0], [3, 3, 0]])
    assert e.value.rank == 2
    with pytest.raises(DegenerateDimensionError) as e:
        quickhull([[1.0, 2.0]] * 3)
    assert e.value.rank == 0


def test_affine_rank_of_segment():
    r, origin, basis, comp = affine_rank([[0, 0, 0], [1, 1, 1], [2, 2, 2]])
    assert r == 1 and basis.shape == (3, 1) and comp.shape == (3, 2)
    np.testing.assert_allclose(abs(basis[:, 0]), 1 / np.sqrt(3))


def test_facet_normal_2d():
    alpha, b = facet_normal([[1, 0], [0, 1]], interior=[0, 0])
    np.testing.assert_allclose(alpha, [1, 1])
    assert b == pytest.approx(1.0)


def test_facet_normal_flips_towards_interior():
    # interior beyond the plane: sigma >= 0 flips the row so the interior stays inside
    alpha, b = facet_normal([[1, 0], [0, 1]], interior=[2, 2], origin=[0, 0])
    np.testing.assert_allclose(alpha, [-1, -1])
    assert b == pytest.approx(-1.0)
    assert alpha @ [2, 2] < b


def test_facet_normal_singular_block():
    with pytest.raises(NumericalDegeneracyError):
        facet_normal([[1, 0], [2, 0]], interior=[0, 0])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_facet_normal_random_simplex(seed):
    V = np.random.default_rng(seed).normal(size=(4, 3))
    c = V.mean(axis=0)
    for k in range(4):
        face = np.delete(V, k, axis=0)
        alpha, b = facet_normal(face, c)
        np.testing.assert_allclose(face @ alpha, b, atol=1e-10 * max(1, abs(b)))
        assert alpha @ V[k] <= b + 1e-10
        assert alpha @ c < b


def test_square_halfspaces():
    A, b = hull_halfspaces(quickhull(SQUARE))
    assert len(b) == 4
    # rows are the box |x - 1/2| <= 1/2 up to scaling
    rows = {tuple(np.round(np.append(a, o) / np.abs(a).max(), 9)) for a, o in zip(A, b)}
    assert rows == {(1, 0, 1), (0, 1, 1), (-1, 0, 0), (0, -1, 0)}


def test_vertices_classified_inside():
    h = quickhull(np.random.default_rng(0).normal(size=(40, 3)))
    assert np.all(h.contains(h.vertices))


def test_extreme_points_match_lp_oracle_4d():
    P = np.random.default_rng(4).normal(size=(50, 4))
    h = quickhull(P)
    assert as_set(h.vertices) == as_set(P[lp_extreme_points(P)])


def test_halfspaces_match_lp_membership():
    rng = np.random.default_rng(9)
    P = rng.normal(size=(25, 3))
    h = quickhull(P)
    A, b = hull_halfspaces(h)
    Q = rng.normal(scale=1.2, size=(300, 3))
    inside_h = np.all(Q @ A.T <= b + 1e-8, axis=1)
    inside_lp = np.array([in_convex_hull(h.vertices, q, 1e-8) for q in Q])
    assert np.array_equal(inside_h, inside_lp)


point_sets = st.tuples(st.integers(2, 4), st.integers(0, 10_000)).map(
    lambda a: np.random.default_rng(a[1]).normal(size=(8 + 6 * a[0], a[0])))


@settings(max_examples=40, deadline=None)
@given(point_sets, st.integers(0, 10_000))
def test_permutation_invariant(P, seed):
    h1 = quickhull(P)
    h2 = quickhull(np.random.default_rng(seed).permutation(P))
    np.testing.assert_array_equal(h1.vertices, h2.vertices)


@settings(max_examples=40, deadline=None)
@given(point_sets)
def test_idempotent(P):
    h = quickhull(P)
    np.testing.assert_array_equal(quickhull(h.vertices).vertices, h.vertices)


@settings(max_examples=40, deadline=None)
@given(point_sets)
def test_facet_invariants(P):
    h = quickhull(P)
    slack = h.vertices @ h.normals.T - h.offsets
    assert slack.max() <= 1e-8
    assert np.all(h.offsets - h.normals @ h.interior_point > 0)
    # every facet has dim incident vertices
    incident = (np.abs(slack) <= 1e-8).sum(axis=0)
    assert np.all(incident >= h.dim)
    assert np.all(h.contains(P))
