"""Convex hulls of point sets in a few dimensions.

``quickhull`` is an incremental beneath-beyond Quickhull with outside sets.
Facet planes come from ``alpha = (V - c)^{-1} 1`` where the rows of ``V`` are
the facet's points and ``c`` a point strictly inside the hull, so the plane
``alpha.(x - c) = 1`` never passes through the shift origin.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np
import scipy.linalg

__all__ = [
    "DegenerateDimensionError", "NumericalDegeneracyError", "VertexHull",
    "affine_rank", "facet_normal", "hull_halfspaces", "quickhull",
]

RANK_TOL = 1e-10
INCIDENCE_TOL = 1e-8


class DegenerateDimensionError(ValueError):
    """Points (or a region) span fewer dimensions than the ambient space.

    ``rank`` is the affine rank; ``origin``/``basis`` describe the affine hull
    when known (``origin + basis @ z``).
    """

    def __init__(self, rank: int, dim: int, origin=None, basis=None, message: str = ""):
        super().__init__(message or f"affine rank {rank} < dimension {dim}")
        self.rank = rank
        self.dim = dim
        self.origin = origin
        self.basis = basis


class NumericalDegeneracyError(ArithmeticError):
    """A facet block is singular after the centroid shift."""


def affine_rank(points, rel_tol: float = RANK_TOL):
    """Affine rank of ``points`` by pivoted QR.

    Returns ``(rank, origin, basis, complement)``: the centroid, an
    orthonormal basis of the affine hull's direction space, and of its
    orthogonal complement.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    origin = P.mean(axis=0)
    X = (P - origin).T
    d = X.shape[0]
    if P.shape[0] < 2 or not np.any(X):
        return 0, origin, np.zeros((d, 0)), np.eye(d)
    Q, R, _ = scipy.linalg.qr(X, pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rel_tol * max(diag[0], 1e-300)))
    return rank, origin, Q[:, :rank], Q[:, rank:]


def facet_normal(points, interior, origin=None):
    """Outward normal ``alpha`` and offset ``b`` of the plane through ``points``.

    In coordinates shifted by ``origin`` (default: ``interior``) the plane is
    ``alpha.x = 1`` with ``alpha`` solving ``V alpha = 1``.  With
    ``sigma = alpha.V0 - 1`` for the shifted interior point ``V0``, a
    nonnegative ``sigma`` means ``V0`` is on the far side, so the sign flips
    to ``alpha.x <= -1``.  The returned pair is in original coordinates:
    ``alpha.x <= b`` holds on the hull.
    """
    V = np.atleast_2d(np.asarray(points, dtype=float))
    c = np.asarray(interior, dtype=float)
    o = c if origin is None else np.asarray(origin, dtype=float)
    M = V - o
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"need {M.shape[1]} points for a facet, got {M.shape[0]}")
    try:
        alpha = np.linalg.solve(M, np.ones(M.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise NumericalDegeneracyError("facet block is singular") from exc
    if not np.all(np.isfinite(alpha)) or np.linalg.cond(M) > 1e13:
        raise NumericalDegeneracyError("facet block is singular")
    sigma = alpha @ (c - o) - 1.0
    b = 1.0
    if sigma >= 0:
        alpha, b = -alpha, -1.0
    return alpha, b + alpha @ o


def _unit_planes(Pc, simplices):
    """Unit normals and offsets, relative to the shift origin, of many facets at once."""
    M = Pc[np.asarray(simplices)]
    alpha = np.linalg.solve(M, np.ones(M.shape[:2])[..., None])[..., 0]
    norm = np.linalg.norm(alpha, axis=1)
    return alpha / norm[:, None], 1.0 / norm


@dataclass
class VertexHull:
    """V- and H-representation of a polytope.

    ``normals``/``offsets`` are unit outward facet rows (``n.x <= b``), one per
    simplicial facet listed in ``simplices`` (indices into ``vertices``).  A
    hull of a lower-dimensional set additionally carries equality rows
    ``eq_normals @ x == eq_offsets`` spanning the complement of its affine hull.
    """

    dim: int
    vertices: np.ndarray
    simplices: np.ndarray
    normals: np.ndarray
    offsets: np.ndarray
    interior_point: np.ndarray
    rank: Optional[int] = None
    eq_normals: np.ndarray = field(default=None)
    eq_offsets: np.ndarray = field(default=None)
    witnesses: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.rank is None:
            self.rank = self.dim
        if self.eq_normals is None:
            self.eq_normals = np.zeros((0, self.dim))
            self.eq_offsets = np.zeros(0)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_facets(self) -> int:
        return len(self.offsets)

    def violation(self, points) -> np.ndarray:
        """Per-point largest violation of the facet and equality rows."""
        X = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.full(X.shape[0], -np.inf)
        if self.n_facets:
            out = np.max(X @ self.normals.T - self.offsets, axis=1)
        if len(self.eq_offsets):
            out = np.maximum(out, np.max(np.abs(X @ self.eq_normals.T - self.eq_offsets), axis=1))
        return out

    def contains(self, points, tol: float = INCIDENCE_TOL) -> np.ndarray:
        return self.violation(points) <= tol

    def support(self, direction) -> float:
        return float(np.max(self.vertices @ np.asarray(direction, dtype=float)))

    def bbox_diagonal(self) -> float:
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))

    def lift(self, origin, basis, complement) -> "VertexHull":
        """Map a hull in reduced coordinates ``z`` to ``origin + basis @ z``."""
        origin = np.asarray(origin, dtype=float)
        V = origin + self.vertices @ basis.T
        normals = self.normals @ basis.T
        offsets = self.offsets + normals @ origin
        W = complement.T
        return replace(self, dim=len(origin), vertices=V, normals=normals, offsets=offsets,
                       interior_point=origin + basis @ self.interior_point,
                       rank=basis.shape[1], eq_normals=W, eq_offsets=W @ origin)


def point_hull(point) -> VertexHull:
    """Hull of a single point (rank 0)."""
    p = np.asarray(point, dtype=float).ravel()
    d = p.size
    return VertexHull(d, p[None, :], np.zeros((0, 0), dtype=int), np.zeros((0, d)), np.zeros(0),
                      p.copy(), rank=0, eq_normals=np.eye(d), eq_offsets=p.copy())


class _Facet:
    __slots__ = ("verts", "normal", "offset", "neighbors", "outside", "outdist",
                 "alive", "visit", "vis")

    def __init__(self, verts, normal, offset):
        self.verts = verts
        self.normal = normal
        self.offset = offset
        self.neighbors: List[Optional[_Facet]] = [None] * len(verts)
        self.outside = None
        self.outdist = None
        self.alive = True
        self.visit = -1
        self.vis = -1


def _initial_simplex(P):
    span = P.max(axis=0) - P.min(axis=0)
    j = int(np.argmax(span))
    simplex = [int(np.argmin(P[:, j])), int(np.argmax(P[:, j]))]
    d = P.shape[1]
    for _ in range(2, d + 1):
        base = P[simplex[0]]
        Q, _ = np.linalg.qr((P[simplex[1:]] - base).T)
        R = P - base
        R = R - (R @ Q) @ Q.T
        simplex.append(int(np.argmax(np.einsum("ij,ij->i", R, R))))
    return simplex


def _build(P, tol):
    """Simplicial facets of conv(P); ``P`` full-dimensional, rows unique."""
    n, d = P.shape
    simplex = _initial_simplex(P)
    center = P[simplex].mean(axis=0)
    Pc = P - center
    facets = []
    for k in range(d + 1):
        facets.append(tuple(simplex[:k] + simplex[k + 1:]))
    normals, offsets = _unit_planes(Pc, facets)
    objs = [_Facet(v, normals[k], offsets[k]) for k, v in enumerate(facets)]
    for k, f in enumerate(objs):
        # facet k omits simplex[k]; its ridge opposite verts[m] is shared with the
        # facet omitting that vertex
        others = [objs[m] for m in range(d + 1) if m != k]
        f.neighbors = others

    rest = np.setdiff1d(np.arange(n), simplex)
    _assign(objs, rest, Pc, tol)
    queue = deque(f for f in objs if f.outside is not None)
    stamp = 0
    all_facets = list(objs)
    while queue:
        F = queue.popleft()
        if not F.alive or F.outside is None:
            continue
        p = int(F.outside[np.argmax(F.outdist)])
        x = Pc[p]
        stamp += 1
        F.visit = F.vis = stamp
        visible = [F]
        k = 0
        while k < len(visible):
            G = visible[k]
            k += 1
            for nb in G.neighbors:
                if nb.visit != stamp:
                    nb.visit = stamp
                    if nb.normal @ x - nb.offset > tol:
                        nb.vis = stamp
                        visible.append(nb)
        new_verts, horizon = [], []
        for G in visible:
            for m, nb in enumerate(G.neighbors):
                if nb.vis != stamp:
                    new_verts.append(G.verts[:m] + G.verts[m + 1:] + (p,))
                    horizon.append((G, nb))
        normals, offsets = _unit_planes(Pc, new_verts)
        new = []
        ridges = {}
        for j, verts in enumerate(new_verts):
            f = _Facet(verts, normals[j], offsets[j])
            G, nb = horizon[j]
            f.neighbors[d - 1] = nb
            nb.neighbors[nb.neighbors.index(G)] = f
            for m in range(d - 1):
                key = frozenset(verts[:m] + verts[m + 1:])
                other = ridges.pop(key, None)
                if other is None:
                    ridges[key] = (f, m)
                else:
                    g, mm = other
                    f.neighbors[m] = g
                    g.neighbors[mm] = f
            new.append(f)
        if ridges:
            raise NumericalDegeneracyError("horizon is not a closed ridge cycle")
        pool = []
        for G in visible:
            G.alive = False
            if G.outside is not None:
                pool.append(G.outside)
        pool = np.concatenate(pool)
        pool = pool[pool != p]
        _assign(new, pool, Pc, tol)
        all_facets.extend(new)
        queue.extend(f for f in new if f.outside is not None)
    alive = [f for f in all_facets if f.alive]
    return alive


def _assign(facets, pts, Pc, tol):
    """Give each point to the facet it lies furthest above, if any by more than ``tol``."""
    if len(pts) == 0:
        return
    N = np.array([f.normal for f in facets])
    off = np.array([f.offset for f in facets])
    dist = Pc[pts] @ N.T - off
    best = np.argmax(dist, axis=1)
    bd = dist[np.arange(len(pts)), best]
    out = bd > tol
    pts, best, bd = pts[out], best[out], bd[out]
    for k in np.unique(best):
        sel = best == k
        facets[k].outside = pts[sel]
        facets[k].outdist = bd[sel]


def _non_extreme(P, facets, d, rel_tol=1e-9):
    """Indices of hull vertices whose incident facet normals do not span R^d."""
    incident = {}
    for f in facets:
        for v in f.verts:
            incident.setdefault(v, []).append(f.normal)
    bad = []
    for v, ns in incident.items():
        s = np.linalg.svd(np.array(ns), compute_uv=False)
        if len(s) < d or s[d - 1] <= rel_tol * s[0]:
            bad.append(v)
    return bad


def quickhull(points, tol: Optional[float] = None) -> VertexHull:
    """Convex hull of ``points`` (``n x d``).

    Exact duplicates are dropped.  Raises :class:`DegenerateDimensionError`
    when the points do not span ``d`` dimensions.  The returned vertex set is
    sorted lexicographically, so it does not depend on input order.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if P.size == 0:
        raise DegenerateDimensionError(-1, P.shape[1] if P.ndim == 2 else 0, message="no points")
    if not np.all(np.isfinite(P)):
        raise ValueError("non-finite coordinates")
    P = np.unique(P, axis=0)
    n, d = P.shape
    rank, origin, basis, _ = affine_rank(P)
    if rank < d:
        raise DegenerateDimensionError(rank, d, origin, basis)
    span = float(np.max(P.max(axis=0) - P.min(axis=0)))
    if tol is None:
        tol = 1e-11 * span
    if d == 1:
        V = np.array([P.min(axis=0), P.max(axis=0)])
        simp = np.array([[0], [1]])
    else:
        while True:
            facets = _build(P, tol)
            bad = _non_extreme(P, facets, d)
            if not bad:
                break
            keep = np.setdiff1d(np.unique([v for f in facets for v in f.verts]), bad)
            P = P[keep]
        used = np.unique([v for f in facets for v in f.verts])
        remap = -np.ones(n, dtype=int)
        remap[used] = np.arange(used.size)
        V = P[used]
        simp = np.array([[remap[v] for v in f.verts] for f in facets])
    return _finish(V, simp)


def _finish(V, simplices) -> VertexHull:
    """Facet rows from the vertex centroid, following the shifted-normal rule."""
    d = V.shape[1]
    center = V.mean(axis=0)
    Vc = V - center
    try:
        normals, offs = _unit_planes(Vc, simplices)
    except np.linalg.LinAlgError as exc:
        raise NumericalDegeneracyError("singular facet block after centroid shift") from exc
    offsets = offs + normals @ center
    order = np.lexsort(np.column_stack([normals, offsets]).T[::-1])
    return VertexHull(d, V, simplices[order], normals[order], offsets[order], center)


def hull_halfspaces(h: VertexHull, decimals: int = 9):
    """Stacked facet rows ``A x <= b`` with coplanar simplicial facets merged.

    For a lower-dimensional hull the affine-hull equalities are returned as
    pairs of opposite inequalities.
    """
    A, b = h.normals, h.offsets
    if len(b):
        scale = max(1.0, float(np.max(np.abs(h.vertices))))
        key = np.round(np.column_stack([A, b / scale]), decimals)
        _, first = np.unique(key, axis=0, return_index=True)
        first = np.sort(first)
        A, b = A[first], b[first]
    if len(h.eq_offsets):
        A = np.vstack([A, h.eq_normals, -h.eq_normals])
        b = np.concatenate([b, h.eq_offsets, -h.eq_offsets])
    return A, b
