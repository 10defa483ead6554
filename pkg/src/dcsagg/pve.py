"""Progressive vertex enumeration of the projection of a polyhedron.

The projection ``{y : exists x, (x, y) in omega}`` is approximated from the
inside by the convex hull of vertices found with support LPs.  Every round
searches along the outward normal of each hull facet and adds the vertices
that push the hull outward, until the largest facet gap, relative to the
hull's bounding-box diagonal, drops below ``epsilon``.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.linalg

from .hull import DegenerateDimensionError, VertexHull, point_hull, quickhull
from .lp import LpModel, LpProblem, LpStatus
from .network import EmptyRegionError, Polyhedron

logger = logging.getLogger(__name__)

NOVELTY_TOL = 1e-8
THREADS_ENV = "DCSAGG_THREADS"


class UnboundedDirectionError(RuntimeError):
    """The projection is unbounded along a search direction (a modelling bug)."""


@dataclass
class PveConfig:
    epsilon: float = 1e-6
    max_iterations: int = 50
    max_vertices: int = 200_000
    seed: int = 0
    threads: Optional[int] = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iterations < 1 or self.max_vertices < 1:
            raise ValueError("iteration and vertex caps must be >= 1")


@dataclass
class PveIteration:
    iteration: int
    n_vertices: int
    n_facets: int
    n_searches: int
    n_new: int
    expansion: float
    elapsed: float


@dataclass
class PveTrace:
    """Per-round statistics.  ``vertices`` keeps every vertex in discovery
    order, so the region after round ``k`` is ``vertices[:records[k].n_vertices]``."""

    dim: int
    affine_rank: int
    records: List[PveIteration] = field(default_factory=list)
    converged: bool = False
    vertices: Optional[np.ndarray] = None
    witnesses: Optional[np.ndarray] = None

    def region_at(self, iteration: int) -> np.ndarray:
        rec = next(r for r in self.records if r.iteration == iteration)
        return self.vertices[:rec.n_vertices]

    def as_rows(self):
        return [vars(r).copy() for r in self.records]


@dataclass
class SearchResult:
    z: np.ndarray
    y: np.ndarray
    x: np.ndarray
    value: float


class ProjectionSearch:
    """Support LPs ``max eta.y`` over ``omega`` in (possibly reduced) coordinates.

    Reduced coordinates ``z`` relate to ``y`` through ``y = origin + basis @ z``.
    Every search restarts from the basis of the first solve, which makes its
    result independent of the order of earlier searches.
    """

    def __init__(self, omega: Polyhedron, origin=None, basis=None, dual_tol: float = 1e-9):
        self.omega = omega
        self.nx, self.ny = omega.n_x, omega.n_y
        self.origin = np.zeros(self.ny) if origin is None else np.asarray(origin, dtype=float)
        self.basis = np.eye(self.ny) if basis is None else np.asarray(basis, dtype=float)
        self.dual_tol = dual_tol
        M, d, M_eq, d_eq = omega.stacked()
        self.model = LpModel(LpProblem(np.zeros(self.nx + self.ny), "max", M, d, M_eq, d_eq))
        sol = self.model.solve()
        if sol.status is LpStatus.INFEASIBLE:
            raise EmptyRegionError("projection region is empty")
        self.root_basis = self.model.get_basis()
        self.n_solves = 0

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def reduced(self, origin, basis) -> "ProjectionSearch":
        """Same LP model, new coordinate map."""
        other = object.__new__(ProjectionSearch)
        other.__dict__.update(self.__dict__)
        other.origin = np.asarray(origin, dtype=float)
        other.basis = np.asarray(basis, dtype=float)
        return other

    def clone(self) -> "ProjectionSearch":
        """Independent LP model with the same coordinate map (for worker threads)."""
        return ProjectionSearch(self.omega, self.origin, self.basis, self.dual_tol)

    def to_z(self, y):
        return self.basis.T @ (np.asarray(y, dtype=float) - self.origin)

    def _solve(self, w_y):
        c = np.zeros(self.nx + self.ny)
        c[self.nx:] = w_y
        self.model.set_objective(c, "max")
        self.n_solves += 1
        sol = self.model.solve()
        if sol.status is LpStatus.UNBOUNDED:
            raise UnboundedDirectionError(f"unbounded along {w_y}")
        if sol.status is LpStatus.INFEASIBLE:
            raise EmptyRegionError("projection region is empty")
        return sol

    def value(self, eta) -> float:
        """Support function of the projection along reduced direction ``eta``."""
        self.model.set_basis(self.root_basis)
        return self._solve(self.basis @ np.asarray(eta, dtype=float)).objective

    def search(self, eta) -> SearchResult:
        """Vertex maximizing ``eta``; ties broken by maximizing z_1, z_2, ... in turn.

        Each tie-break stage runs over the exact optimal face of the previous
        one (see :meth:`LpModel.pin_optimal_face`), so the result is a vertex.
        """
        eta = np.asarray(eta, dtype=float)
        if not np.any(eta):
            raise ValueError("search direction must be nonzero")
        objs = [self.basis @ eta] + [self.basis[:, k] for k in range(self.dim)]
        pad = np.zeros(self.nx)
        self.model.set_basis(self.root_basis)
        self.n_solves += len(objs)
        sol = self.model.lexicographic([np.concatenate([pad, w]) for w in objs], "max",
                                       self.dual_tol)
        if sol.status is LpStatus.UNBOUNDED:
            raise UnboundedDirectionError(f"unbounded along {eta}")
        if sol.status is LpStatus.INFEASIBLE:
            raise EmptyRegionError("projection region is empty")
        x, y = sol.x[:self.nx], sol.x[self.nx:]
        return SearchResult(self.to_z(y), y, x, float(self.basis @ eta @ y))


def search_vertex(omega: Polyhedron, eta) -> np.ndarray:
    """Lexicographically refined maximizer of ``eta.y`` over the projection."""
    return ProjectionSearch(omega).search(eta).y


@dataclass
class AffineHull:
    origin: np.ndarray
    basis: np.ndarray
    complement: np.ndarray
    points: np.ndarray
    witnesses: np.ndarray

    @property
    def rank(self) -> int:
        return self.basis.shape[1]


def affine_hull(search: ProjectionSearch, tol: float = 1e-7) -> AffineHull:
    """Affine hull of the projection using at most ``2N + 1`` support LPs.

    A direction along which max and min coincide (within ``tol`` relative to the
    region's scale) is flat; every other direction contributes a spanning point.
    """
    N = search.dim
    first = search.search(-np.ones(N) / np.sqrt(N))
    pts, wit = [first.z], [first.x]
    scale = max(1.0, float(np.max(np.abs(first.z))))
    spans, flats = [], []
    for _ in range(N):
        known = np.array(spans + flats).reshape(-1, N)
        cand = scipy.linalg.null_space(known) if len(known) else np.eye(N)
        u = cand[:, 0]
        found = False
        for sign in (1.0, -1.0):
            res = search.search(sign * u)
            step = (res.z - first.z) @ u * sign
            if step > tol * scale:
                spans.append((res.z - first.z) / np.linalg.norm(res.z - first.z))
                pts.append(res.z)
                wit.append(res.x)
                found = True
                break
        if not found:
            flats.append(u)
    P = np.array(pts)
    if spans:
        Q, _ = np.linalg.qr(np.array(spans).T)
        basis = Q[:, :len(spans)]
        complement = scipy.linalg.null_space(basis.T) if len(spans) < N else np.zeros((N, 0))
    else:
        basis, complement = np.zeros((N, 0)), np.eye(N)
    return AffineHull(P.mean(axis=0), basis, complement, P, np.array(wit))


def _affine_rank_of(P, tol):
    if len(P) < 2:
        return 0
    s = np.linalg.svd(np.asarray(P[1:]) - P[0], compute_uv=False)
    return int(np.sum(s > tol * max(1.0, s[0])))


def initial_vertices(omega, dim: Optional[int] = None, seed: int = 0,
                     max_random: int = 64, tol: float = 1e-7):
    """``dim + 1`` affinely independent vertices of the projection.

    Searches the positive coordinate axes and the all-negative direction,
    then seeded random directions until the simplex is full-dimensional.
    ``omega`` may be a :class:`Polyhedron` or a :class:`ProjectionSearch`.
    Returns ``(points, witnesses)``.  Raises
    :class:`DegenerateDimensionError` when the projection is flat.
    """
    search = omega if isinstance(omega, ProjectionSearch) else ProjectionSearch(omega)
    N = search.dim if dim is None else dim
    dirs = [np.eye(N)[k] for k in range(N)] + [-np.ones(N) / np.sqrt(N)]
    pts, wit = [], []

    def take(res):
        if all(np.linalg.norm(res.z - p) > tol * max(1.0, np.abs(p).max()) for p in pts):
            pts.append(res.z)
            wit.append(res.x)

    for u in dirs:
        take(search.search(u))
    rng = np.random.default_rng(seed)
    attempts = 0
    while _affine_rank_of(pts, tol) < N and attempts < max_random:
        attempts += 1
        u = rng.normal(size=N)
        res = search.search(u / np.linalg.norm(u))
        before = _affine_rank_of(pts, tol)
        if _affine_rank_of(pts + [res.z], tol) > before:
            pts.append(res.z)
            wit.append(res.x)
    if _affine_rank_of(pts, tol) < N:
        aff = affine_hull(search)
        if aff.rank < N:
            raise DegenerateDimensionError(aff.rank, N, search.origin + search.basis @ aff.origin,
                                           search.basis @ aff.basis)
        pts, wit = list(aff.points), list(aff.witnesses)
    return np.array(pts), np.array(wit)


def expansion_amount(hull: VertexHull, omega) -> float:
    """Largest facet gap ``support(n_i) - b_i`` over the hull's bounding-box diagonal."""
    search = omega if isinstance(omega, ProjectionSearch) else ProjectionSearch(omega)
    D = hull.bbox_diagonal()
    if hull.n_facets == 0 or D == 0:
        return 0.0
    gaps = [search.value(search.basis.T @ n) - b for n, b in zip(hull.normals, hull.offsets)]
    return max(float(np.max(gaps)), 0.0) / D


class _Pool:
    """Runs facet searches, serially or on per-thread LP models."""

    def __init__(self, search: ProjectionSearch, threads: int):
        self.search = search
        self.threads = threads
        self.local = threading.local()
        self.executor = ThreadPoolExecutor(threads) if threads > 1 else None

    def _one(self, eta):
        s = getattr(self.local, "search", None)
        if s is None:
            s = self.local.search = self.search.clone()
        return s.search(eta)

    def map(self, dirs):
        if self.executor is None:
            return [self.search.search(u) for u in dirs]
        return list(self.executor.map(self._one, dirs))

    def close(self):
        if self.executor is not None:
            self.executor.shutdown()


def _thread_count(cfg: PveConfig) -> int:
    if cfg.threads is not None:
        return max(1, int(cfg.threads))
    return max(1, int(os.environ.get(THREADS_ENV, "1")))


def run_pve(omega: Polyhedron, cfg: Optional[PveConfig] = None):
    """Inner approximation of the projection of ``omega`` onto its ``y`` block.

    Returns ``(hull, trace)``; ``hull.witnesses[k]`` is an ``x`` certifying
    ``hull.vertices[k]``.  Hitting a cap returns the current hull with
    ``trace.converged`` false.
    """
    cfg = cfg or PveConfig()
    t0 = time.perf_counter()
    full = ProjectionSearch(omega)
    N = full.dim
    aff = affine_hull(full)
    r = aff.rank
    trace = PveTrace(dim=N, affine_rank=r)
    if r == 0:
        y = aff.points[0]
        hull = point_hull(y)
        hull.witnesses = aff.witnesses[:1]
        trace.vertices, trace.witnesses = hull.vertices, hull.witnesses
        trace.records.append(PveIteration(0, 1, 0, full.n_solves, 1, 0.0,
                                          time.perf_counter() - t0))
        trace.converged = True
        return hull, trace
    if r == N:
        search = full
    else:
        logger.info("projection has affine rank %d < %d; enumerating in its affine hull", r, N)
        search = full.reduced(aff.origin, aff.basis)

    Z, X = initial_vertices(search, r, seed=cfg.seed)
    Z, X = list(Z), list(X)
    ids = {tuple(z): k for k, z in enumerate(Z)}
    cache = {}
    pool = _Pool(search, _thread_count(cfg))
    hull = quickhull(np.array(Z))
    trace.records.append(PveIteration(0, len(Z), hull.n_facets, full.n_solves, len(Z), np.inf,
                                      time.perf_counter() - t0))
    try:
        for it in range(1, cfg.max_iterations + 1):
            facet_keys = [frozenset(ids[tuple(hull.vertices[i])] for i in s) for s in hull.simplices]
            todo = [j for j, key in enumerate(facet_keys) if key not in cache]
            results = pool.map([hull.normals[j] for j in todo])
            found = []
            for j, res in zip(todo, results):
                gap = float(hull.normals[j] @ res.z - hull.offsets[j])
                cache[facet_keys[j]] = gap
                if gap > NOVELTY_TOL:
                    found.append(res)
            D = hull.bbox_diagonal()
            gaps = [cache[k] for k in facet_keys]
            expansion = max(max(gaps), 0.0) / D if D > 0 else 0.0
            added = 0
            for res in found:
                if len(Z) >= cfg.max_vertices:
                    break
                key = tuple(res.z)
                if key in ids:
                    continue
                close = [np.linalg.norm(res.z - Z[k]) for k in range(len(Z) - added, len(Z))]
                if close and min(close) <= NOVELTY_TOL * max(1.0, D):
                    continue
                ids[key] = len(Z)
                Z.append(res.z)
                X.append(res.x)
                added += 1
            if added:
                hull = quickhull(np.array(Z))
            trace.records.append(PveIteration(it, len(Z), hull.n_facets, full.n_solves, added,
                                              expansion, time.perf_counter() - t0))
            logger.debug("round %d: %d vertices, expansion %.3g", it, len(Z), expansion)
            if expansion < cfg.epsilon:
                trace.converged = True
                break
            if len(Z) >= cfg.max_vertices:
                break
    finally:
        pool.close()

    order = np.array([ids[tuple(v)] for v in hull.vertices])
    hull.witnesses = np.array(X)[order]
    if r < N:
        hull = hull.lift(aff.origin, aff.basis, aff.complement)
        Y = aff.origin + np.array(Z) @ aff.basis.T
    else:
        Y = np.array(Z)
    trace.vertices, trace.witnesses = Y, np.array(X)
    return hull, trace
