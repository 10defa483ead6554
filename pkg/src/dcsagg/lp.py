"""Linear programming on top of the HiGHS dual simplex.

:func:`solve_lp` is the one-shot entry point.  :class:`LpModel` keeps a
HiGHS instance alive so repeated solves over the same rows (support
searches, lexicographic refinement) can warm start from a stored basis.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import highspy
import numpy as np
import scipy.sparse as sp

INF = highspy.kHighsInf
FEAS_TOL = 1e-9


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class LpSolverError(RuntimeError):
    """HiGHS stopped without a usable answer (numerical trouble, limits)."""


@dataclass
class LpProblem:
    """``opt c.x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lb <= x <= ub``.

    ``sense`` is ``"max"`` or ``"min"``; missing bounds mean a free variable.
    """

    c: np.ndarray
    sense: str = "max"
    A_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        if self.sense not in ("max", "min"):
            raise ValueError(f"sense must be 'max' or 'min', got {self.sense!r}")
        self.A_ub, self.b_ub = _block(self.A_ub, self.b_ub, n)
        self.A_eq, self.b_eq = _block(self.A_eq, self.b_eq, n)
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float)
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float)
        for arr in (self.c, self.b_ub, self.b_eq):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite LP data")
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            raise ValueError("bound vectors must match the objective length")

    @property
    def n(self) -> int:
        return self.c.size


def _block(A, b, n):
    if A is None:
        return sp.csr_matrix((0, n)), np.zeros(0)
    A = sp.csr_matrix(A) if not sp.issparse(A) else A.tocsr()
    if A.shape[1] != n:
        raise ValueError(f"constraint matrix has {A.shape[1]} columns, expected {n}")
    b = np.asarray(b, dtype=float).ravel()
    if b.size != A.shape[0]:
        raise ValueError("right-hand side length mismatch")
    if A.nnz and not np.all(np.isfinite(A.data)):
        raise ValueError("non-finite LP data")
    return A, b


@dataclass
class LpSolution:
    status: LpStatus
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class LpModel:
    """Persistent HiGHS model with in-place objective and row edits."""

    def __init__(self, problem: LpProblem):
        self.n = problem.n
        h = highspy.Highs()
        for name, value in (("output_flag", False), ("threads", 1), ("random_seed", 0),
                            ("solver", "simplex"),
                            ("primal_feasibility_tolerance", FEAS_TOL),
                            ("dual_feasibility_tolerance", FEAS_TOL)):
            h.setOptionValue(name, value)
        lb = np.where(np.isfinite(problem.lb), problem.lb, -INF)
        ub = np.where(np.isfinite(problem.ub), problem.ub, INF)
        h.addVars(self.n, lb, ub)
        self.h = h
        A = sp.vstack([problem.A_ub, problem.A_eq]).tocsr()
        lo = np.concatenate([np.full(problem.b_ub.size, -INF), problem.b_eq])
        hi = np.concatenate([problem.b_ub, problem.b_eq])
        self._add_csr(A, lo, hi)
        self.n_base_rows = A.shape[0]
        self.set_objective(problem.c, problem.sense)

    def _add_csr(self, A, lo, hi):
        A = sp.csr_matrix(A)
        if A.shape[0] == 0:
            return
        self.h.addRows(A.shape[0], np.asarray(lo, float), np.asarray(hi, float), A.nnz,
                       A.indptr.astype(np.int32), A.indices.astype(np.int32),
                       A.data.astype(float))

    @property
    def n_rows(self) -> int:
        return self.h.getNumRow()

    def set_objective(self, c, sense: str = "max"):
        c = np.asarray(c, dtype=float)
        self.h.changeColsCost(self.n, np.arange(self.n, dtype=np.int32), c)
        self.h.changeObjectiveSense(highspy.ObjSense.kMaximize if sense == "max"
                                    else highspy.ObjSense.kMinimize)
        self.sense = sense

    def add_row(self, coeffs, lo=-np.inf, hi=np.inf):
        """Append one dense row ``lo <= coeffs . x <= hi``; returns its index."""
        coeffs = np.asarray(coeffs, dtype=float)
        nz = np.flatnonzero(coeffs)
        self.h.addRow(-INF if not np.isfinite(lo) else float(lo),
                      INF if not np.isfinite(hi) else float(hi),
                      nz.size, nz.astype(np.int32), coeffs[nz])
        return self.n_rows - 1

    def truncate_rows(self, n_rows: int):
        """Drop every row at index ``>= n_rows``."""
        extra = self.n_rows - n_rows
        if extra > 0:
            self.h.deleteRows(extra, np.arange(n_rows, n_rows + extra, dtype=np.int32))

    def set_col_bounds(self, cols, lb, ub):
        cols = np.asarray(cols, dtype=np.int32)
        lb = np.where(np.isfinite(lb), lb, -INF).astype(float)
        ub = np.where(np.isfinite(ub), ub, INF).astype(float)
        self.h.changeColsBounds(cols.size, cols, lb, ub)

    def set_row_bounds(self, rows, lo, hi):
        rows = np.asarray(rows, dtype=np.int32)
        if rows.size == 0:
            return
        lo = np.where(np.isfinite(lo), lo, -INF).astype(float)
        hi = np.where(np.isfinite(hi), hi, INF).astype(float)
        self.h.changeRowsBounds(rows.size, rows, lo, hi)

    def row_duals(self) -> np.ndarray:
        return np.array(self.h.getSolution().row_dual, dtype=float)

    def pin_optimal_face(self, tol: float = 1e-9):
        """Restrict the feasible set to the optimal face of the last solve.

        Rows and columns with a nonzero dual are fixed at the bound they sit
        on; by complementary slackness the remaining feasible set is exactly
        the set of optimal points.  Returns a token for :meth:`release`.
        """
        sol = self.h.getSolution()
        lp = self.h.getLp()
        saved = []
        rd = np.array(sol.row_dual)
        rv = np.array(sol.row_value)
        rlo, rhi = np.array(lp.row_lower_), np.array(lp.row_upper_)
        rows = np.flatnonzero((np.abs(rd) > tol) & (rlo < rhi))
        if rows.size:
            at = np.where(np.abs(rv[rows] - rlo[rows]) < np.abs(rv[rows] - rhi[rows]),
                          rlo[rows], rhi[rows])
            saved.append(("row", rows, rlo[rows], rhi[rows]))
            self.h.changeRowsBounds(rows.size, rows.astype(np.int32), at, at)
        cd = np.array(sol.col_dual)
        cv = np.array(sol.col_value)
        clo, chi = np.array(lp.col_lower_), np.array(lp.col_upper_)
        cols = np.flatnonzero((np.abs(cd) > tol) & (clo < chi))
        if cols.size:
            at = np.where(np.abs(cv[cols] - clo[cols]) < np.abs(cv[cols] - chi[cols]),
                          clo[cols], chi[cols])
            saved.append(("col", cols, clo[cols], chi[cols]))
            self.h.changeColsBounds(cols.size, cols.astype(np.int32), at, at)
        return saved

    def release(self, token):
        for kind, idx, lo, hi in reversed(token):
            change = self.h.changeRowsBounds if kind == "row" else self.h.changeColsBounds
            change(idx.size, idx.astype(np.int32), lo, hi)

    def lexicographic(self, objectives, sense: str = "max", tol: float = 1e-9) -> "LpSolution":
        """Optimize ``objectives[0]``, then each later one over the previous optimal face."""
        tokens = []
        try:
            sol = None
            for k, c in enumerate(objectives):
                if k:
                    tokens.append(self.pin_optimal_face(tol))
                self.set_objective(c, sense)
                sol = self.solve()
                if not sol.optimal:
                    return sol
            return sol
        finally:
            for tok in reversed(tokens):
                self.release(tok)

    def get_basis(self):
        return self.h.getBasis()

    def set_basis(self, basis):
        """Restart from ``basis`` with fresh solver state, so the next solve
        does not depend on what was solved before."""
        if basis is not None and basis.valid:
            self.h.clearSolver()
            self.h.setBasis(basis)

    def solve(self) -> LpSolution:
        h = self.h
        h.run()
        status = h.getModelStatus()
        S = highspy.HighsModelStatus
        if status == S.kUnboundedOrInfeasible:
            # presolve cannot tell which; a plain simplex pass can
            h.setOptionValue("presolve", "off")
            h.clearSolver()
            h.run()
            h.setOptionValue("presolve", "choose")
            status = h.getModelStatus()
        if status == S.kOptimal:
            x = np.array(h.getSolution().col_value, dtype=float)
            return LpSolution(LpStatus.OPTIMAL, x, float(h.getInfo().objective_function_value))
        if status == S.kInfeasible:
            return LpSolution(LpStatus.INFEASIBLE)
        if status == S.kUnbounded:
            return LpSolution(LpStatus.UNBOUNDED)
        raise LpSolverError(f"HiGHS returned {h.modelStatusToString(status)}")


def solve_lp(problem: LpProblem) -> LpSolution:
    """Solve ``problem`` from scratch; the optimum returned is a basic solution.

    Infeasible and unbounded outcomes are reported through ``status``;
    solver breakdown raises :class:`LpSolverError`.
    """
    return LpModel(problem).solve()
