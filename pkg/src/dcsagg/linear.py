"""Symbolic linear rows over named model variables.

Device and network generators emit :class:`LinearConstraint` objects keyed by
:class:`Var`; the assembler later maps keys to matrix columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, NamedTuple, Optional

import numpy as np


class Var(NamedTuple):
    """Key of one scalar model variable.

    ``kind`` is the variable family (``"u"``, ``"pv_p"``, ``"gate_p"``...),
    ``owner`` the bus/branch/device index and ``slot`` the time index
    (``None`` for horizon-wide variables such as the total cost).
    """

    kind: str
    owner: int = 0
    slot: Optional[int] = None


LinearExpr = Dict[Var, float]


@dataclass(frozen=True)
class LinearConstraint:
    """``sum(coeffs[v] * v) <sense> rhs`` with sense ``"<="`` or ``"=="``."""

    coeffs: Dict[Var, float] = field(hash=False)
    sense: str
    rhs: float
    tag: str = ""

    def __post_init__(self):
        if self.sense not in ("<=", "=="):
            raise ValueError(f"unknown sense {self.sense!r}")

    def evaluate(self, values: Dict[Var, float]) -> float:
        """Left-hand side minus right-hand side at ``values``."""
        return sum(c * values[v] for v, c in self.coeffs.items()) - self.rhs

    def satisfied(self, values: Dict[Var, float], tol: float = 1e-9) -> bool:
        r = self.evaluate(values)
        if self.sense == "==":
            return abs(r) <= tol
        return r <= tol


def le(coeffs, rhs, tag=""):
    return LinearConstraint(dict(coeffs), "<=", float(rhs), tag)


def ge(coeffs, rhs, tag=""):
    return LinearConstraint({v: -c for v, c in coeffs.items()}, "<=", -float(rhs), tag)


def eq(coeffs, rhs, tag=""):
    return LinearConstraint(dict(coeffs), "==", float(rhs), tag)


def capacity_polygon_rows(s_max: float, n: int, p_var: Var, q_var: Var, tag: str = "cap"):
    """Regular ``n``-gon inscribed in the disc ``p**2 + q**2 <= s_max**2``.

    Row ``k`` (k = 1..n) reads ``p cos(2k pi/n) + q sin(2k pi/n) <= s_max cos(pi/n)``.
    """
    if n < 4:
        raise ValueError(f"capacity polygon needs at least 4 segments, got {n}")
    if s_max < 0:
        raise ValueError(f"negative capacity {s_max}")
    rows = []
    apothem = s_max * np.cos(np.pi / n)
    for k in range(1, n + 1):
        ang = 2.0 * np.pi * k / n
        c, s = np.cos(ang), np.sin(ang)
        coeffs = {}
        # exact zeros keep the row sparse at the axis-aligned angles
        if abs(c) > 1e-15:
            coeffs[p_var] = float(c)
        if abs(s) > 1e-15:
            coeffs[q_var] = float(s)
        rows.append(le(coeffs, apothem, f"{tag}[{k}]"))
    return rows
