import numpy as np
import pytest

from dcsagg.casefile import demo_case, gen_case
from dcsagg.lp import LpProblem, solve_lp
from dcsagg.model import Bus, FeederLink, GridUnit, NetworkCase, TimeGrid
from dcsagg.network import VariableIndex, rows_to_polyhedron

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def rows_polyhedron(rows, keys):
    """Polyhedron of symbolic ``rows`` with ``keys`` retained."""
    idx = VariableIndex.from_rows(rows, keys)
    return rows_to_polyhedron(rows, idx)


def rows_extreme(rows, keys, direction):
    """Maximize ``direction . keys`` subject to ``rows``; returns (value, y)."""
    om = rows_polyhedron(rows, keys)
    M, d, M_eq, d_eq = om.stacked()
    c = np.concatenate([np.zeros(om.n_x), np.asarray(direction, float)])
    sol = solve_lp(LpProblem(c, "max", M, d, M_eq, d_eq))
    assert sol.optimal, sol.status
    return sol.objective, sol.x[om.n_x:]


def single_bus_case(T=2, load=0.0, grid_load=5.0, cost=50.0, ramp=100.0, **devices):
    return NetworkCase(TimeGrid(T), (Bus(0, (load,) * T, (0.0,) * T),), (), FeederLink(0, 10.0),
                       GridUnit(0, 0.0, 100.0, ramp, cost, (grid_load,) * T), **devices)


@pytest.fixture(scope="session")
def demo():
    return demo_case()


@pytest.fixture(scope="session")
def small_case():
    return gen_case(0, n_bus=4, n_pv=1, n_es=1, n_fb=1, T=2)
