"""Projection-based aggregation of distributed-resource clusters.

A cluster (distribution network plus PV, storage and flexible buildings) is
modelled as a polyhedron over internal variables ``x`` and coordination
variables ``y = (gate power per slot, total cluster cost)``.  Its projection
onto ``y`` is enumerated vertex by vertex and used as a compact aggregate in
a dispatch with the upstream grid.
"""

from .casefile import demo_case, gen_case, load_case, write_case
from .dispatch import (AggregateRegion, DispatchInfeasibleError, DispatchResult, aggregated_ed,
                       centralized_ed, compare_modes, pv_capacity_sweep, recover_witness)
from .hull import DegenerateDimensionError, VertexHull, facet_normal, hull_halfspaces, quickhull
from .lp import LpProblem, LpSolution, LpStatus, solve_lp
from .model import (Branch, Bus, FeederLink, FlexBuilding, GridUnit, NetworkCase, PvUnit,
                    StorageUnit, TimeGrid, ValidationError, validate_relaxation_conditions)
from .network import EmptyRegionError, Polyhedron, assemble_polyhedron
from .pve import PveConfig, PveTrace, expansion_amount, initial_vertices, run_pve, search_vertex

__version__ = "0.1.0"
