"""
Checking the region against Fourier-Motzkin elimination
=======================================================

With a single time slot the region is a polygon in (gate power, cost).  For
tiny cases Fourier-Motzkin elimination computes it exactly, which gives an
independent reference for the vertex enumeration.
"""

import numpy as np

from dcsagg import PveConfig, assemble_polyhedron, gen_case, run_pve
from dcsagg.oracle import fme_project, hausdorff_to_polygon, polygon_vertices

case = gen_case(100, n_bus=3, n_pv=1, T=1)
omega = assemble_polyhedron(case)

hull, trace = run_pve(omega, PveConfig(epsilon=1e-9))
system = fme_project(omega)
exact = polygon_vertices(system)

print(f"elimination left {system.n_rows} rows over {system.names}")
print(f"enumeration: {hull.n_vertices} vertices in {len(trace.records)} rounds")
print(f"elimination: {len(exact)} vertices")
print(f"largest vertex distance: {hausdorff_to_polygon(hull.vertices, exact):.2e}")
print("\n  gate power       cost")
for p in exact:
    print(f"{p[0]:12.6f} {p[1]:10.4f}")
