"""
Aggregating a small cluster
===========================

Load the bundled 6-bus synthetic case, enumerate the region of gate-power
schedules and cluster costs the cluster can deliver, and look at how the
inner hull grows round by round.

Run with ``python demos/01_aggregate_cluster.py``.
"""

import numpy as np

from dcsagg import assemble_polyhedron, demo_case, run_pve, PveConfig

case = demo_case()
print(f"{len(case.buses)} buses, {len(case.pv)} PV, {len(case.storage)} storage, "
      f"{len(case.flexbuildings)} flexible building, T = {case.T}")

# the full model: every bus voltage, flow and device set-point, with the
# gate powers and the cluster cost kept as the coordinates of interest
omega = assemble_polyhedron(case)
print(f"full model: {omega.n_x} internal variables, {len(omega.d)} inequalities, "
      f"{len(omega.d_eq)} equalities")
print("kept coordinates:", omega.y_labels())

hull, trace = run_pve(omega, PveConfig(epsilon=1e-6))

print("\nround  vertices  facets  expansion")
for r in trace.records:
    print(f"{r.iteration:5d}  {r.n_vertices:8d}  {r.n_facets:6d}  {r.expansion:9.2e}")
print("converged:", trace.converged)

# each vertex comes with an internal schedule that realises it
worst = max(omega.residual(x, y) for y, x in zip(hull.vertices, hull.witnesses))
print(f"largest constraint violation over all witnesses: {worst:.1e}")

# range of each gate power and of the cost over the region
lo, hi = hull.vertices.min(axis=0), hull.vertices.max(axis=0)
for name, a, b in zip(omega.y_labels(), lo, hi):
    print(f"{name:>10}: [{a:9.4f}, {b:9.4f}]")
