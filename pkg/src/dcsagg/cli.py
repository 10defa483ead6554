"""Command line entry point: ``dcsagg <command> ...``.

Exit codes: 0 ok, 1 comparison outside tolerance, 2 invalid input or usage,
3 infeasible, 4 not converged, 5 internal error.  The number of worker
threads for facet searches is read from ``DCSAGG_THREADS``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .casefile import gen_case, load_case_file, write_case
from .dispatch import (AggregateRegion, DispatchInfeasibleError, aggregated_ed, centralized_ed,
                       compare_modes)
from .hull import hull_halfspaces
from .model import ValidationError
from .network import EmptyRegionError, assemble_polyhedron
from .pve import PveConfig, UnboundedDirectionError, run_pve

EXIT_OK, EXIT_FAILED, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_NOT_CONVERGED, EXIT_INTERNAL = 0, 1, 2, 3, 4, 5
HULL_SCHEMA = 1

log = logging.getLogger("dcsagg")


class UsageError(Exception):
    pass


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load(args):
    cf = load_case_file(args.case)
    case = cf.case
    if getattr(args, "segments", None) is not None:
        if args.segments < 4:
            raise ValidationError("--segments", "must be >= 4")
        case = dataclasses.replace(case, lin_segments=args.segments)
    return case, cf.options


def _config(args, options) -> PveConfig:
    eps = args.epsilon if args.epsilon is not None else options.get("epsilon", 1e-6)
    return PveConfig(epsilon=eps, max_iterations=args.max_iterations, seed=args.seed)


def _write_json(path, obj):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def _write_csv(path, header, rows):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def hull_document(hull, trace, omega, digest, cfg) -> dict:
    A, b = hull_halfspaces(hull)
    return {
        "schema_version": HULL_SCHEMA,
        "case_sha256": digest,
        "labels": omega.y_labels(),
        "dim": hull.dim,
        "affine_rank": trace.affine_rank,
        "converged": trace.converged,
        "config": dataclasses.asdict(cfg),
        "n_vertices": hull.n_vertices,
        "n_facets": int(len(b)),
        "vertices": hull.vertices.tolist(),
        "facets": [{"normal": a.tolist(), "offset": float(o)} for a, o in zip(A, b)],
        "trace": [{k: _finite(v) for k, v in row.items()} for row in trace.as_rows()],
    }


def cmd_aggregate(args) -> int:
    case, options = _load(args)
    cfg = _config(args, options)
    omega = assemble_polyhedron(case)
    hull, trace = run_pve(omega, cfg)
    _write_json(args.out, hull_document(hull, trace, omega, _digest(args.case), cfg))
    log.info("%d vertices, %d rounds, converged=%s", hull.n_vertices, len(trace.records),
             trace.converged)
    return EXIT_OK if trace.converged else EXIT_NOT_CONVERGED


def _slot_rows(res):
    return [[t, res.gate_power[t], res.grid_power[t]] for t in range(len(res.gate_power))]


def cmd_dispatch(args) -> int:
    case, _ = _load(args)
    if args.mode == "aggregated":
        if not args.hull:
            raise UsageError("aggregated mode needs --hull (run 'dcsagg aggregate' first)")
        doc = json.loads(Path(args.hull).read_text())
        if doc.get("schema_version") != HULL_SCHEMA or "vertices" not in doc:
            raise ValidationError("hull", "not a hull file")
        res = aggregated_ed(AggregateRegion(doc["vertices"]), case.grid, case.time)
    else:
        res = centralized_ed(case)
    report = {"case_sha256": _digest(args.case), "result": res.as_dict()}
    _write_json(args.out, report)
    _write_csv(Path(args.out).with_suffix(".csv"), ["slot", "gate_power", "grid_power"],
               _slot_rows(res))
    log.info("%s total cost %.6f", args.mode, res.total_cost)
    return EXIT_OK


def cmd_compare(args) -> int:
    case, options = _load(args)
    cfg = _config(args, options)
    cmp = compare_modes(case, cfg, tolerance=args.tolerance)
    out = Path(args.out)
    T = case.T
    summary = cmp.summary()
    summary["case_sha256"] = _digest(args.case)
    summary["config"] = dataclasses.asdict(cfg)
    summary["centralized"] = cmp.centralized.as_dict()
    summary["aggregated"] = cmp.aggregated.as_dict()
    # null marks a round whose region admits no grid-feasible dispatch
    summary["per_iteration"] = [{"iteration": r.iteration, "n_vertices": r.n_vertices,
                                 "cost_rel": _finite(r.cost_rel), "gate_max": _finite(r.gate_max)}
                                for r in cmp.per_iteration]
    summary["trace"] = [{k: _finite(v) for k, v in row.items()} for row in cmp.trace.as_rows()]
    _write_json(out / "report.json", json.loads(json.dumps(summary, default=_jsonable)))
    rows = []
    for t in range(T):
        rows.append(["centralized", "", t, cmp.centralized.gate_power[t],
                     cmp.centralized.dcs_cost, cmp.centralized.total_cost])
    for r in cmp.per_iteration:
        for t in range(T):
            if r.aggregated is None:
                rows.append(["aggregated", r.iteration, t, "", "", ""])
            else:
                rows.append(["aggregated", r.iteration, t, r.aggregated.gate_power[t],
                             r.aggregated.dcs_cost, r.aggregated.total_cost])
    _write_csv(out / "iterations.csv",
               ["mode", "iteration", "slot", "gate_power", "dcs_cost", "total_cost"], rows)
    _write_csv(out / "slots.csv", ["slot", "gate_centralized", "gate_aggregated", "delta"],
               [[t, cmp.centralized.gate_power[t], cmp.aggregated.gate_power[t],
                 cmp.gate_delta[t]] for t in range(T)])
    print(f"{'PASS' if cmp.passed else 'FAIL'}: cost deviation {cmp.cost_rel:.3e} "
          f"(tol {cmp.tolerance:g}), max gate deviation {cmp.gate_max:.3e} MW, "
          f"{cmp.hull.n_vertices} vertices, converged={cmp.converged}")
    if not cmp.converged:
        return EXIT_NOT_CONVERGED
    return EXIT_OK if cmp.passed else EXIT_FAILED


def _finite(v):
    return v if not isinstance(v, float) or np.isfinite(v) else None


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(type(o))


def cmd_gen_case(args) -> int:
    case = gen_case(args.seed, n_bus=args.n_bus, n_pv=args.n_pv, n_es=args.n_es, n_fb=args.n_fb,
                    T=args.T, lin_segments=args.segments or 12)
    write_case(case, args.out, name=f"synthetic (seed {args.seed})")
    return EXIT_OK


def cmd_oracle_fme(args) -> int:
    from .oracle import fme_project, polygon_vertices

    case, _ = _load(args)
    omega = assemble_polyhedron(case)
    sys_ = fme_project(omega)
    doc = {"case_sha256": _digest(args.case), "labels": sys_.names,
           "rows": [{"normal": a.tolist(), "rhs": float(r)} for a, r in zip(sys_.A, sys_.b)]}
    if sys_.A.shape[1] == 2:
        doc["vertices"] = polygon_vertices(sys_).tolist()
    _write_json(args.out, doc)
    print(f"{sys_.n_rows} rows over {sys_.names}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dcsagg", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def pve_flags(sp):
        sp.add_argument("--epsilon", type=float, default=None,
                        help="relative expansion threshold (default: case option or 1e-6)")
        sp.add_argument("--max-iterations", type=int, default=50)
        sp.add_argument("--seed", type=int, default=0)

    a = sub.add_parser("aggregate", help="enumerate the cluster region, write a hull file")
    a.add_argument("case")
    a.add_argument("-o", "--out", required=True)
    a.add_argument("--segments", type=int)
    pve_flags(a)
    a.set_defaults(func=cmd_aggregate)

    d = sub.add_parser("dispatch", help="dispatch the cluster with the grid")
    d.add_argument("case")
    d.add_argument("--mode", choices=["centralized", "aggregated"], required=True)
    d.add_argument("--hull", help="hull file from 'aggregate' (aggregated mode)")
    d.add_argument("-o", "--out", required=True)
    d.add_argument("--segments", type=int)
    d.set_defaults(func=cmd_dispatch)

    c = sub.add_parser("compare", help="aggregate, dispatch both ways, report deviations")
    c.add_argument("case")
    c.add_argument("-o", "--out", required=True, help="output directory")
    c.add_argument("--tolerance", type=float, default=1e-4)
    c.add_argument("--segments", type=int)
    pve_flags(c)
    c.set_defaults(func=cmd_compare)

    g = sub.add_parser("gen-case", help="write a seeded synthetic case file")
    g.add_argument("-o", "--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n-bus", type=int, default=6)
    g.add_argument("--n-pv", type=int, default=2)
    g.add_argument("--n-es", type=int, default=1)
    g.add_argument("--n-fb", type=int, default=1)
    g.add_argument("-T", type=int, default=3)
    g.add_argument("--segments", type=int)
    g.set_defaults(func=cmd_gen_case)

    o = sub.add_parser("oracle", help="reference computations")
    osub = o.add_subparsers(dest="oracle_command", required=True)
    f = osub.add_parser("fme", help="Fourier-Motzkin projection of a (tiny) case")
    f.add_argument("case")
    f.add_argument("-o", "--out", required=True)
    f.add_argument("--segments", type=int)
    f.set_defaults(func=cmd_oracle_fme)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (EmptyRegionError, DispatchInfeasibleError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except UnboundedDirectionError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - mapped to the documented exit code
        log.debug("unhandled", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
