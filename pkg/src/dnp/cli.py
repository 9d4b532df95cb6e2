"""Batch command line interface.

Subcommands::

    dnp elliptic <cfg>                 solve one stationary inclusion
    dnp run <cfg> [--series NAME ...]  run a trajectory, write snapshots/ledger
    dnp compare <cfg1> <cfg2>          paired run with comparison certificates
    dnp converge <cfg> --ladder K      refinement study (manufactured or self)
    dnp audit-flux <cfg>               sampling audit of the flux hypotheses

Output goes to the config's ``output.directory``, resolved against
``$DNP_OUTPUT_ROOT`` when that variable is set.  Exit codes: 0 when every
asserted ledger entry passes, 2 when an asserted certificate fails, 1 on
operational errors (bad config, solver breakdown, I/O).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .config import ConfigError, parse_config, write_report
from .elliptic import EllipticError, solve_inclusion
from .flux import audit_hypotheses
from .grid import lq_norm, write_field_csv
from .parabolic import ParabolicError, compare as compare_runs, run as run_trajectory

__all__ = ["main"]


def _out_dir(cfg):
    d = cfg.tree["output"]["directory"]
    root = os.environ.get("DNP_OUTPUT_ROOT")
    if root and not os.path.isabs(d):
        return os.path.join(root, d)
    if not os.path.isabs(d):
        return os.path.join(cfg.base_dir, d)
    return d


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _cmd_elliptic(args):
    cfg = parse_config(args.config)
    mesh = cfg.build_mesh()
    flux = cfg.build_flux()
    graph = cfg.build_graph()
    if "rhs" not in cfg.tree["data"]:
        raise ConfigError(["data.rhs: the elliptic subcommand needs a right-hand side"])
    rhs = cfg.elliptic_rhs(mesh)
    sol = solve_inclusion(mesh, flux, graph, rhs, options=cfg.build_solver_options())
    out = _out_dir(cfg)
    os.makedirs(out, exist_ok=True)
    write_field_csv(sol.u, os.path.join(out, "u.csv"))
    write_field_csv(sol.w, os.path.join(out, "w.csv"))
    report = {
        "entries": [e.as_dict() for e in sol.estimate_report],
        "iterations": sol.iterations,
        "lam_final": sol.lam_final,
        "membership_gap": sol.membership_gap,
        "stage_deltas": sol.stage_deltas,
        "config_hash": cfg.hash(),
        "all_passed": sol.all_passed(),
    }
    _write_json(os.path.join(out, "elliptic_report.json"), report)
    for e in sol.estimate_report:
        print(f"{e.name:28s} lhs={e.lhs:.12e} rhs={e.rhs:.12e} "
              f"slack={e.slack:.3e} {'PASS' if e.passed else 'FAIL'}")
    return 0 if sol.all_passed() else 2


def _cmd_run(args):
    cfg = parse_config(args.config)
    setup = cfg.build_setup()
    report = run_trajectory(setup)
    out = _out_dir(cfg)
    write_report(report, out, cfg=cfg, series=args.series)
    n_fail = len(report.failed_entries())
    print(f"run: {setup.steps} steps, {len(report.entries)} ledger entries, "
          f"{n_fail} failed; outputs in {out}")
    for e in report.failed_entries()[:10]:
        print(f"  FAIL {e.name} step={e.step} lhs={e.lhs:.6e} bound={e.bound:.6e}")
    return 0 if n_fail == 0 else 2


def _cmd_compare(args):
    cfg1 = parse_config(args.config1)
    cfg2 = parse_config(args.config2)
    rep = compare_runs(cfg1.build_setup(), cfg2.build_setup())
    out = _out_dir(cfg1)
    os.makedirs(out, exist_ok=True)
    doc = {
        "entries": [e.as_dict() for e in rep.entries],
        "data_ordered": rep.data_ordered,
        "config_hash_1": cfg1.hash(),
        "config_hash_2": cfg2.hash(),
        "all_passed": rep.all_passed(),
    }
    _write_json(os.path.join(out, "comparison.json"), doc)
    n_fail = sum(not e.passed for e in rep.entries)
    print(f"compare: {len(rep.entries)} certificates, {n_fail} failed; "
          f"data ordered: {rep.data_ordered}")
    return 0 if n_fail == 0 else 2


def _cmd_converge(args):
    cfg = parse_config(args.config)
    exact = cfg.exact_solution_fn()
    base = cfg.tree
    rows = []
    reports = []
    for k in range(args.ladder):
        tree = json.loads(json.dumps(base))
        tree["mesh"]["nodes"] = [(n - 1) * 2 ** k + 1 for n in base["mesh"]["nodes"]]
        tree["time"]["steps"] = base["time"]["steps"] * 2 ** k
        from .config import parse_config_dict

        cfg_k = parse_config_dict(tree, base_dir=cfg.base_dir)
        setup = cfg_k.build_setup()
        report = run_trajectory(setup)
        reports.append((cfg_k, setup, report))
    if exact is not None:
        for cfg_k, setup, report in reports:
            mesh = setup.mesh
            coords = mesh.coords()
            err = 0.0
            for n, t in enumerate(report.times):
                ue = exact(coords, float(t)).reshape(mesh.shape)
                diff = report.us[n].values - ue
                err = max(err, float(np.sqrt(np.sum(mesh.node_volumes * diff ** 2))))
            rows.append({"nodes": list(mesh.shape), "steps": setup.steps,
                         "tau": setup.tau, "h": max(mesh.spacing), "error": err})
    else:
        fine = reports[-1][2]
        for k, (cfg_k, setup, report) in enumerate(reports[:-1]):
            stride = 2 ** (len(reports) - 1 - k)
            err = 0.0
            for n, t in enumerate(report.times):
                uf, _ = fine.piecewise_constant(float(t))
                sub = uf.values[::stride] if setup.mesh.dim == 1 else uf.values[::stride, ::stride]
                diff = report.us[n].values - sub
                err = max(err, float(np.sqrt(np.sum(setup.mesh.node_volumes * diff ** 2))))
            rows.append({"nodes": list(setup.mesh.shape), "steps": setup.steps,
                         "tau": setup.tau, "h": max(setup.mesh.spacing), "error": err})
    for i, row in enumerate(rows):
        row["order"] = (float(np.log2(rows[i - 1]["error"] / row["error"]))
                        if i > 0 and row["error"] > 0 else None)
    out = _out_dir(cfg)
    os.makedirs(out, exist_ok=True)
    _write_json(os.path.join(out, "convergence.json"),
                {"rows": rows, "config_hash": cfg.hash(),
                 "mode": "manufactured" if exact is not None else "self"})
    print(f"{'nodes':>12s} {'steps':>6s} {'tau':>12s} {'error':>14s} {'order':>7s}")
    for row in rows:
        order = f"{row['order']:.2f}" if row["order"] is not None else "-"
        print(f"{str(row['nodes']):>12s} {row['steps']:>6d} {row['tau']:>12.5g} "
              f"{row['error']:>14.6e} {order:>7s}")
    ok = all(e.passed for _, _, rep in reports for e in rep.entries)
    return 0 if ok else 2


def _cmd_audit_flux(args):
    cfg = parse_config(args.config)
    flux = cfg.build_flux()
    report = audit_hypotheses(flux, sample_count=args.samples, seed=cfg.seed,
                              dim=cfg.tree["mesh"]["dimension"])
    print(report.summary())
    out = _out_dir(cfg)
    os.makedirs(out, exist_ok=True)
    _write_json(os.path.join(out, "flux_audit.json"), {
        "label": report.label, "samples": report.samples, "seed": report.seed,
        "growth_lower": report.growth_lower, "growth_upper": report.growth_upper,
        "flux_bound": report.flux_bound, "flux_at_zero": report.flux_at_zero,
        "monotonicity": report.monotonicity, "gradient_error": report.gradient_error,
        "witnesses": report.witnesses, "passed": report.passed,
        "config_hash": cfg.hash(),
    })
    return 0 if report.passed else 2


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="dnp",
        description="Doubly nonlinear parabolic solver and diagnostics suite.")
    parser.add_argument("--version", action="version", version=f"dnp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("elliptic", help="solve one stationary inclusion")
    p.add_argument("config")
    p.set_defaults(fn=_cmd_elliptic)

    p = sub.add_parser("run", help="run a trajectory and write its ledger")
    p.add_argument("config")
    p.add_argument("--series", action="append", default=[],
                   help="ledger entry name to emit as a gnuplot two-column series")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("compare", help="run two configs and certify comparison")
    p.add_argument("config1")
    p.add_argument("config2")
    p.set_defaults(fn=_cmd_compare)

    p = sub.add_parser("converge", help="refinement ladder study")
    p.add_argument("config")
    p.add_argument("--ladder", type=int, default=3)
    p.set_defaults(fn=_cmd_converge)

    p = sub.add_parser("audit-flux", help="sampling audit of the flux hypotheses")
    p.add_argument("config")
    p.add_argument("--samples", type=int, default=10_000)
    p.set_defaults(fn=_cmd_audit_flux)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error:\n{exc}", file=sys.stderr)
        return 1
    except (EllipticError, ParabolicError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
