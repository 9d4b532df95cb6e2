"""Problem configuration files, validation, deterministic output writing.

A problem is a JSON tree with sections ``mesh``, ``flux``, ``graph``,
``time``, ``data``, ``diagnostics``, ``solver``, ``output``, and ``seed``.
Parsing canonicalizes the tree (defaults filled, keys ordered), validates
everything at once (all problems are reported, not just the first), and the
canonical form is hashed into output manifests, so manifests change exactly
when a semantically meaningful key changes.

Data fields (initial state, forcing, elliptic right-hand sides, manufactured
solutions, weights) are expressions over x (and y in 2D) and t, or references
to CSV snapshots.  Initial data comes in two modes: ``direct`` supplies the
pair (u0, w0) and is validated for pointwise graph membership; ``generator``
supplies an elliptic right-hand side h0 and the initial pair is produced by
solving the stationary inclusion, which guarantees membership and a finite
discrete operator value at t = 0.

All floats are written with 17 significant digits (CSV) or shortest
round-trip representation (JSON); two runs of the same config produce
byte-identical outputs.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from . import __version__
from .elliptic import SolverOptions, solve_inclusion
from .expressions import ExpressionError, compile_expression
from .flux import FluxError, make_p_laplacian, make_sum_p_laplacian, make_weighted_p_laplacian
from .graphs import GraphError, make_graph
from .grid import (DiscreteField, Mesh, read_field_csv, write_field_csv,
                   zero_field)
from .parabolic import (DiagnosticsOptions, ExpressionForcing, ProblemSetup,
                        SampledForcing, ZeroForcing)

__all__ = [
    "ConfigError",
    "ProblemConfig",
    "parse_config",
    "parse_config_dict",
    "canonical_json",
    "config_hash",
    "build_initial_pair",
    "write_report",
]


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid config:\n  " + "\n  ".join(self.errors))


_DEFAULTS = {
    "time": {"horizon": 1.0, "steps": 16},
    "diagnostics": {"q_values": [1.0, 2.0], "bv_check": True, "sup_check": True,
                    "energy_check": True,
                    "entropy": {"levels": [], "members": 5}},
    "solver": {},
    "output": {"snapshot_times": [], "directory": "out"},
    "data": {"forcing": {"kind": "zero"}},
    "seed": 0,
}

_GRAPH_KINDS = {"identity", "power", "exp", "log", "sign", "heaviside", "normal_cone"}
_FLUX_KINDS = {"p_laplacian", "sum_p_laplacian", "weighted_p_laplacian"}


@dataclass
class ProblemConfig:
    """Validated, canonicalized problem description."""

    tree: dict
    base_dir: str = "."

    # -- builders ---------------------------------------------------------------

    def build_mesh(self):
        m = self.tree["mesh"]
        return Mesh(m["extent"], m["nodes"])

    def build_graph(self):
        g = dict(self.tree["graph"])
        kind = g.pop("kind")
        return make_graph(kind, **g)

    def build_flux(self):
        f = dict(self.tree["flux"])
        kind = f.pop("kind")
        if kind == "p_laplacian":
            return make_p_laplacian(f["p"])
        if kind == "sum_p_laplacian":
            return make_sum_p_laplacian(f["ps"])
        expr = compile_expression(f["weight"], variables=self._space_vars())
        dim = self.tree["mesh"]["dimension"]

        def weight(pts):
            kw = {"x": pts[:, 0]}
            if dim == 2:
                kw["y"] = pts[:, 1]
            return expr(**kw)

        return make_weighted_p_laplacian(f["p"], weight, f["w_lo"], f["w_hi"])

    def build_solver_options(self):
        return SolverOptions(**self.tree["solver"])

    def build_diagnostics(self):
        d = self.tree["diagnostics"]
        return DiagnosticsOptions(
            q_values=tuple(float(q) for q in d["q_values"] if q != "inf"),
            bv_check=d["bv_check"], sup_check=d["sup_check"],
            energy_check=d["energy_check"])

    def build_forcing(self, mesh):
        f = self.tree["data"]["forcing"]
        if f["kind"] == "zero":
            return ZeroForcing()
        if f["kind"] == "expression":
            return ExpressionForcing(self._field_fn(f["expr"]))
        fields = [read_field_csv(mesh, self._path(p)) for p in f["csvs"]]
        return SampledForcing(f["times"], fields)

    def build_setup(self):
        """Mesh, models, initial pair, forcing, and options, assembled."""
        mesh = self.build_mesh()
        graph = self.build_graph()
        flux = self.build_flux()
        solver = self.build_solver_options()
        u0, w0 = build_initial_pair(self, mesh, flux, graph, solver)
        return ProblemSetup(
            mesh=mesh, flux=flux, graph=graph,
            horizon=self.tree["time"]["horizon"], steps=self.tree["time"]["steps"],
            u0=u0, w0=w0, forcing=self.build_forcing(mesh),
            solver=solver, diagnostics=self.build_diagnostics())

    def build_field(self, mesh, source, t=0.0):
        """Field from an expression string or a CSV reference dict."""
        if isinstance(source, dict):
            return read_field_csv(mesh, self._path(source["csv"]))
        fn = self._field_fn(source)
        return DiscreteField(mesh, fn(mesh.coords(), t).reshape(mesh.shape))

    def elliptic_rhs(self, mesh):
        return self.build_field(mesh, self.tree["data"]["rhs"])

    def exact_solution_fn(self):
        """Manufactured solution u*(x[, y], t), when configured."""
        src = self.tree["data"].get("exact_u")
        return self._field_fn(src) if src else None

    # -- helpers ----------------------------------------------------------------

    def _space_vars(self):
        return ("x", "t") if self.tree["mesh"]["dimension"] == 1 else ("x", "y", "t")

    def _field_fn(self, src):
        expr = compile_expression(src, variables=self._space_vars())
        dim = self.tree["mesh"]["dimension"]

        def fn(coords, t):
            kw = {"x": coords[:, 0], "t": t}
            if dim == 2:
                kw["y"] = coords[:, 1]
            return expr(**kw)

        return fn

    def _path(self, rel):
        return rel if os.path.isabs(rel) else os.path.join(self.base_dir, rel)

    @property
    def seed(self):
        return self.tree["seed"]

    def canonical(self):
        return canonical_json(self.tree)

    def hash(self):
        return config_hash(self.tree)


def canonical_json(tree):
    return json.dumps(tree, sort_keys=True, separators=(",", ":"))


def config_hash(tree):
    return hashlib.sha256(canonical_json(tree).encode()).hexdigest()


# -- parsing / validation -------------------------------------------------------


def parse_config(path):
    """Parse and validate a JSON config file.  Raises ConfigError with the
    full list of problems, or a JSON decode error with line/column info."""
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}: JSON parse error at line {exc.lineno}, "
                               f"column {exc.colno}: {exc.msg}"]) from exc
    return parse_config_dict(raw, base_dir=os.path.dirname(os.path.abspath(path)))


def parse_config_dict(raw, base_dir="."):
    """Validate a config tree given as a dict (see module docstring)."""
    if not isinstance(raw, dict):
        raise ConfigError(["config root must be a JSON object"])
    tree = _fill_defaults(raw)
    errors = []
    _validate(tree, errors, base_dir)
    if errors:
        raise ConfigError(errors)
    cfg = ProblemConfig(tree=tree, base_dir=base_dir)
    return cfg


def _fill_defaults(raw):
    tree = json.loads(json.dumps(raw))  # deep copy, JSON-normalized
    for key, val in _DEFAULTS.items():
        if key not in tree:
            tree[key] = json.loads(json.dumps(val))
        elif isinstance(val, dict):
            for k2, v2 in val.items():
                tree[key].setdefault(k2, json.loads(json.dumps(v2)))
    if isinstance(tree.get("diagnostics"), dict):
        ent = tree["diagnostics"].setdefault("entropy", {})
        if isinstance(ent, dict):
            ent.setdefault("levels", [])
            ent.setdefault("members", 5)
    return tree


def _validate(tree, errors, base_dir):
    def err(path, msg):
        errors.append(f"{path}: {msg}")

    # mesh
    mesh = tree.get("mesh")
    dim = None
    if not isinstance(mesh, dict):
        err("mesh", "required section missing or not an object")
    else:
        dim = mesh.get("dimension")
        if dim not in (1, 2):
            err("mesh.dimension", f"must be 1 or 2, got {dim!r}")
        ext = mesh.get("extent")
        nodes = mesh.get("nodes")
        if not isinstance(ext, list) or (dim in (1, 2) and len(ext) != dim) \
                or any(not (isinstance(e, list) and len(e) == 2 and e[0] < e[1]) for e in ext or []):
            err("mesh.extent", "must be a list of one increasing [a, b] pair per dimension")
        if not isinstance(nodes, list) or (dim in (1, 2) and len(nodes) != dim) \
                or any(not (isinstance(n, int) and n >= 3) for n in nodes or []):
            err("mesh.nodes", "must be a list of integers >= 3, one per dimension")

    # graph
    graph = tree.get("graph")
    if not isinstance(graph, dict) or graph.get("kind") not in _GRAPH_KINDS:
        err("graph.kind", f"must be one of {sorted(_GRAPH_KINDS)}")
    else:
        kind = graph["kind"]
        if kind == "power":
            r = graph.get("r")
            if not isinstance(r, (int, float)) or not r > 1:
                err("graph.r", f"power graph requires r > 1, got {r!r}")
        if kind == "normal_cone":
            lo, hi = graph.get("lo"), graph.get("hi")
            if not all(isinstance(v, (int, float)) for v in (lo, hi)) \
                    or not (lo <= 0 <= hi) or not lo < hi:
                err("graph", f"normal_cone requires lo <= 0 <= hi and lo < hi, got {lo!r}, {hi!r}")

    # flux
    flux = tree.get("flux")
    if not isinstance(flux, dict) or flux.get("kind") not in _FLUX_KINDS:
        err("flux.kind", f"must be one of {sorted(_FLUX_KINDS)}")
    else:
        kind = flux["kind"]
        if kind in ("p_laplacian", "weighted_p_laplacian"):
            p = flux.get("p")
            if not isinstance(p, (int, float)) or not p > 1:
                err("flux.p", f"requires p > 1, got {p!r}")
        if kind == "sum_p_laplacian":
            ps = flux.get("ps")
            if not isinstance(ps, list) or not ps or any(not (isinstance(q, (int, float)) and q > 1) for q in ps):
                err("flux.ps", f"requires a non-empty list of exponents > 1, got {ps!r}")
        if kind == "weighted_p_laplacian":
            for k in ("w_lo", "w_hi"):
                if not isinstance(flux.get(k), (int, float)):
                    err(f"flux.{k}", "weighted model requires declared weight bounds")
            if isinstance(flux.get("w_lo"), (int, float)) and isinstance(flux.get("w_hi"), (int, float)):
                if not (0 < flux["w_lo"] <= flux["w_hi"]):
                    err("flux", "weight bounds must satisfy 0 < w_lo <= w_hi")
            _check_expr(flux.get("weight"), "flux.weight", dim, errors, time_var=False)

    # time
    t = tree.get("time", {})
    if not isinstance(t.get("horizon"), (int, float)) or t["horizon"] <= 0:
        err("time.horizon", f"must be a positive number, got {t.get('horizon')!r}")
    if not isinstance(t.get("steps"), int) or t["steps"] < 1:
        err("time.steps", f"must be an integer >= 1, got {t.get('steps')!r}")

    # data
    data = tree.get("data")
    if not isinstance(data, dict):
        err("data", "required section missing or not an object")
        data = {}
    initial = data.get("initial")
    if initial is not None:
        mode = initial.get("mode")
        if mode == "direct":
            for k in ("u", "w"):
                if k not in initial:
                    err(f"data.initial.{k}", "direct mode requires both fields")
                else:
                    _check_field_source(initial[k], f"data.initial.{k}", dim, errors, base_dir)
        elif mode == "generator":
            if "rhs" not in initial:
                err("data.initial.rhs", "generator mode requires an elliptic right-hand side")
            else:
                _check_field_source(initial["rhs"], "data.initial.rhs", dim, errors, base_dir)
        else:
            err("data.initial.mode", f"must be 'direct' or 'generator', got {mode!r}")
    if "rhs" in data:
        _check_field_source(data["rhs"], "data.rhs", dim, errors, base_dir)
    if "exact_u" in data:
        _check_expr(data["exact_u"], "data.exact_u", dim, errors)
    forcing = data.get("forcing", {"kind": "zero"})
    fk = forcing.get("kind")
    if fk == "expression":
        _check_expr(forcing.get("expr"), "data.forcing.expr", dim, errors)
    elif fk == "samples":
        times = forcing.get("times")
        csvs = forcing.get("csvs")
        if not isinstance(times, list) or not isinstance(csvs, list) \
                or len(times) != len(csvs) or len(times) < 1 \
                or any(t2 <= t1 for t1, t2 in zip(times or [], (times or [])[1:])):
            err("data.forcing", "samples need matching, strictly increasing times and csvs")
        for pth in csvs or []:
            full = pth if os.path.isabs(pth) else os.path.join(base_dir, pth)
            if not os.path.exists(full):
                err("data.forcing.csvs", f"file not found: {pth}")
    elif fk != "zero":
        err("data.forcing.kind", f"must be 'zero', 'expression', or 'samples', got {fk!r}")

    # diagnostics
    diag = tree.get("diagnostics", {})
    qv = diag.get("q_values")
    if not isinstance(qv, list) or any(
            not ((isinstance(q, (int, float)) and q >= 1) or q == "inf") for q in qv or []):
        err("diagnostics.q_values", f"must be a list of numbers >= 1 (or 'inf'), got {qv!r}")
    ent = diag.get("entropy", {})
    if not isinstance(ent.get("members"), int) or ent["members"] < 1:
        err("diagnostics.entropy.members", "must be an integer >= 1")

    # solver overrides
    solver = tree.get("solver", {})
    valid = set(SolverOptions.__dataclass_fields__)
    for k in solver:
        if k not in valid:
            err(f"solver.{k}", f"unknown solver option (valid: {sorted(valid)})")

    # output
    out = tree.get("output", {})
    st = out.get("snapshot_times", [])
    horizon = t.get("horizon") if isinstance(t.get("horizon"), (int, float)) else None
    if not isinstance(st, list) or any(not isinstance(x, (int, float)) for x in st):
        err("output.snapshot_times", "must be a list of numbers")
    elif horizon is not None and any(x < 0 or x > horizon for x in st):
        err("output.snapshot_times", f"times must lie in [0, {horizon}]")

    if not isinstance(tree.get("seed"), int):
        err("seed", f"must be an integer, got {tree.get('seed')!r}")


def _check_expr(src, path, dim, errors, time_var=True):
    if not isinstance(src, str):
        errors.append(f"{path}: expected an expression string, got {src!r}")
        return
    variables = ("x", "t") if dim != 2 else ("x", "y", "t")
    if not time_var:
        variables = tuple(v for v in variables if v != "t")
    try:
        compile_expression(src, variables=variables)
    except ExpressionError as exc:
        errors.append(f"{path}: {exc}")


def _check_field_source(src, path, dim, errors, base_dir):
    if isinstance(src, dict):
        pth = src.get("csv")
        if not isinstance(pth, str):
            errors.append(f"{path}.csv: expected a file path")
            return
        full = pth if os.path.isabs(pth) else os.path.join(base_dir, pth)
        if not os.path.exists(full):
            errors.append(f"{path}.csv: file not found: {pth}")
        return
    _check_expr(src, path, dim, errors)


# -- initial data -----------------------------------------------------------------


def build_initial_pair(cfg, mesh, flux, graph, solver):
    """Initial pair (u0, w0).

    Generator mode solves the stationary inclusion with the configured
    right-hand side (so w0 is in G(u0) by the solver's certificate and the
    discrete operator value at u0 is finite by construction); direct mode
    validates pointwise membership and rejects the pair otherwise."""
    data = cfg.tree.get("data", {})
    initial = data.get("initial")
    if initial is None:
        return zero_field(mesh), zero_field(mesh)
    if initial["mode"] == "generator":
        rhs = cfg.build_field(mesh, initial["rhs"])
        sol = solve_inclusion(mesh, flux, graph, rhs, options=solver)
        return sol.u, sol.w
    u0 = cfg.build_field(mesh, initial["u"])
    w0 = cfg.build_field(mesh, initial["w"])
    bad = []
    interior = np.argwhere(mesh.interior)
    for idx in interior:
        key = tuple(idx)
        s, v = float(u0.values[key]), float(w0.values[key])
        if not graph.contains(s, v, tol=1e-9 * (1.0 + abs(v))):
            bad.append(key)
            if len(bad) >= 8:
                break
    if bad:
        raise ConfigError(
            [f"data.initial: w0 is not in G(u0) at interior node {k}" for k in bad])
    # snap roundoff-level boundary values (e.g. sin(pi*1)) to exact zero
    tol_bd = 1e-12 * (1.0 + float(np.max(np.abs(u0.values))))
    if not u0.is_dirichlet(tol=tol_bd):
        raise ConfigError(["data.initial.u: must vanish on the boundary"])
    u0.values[mesh.boundary] = 0.0
    return u0, w0


# -- output writing ----------------------------------------------------------------


def write_report(report, out_dir, cfg=None, snapshot_times=None, series=None):
    """Write snapshot CSVs, the ledger JSON, optional gnuplot series, and a
    manifest.  Outputs are byte-stable for identical inputs; the manifest
    records the canonical config hash, tool version, and per-file digests."""
    os.makedirs(out_dir, exist_ok=True)
    files = []

    if snapshot_times is None:
        snapshot_times = cfg.tree["output"]["snapshot_times"] if cfg else []
    for k, t in enumerate(snapshot_times):
        u, w = report.piecewise_constant(t)
        for tag, fld in (("u", u), ("w", w)):
            name = f"{tag}_{k:03d}.csv"
            write_field_csv(fld, os.path.join(out_dir, name))
            files.append(name)

    ledger = {
        "entries": [e.as_dict() for e in report.entries],
        "reported": _jsonable(report.reported),
        "times": [float(t) for t in report.times],
        "all_passed": report.all_passed(),
    }
    _write_json(os.path.join(out_dir, "ledger.json"), ledger)
    files.append("ledger.json")

    for name in series or []:
        rows = [(e.step * report.tau, e.lhs) for e in report.entries
                if e.name == name and e.step is not None]
        if rows:
            path = os.path.join(out_dir, f"series_{_slug(name)}.dat")
            with open(path, "w") as fh:
                fh.write(f"# t  {name}\n")
                for t, v in rows:
                    fh.write(f"{t:.17g} {v:.17g}\n")
            files.append(os.path.basename(path))

    manifest = {
        "tool": "dnp",
        "version": __version__,
        "config_hash": cfg.hash() if cfg else None,
        "all_passed": report.all_passed(),
        "files": [{"name": n, "sha256": _digest(os.path.join(out_dir, n))}
                  for n in files],
    }
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return manifest


def _slug(name):
    return "".join(c if c.isalnum() else "_" for c in name)


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj
