"""Solver library for doubly nonlinear parabolic problems

    d/dt w(x, t) - div alpha(x, grad u(x, t)) = f(x, t),   w in G(u),

with homogeneous Dirichlet conditions, where G is a maximal monotone graph
(possibly multi-valued, possibly with a proper domain) and alpha is a
p-growth flux such as the p-Laplacian.  Implicit Euler steps reduce to
Yosida-regularized elliptic inclusions solved by damped Newton; every run
certifies the discrete a priori estimates (data-norm bounds, L1 contraction,
order preservation, total-variation bounds, conjugate-energy identity,
time-Lipschitz bounds) and the comparison/entropy inequalities of the
uniqueness theory can be audited on the computed trajectories.
"""

__version__ = "0.1.0"

from .graphs import (GraphError, MonotoneGraph, Piece, exp_graph,
                     heaviside_graph, identity_graph, log_graph, make_graph,
                     normal_cone_graph, piecewise_graph, power_graph,
                     sign_graph)
from .flux import (FluxAuditReport, FluxError, FluxModel, audit_hypotheses,
                   make_flux, make_p_laplacian, make_sum_p_laplacian,
                   make_weighted_p_laplacian, scale_flux)
from .grid import (DiscreteField, GridError, Mesh, apply_operator, energy,
                   field_from_function, field_from_values, gradient_lp_norm,
                   interval_mesh, lq_norm, read_field_csv, rectangle_mesh,
                   total_variation, write_field_csv, zero_field)
from .elliptic import (EllipticError, EllipticSolution, EstimateEntry,
                       MembershipError, NonconvergenceError, SolverOptions,
                       contraction_check, linf_bound_check, membership_gap,
                       solve_inclusion, solve_regularized)
from .parabolic import (BumpTestFamily, ComparisonReport, DiagnosticsOptions,
                        EntropyReport, ExpressionForcing, Forcing,
                        ParabolicError, ProblemSetup, SampledForcing,
                        TrajectoryReport, ZeroForcing, compare, entropy_check,
                        run, step)
from .expressions import Expression, ExpressionError, compile_expression
from .config import (ConfigError, ProblemConfig, build_initial_pair,
                     canonical_json, config_hash, parse_config,
                     parse_config_dict, write_report)

__all__ = [
    "__version__",
    # graphs
    "GraphError", "MonotoneGraph", "Piece", "identity_graph", "power_graph",
    "exp_graph", "log_graph", "sign_graph", "heaviside_graph",
    "normal_cone_graph", "piecewise_graph", "make_graph",
    # flux
    "FluxError", "FluxModel", "FluxAuditReport", "make_p_laplacian",
    "make_sum_p_laplacian", "make_weighted_p_laplacian", "scale_flux",
    "audit_hypotheses", "make_flux",
    # grid
    "GridError", "Mesh", "DiscreteField", "interval_mesh", "rectangle_mesh",
    "zero_field", "field_from_values", "field_from_function", "energy",
    "apply_operator", "lq_norm", "total_variation", "gradient_lp_norm",
    "write_field_csv", "read_field_csv",
    # elliptic
    "EllipticError", "NonconvergenceError", "MembershipError", "SolverOptions",
    "EstimateEntry", "EllipticSolution", "solve_regularized", "solve_inclusion",
    "membership_gap", "contraction_check", "linf_bound_check",
    # parabolic
    "ParabolicError", "Forcing", "ZeroForcing", "ExpressionForcing",
    "SampledForcing", "DiagnosticsOptions", "ProblemSetup", "TrajectoryReport",
    "step", "run", "compare", "ComparisonReport", "BumpTestFamily",
    "entropy_check", "EntropyReport",
    # expressions / config
    "Expression", "ExpressionError", "compile_expression",
    "ConfigError", "ProblemConfig", "parse_config", "parse_config_dict",
    "canonical_json", "config_hash", "build_initial_pair", "write_report",
]
