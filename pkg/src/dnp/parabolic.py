"""Implicit Euler stepping for  d/dt w - div(flux(x, grad u)) = f,  w in G(u).

Each step folds the time step into the elliptic inclusion

    w_{n+1} + tau * A(u_{n+1}) = w_n + tau * fbar_n,

so the whole a priori structure of the elliptic solver (data-norm bounds, L1
contraction, order preservation, TV bounds) telescopes into trajectory-level
certificates.  ``run`` produces a TrajectoryReport whose ledger contains, per
step and globally:

* data-norm bounds ||w_{n+1}||_q <= ||w_n||_q + tau * sup||f||_q and their
  telescoped global version (q in {1, 2, p', inf}),
* total-variation bounds (x-independent flux, BV data),
* the two one-sided convexity inequalities of the conjugate-energy identity
  <w_{n+1} - w_n, u_n>  <=  J*(w_{n+1}) - J*(w_n)  <=  <w_{n+1} - w_n, u_{n+1}>
  (exact consequences of membership at both steps; the enclosed gap is the
  reported energy defect and shrinks like O(tau) on smooth runs),
* the empirical time-Lipschitz constant sup_n ||w_{n+1} - w_n||_1 / tau with
  its certified bound ||f(0) - A(u_0)||_1 + int_0^T ||df/dt||_1 dt,
* dissipation sums and sup-norm traces (reported).

``compare`` runs two trajectories with ordered data and certifies the
positive-part comparison and L1 stability at every step; ``entropy_check``
evaluates the two one-parameter families of entropy inequalities in the sum
variable v = u + w against a finite certifying family of space-time bump test
functions (a finite family can falsify, never fully certify, the entropy
property; the report says so).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .elliptic import (EllipticError, EstimateEntry, SolverOptions,
                       membership_gap, solve_inclusion)
from .grid import (DiscreteField, GridError, apply_operator, cell_gradients,
                   cell_volumes, gradient_lp_norm, lq_norm, total_variation,
                   zero_field)

__all__ = [
    "ParabolicError",
    "Forcing",
    "ZeroForcing",
    "ExpressionForcing",
    "SampledForcing",
    "DiagnosticsOptions",
    "ProblemSetup",
    "TrajectoryReport",
    "step",
    "run",
    "compare",
    "ComparisonReport",
    "BumpTestFamily",
    "entropy_check",
    "EntropyReport",
]

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(5)


class ParabolicError(RuntimeError):
    """Invalid setup or failed step."""


# -- forcing ---------------------------------------------------------------------


class Forcing:
    """Time-dependent volumetric source.  Subclasses provide nodal fields at
    a time, exact interval averages, and the norm data the ledger needs."""

    def at(self, mesh, t):
        raise NotImplementedError

    def average(self, mesh, t0, t1):
        raise NotImplementedError

    def interval_sup_lq(self, mesh, t0, t1, q):
        """Upper bound for ||f(t)||_q on [t0, t1] consistent with ``average``
        (the average's norm never exceeds it)."""
        raise NotImplementedError

    def interval_sup_tv(self, mesh, t0, t1):
        raise NotImplementedError

    def dt_l1_integral(self, mesh, t0, t1):
        """int_{t0}^{t1} ||df/dt(t)||_{L1} dt."""
        raise NotImplementedError

    def is_zero(self):
        return False


class ZeroForcing(Forcing):
    """f = 0."""

    def at(self, mesh, t):
        return zero_field(mesh)

    def average(self, mesh, t0, t1):
        return zero_field(mesh)

    def interval_sup_lq(self, mesh, t0, t1, q):
        return 0.0

    def interval_sup_tv(self, mesh, t0, t1):
        return 0.0

    def dt_l1_integral(self, mesh, t0, t1):
        return 0.0

    def is_zero(self):
        return True


class ExpressionForcing(Forcing):
    """Forcing given by a closed-form space-time function.

    ``fn(coords, t)`` maps an (n, dim) coordinate array and a scalar time to
    nodal values.  Interval averages use 5-point Gauss quadrature (exact to
    machine precision for the smooth forcings used in practice), and the
    interval sup is taken over the same quadrature samples plus the endpoints
    so that the ledger inequalities are exact by convexity."""

    def __init__(self, fn: Callable):
        self.fn = fn

    def _values(self, mesh, t):
        vals = np.asarray(self.fn(mesh.coords(), float(t)), dtype=float)
        return vals.reshape(mesh.shape)

    def at(self, mesh, t):
        return DiscreteField(mesh, self._values(mesh, t))

    def _sample_times(self, t0, t1):
        mid, half = 0.5 * (t0 + t1), 0.5 * (t1 - t0)
        return np.concatenate([[t0], mid + half * _GAUSS_X, [t1]])

    def average(self, mesh, t0, t1):
        mid, half = 0.5 * (t0 + t1), 0.5 * (t1 - t0)
        acc = np.zeros(mesh.shape)
        for wq, tq in zip(_GAUSS_W, mid + half * _GAUSS_X):
            acc += wq * self._values(mesh, tq)
        return DiscreteField(mesh, acc / 2.0)

    def interval_sup_lq(self, mesh, t0, t1, q):
        return max(lq_norm(self.at(mesh, t), q) for t in self._sample_times(t0, t1))

    def interval_sup_tv(self, mesh, t0, t1):
        return max(total_variation(self.at(mesh, t)) for t in self._sample_times(t0, t1))

    def dt_l1_integral(self, mesh, t0, t1):
        mid, half = 0.5 * (t0 + t1), 0.5 * (t1 - t0)
        delta = max(1e-6 * (t1 - t0), 1e-9)
        total = 0.0
        w = mesh.node_volumes
        for wq, tq in zip(_GAUSS_W, mid + half * _GAUSS_X):
            dft = (self._values(mesh, tq + delta) - self._values(mesh, tq - delta)) / (2 * delta)
            total += wq * float(np.sum(w * np.abs(dft)))
        return total * half


class SampledForcing(Forcing):
    """Forcing reconstructed piecewise-linearly from time-stamped fields.

    Interval averages integrate the reconstruction exactly; norms along a
    linear segment are convex in t, so segment-end maxima bound the interval
    sup exactly."""

    def __init__(self, times, fields):
        self.times = np.asarray(times, dtype=float)
        self.fields = list(fields)
        if self.times.size != len(self.fields) or self.times.size < 1:
            raise ParabolicError("need one field per sample time")
        if np.any(np.diff(self.times) <= 0):
            raise ParabolicError("sample times must be strictly increasing")

    def _vals(self, i):
        return self.fields[i].values

    def at(self, mesh, t):
        ts = self.times
        t = float(np.clip(t, ts[0], ts[-1]))
        k = int(np.clip(np.searchsorted(ts, t) - 1, 0, ts.size - 2)) if ts.size > 1 else 0
        if ts.size == 1:
            return self.fields[0].copy()
        th = (t - ts[k]) / (ts[k + 1] - ts[k])
        return DiscreteField(mesh, (1 - th) * self._vals(k) + th * self._vals(k + 1))

    def _knots_in(self, t0, t1):
        inner = self.times[(self.times > t0) & (self.times < t1)]
        return np.concatenate([[t0], inner, [t1]])

    def average(self, mesh, t0, t1):
        knots = self._knots_in(t0, t1)
        acc = np.zeros(mesh.shape)
        for a, b in zip(knots[:-1], knots[1:]):
            fa, fb = self.at(mesh, a).values, self.at(mesh, b).values
            acc += 0.5 * (fa + fb) * (b - a)
        return DiscreteField(mesh, acc / (t1 - t0))

    def interval_sup_lq(self, mesh, t0, t1, q):
        return max(lq_norm(self.at(mesh, t), q) for t in self._knots_in(t0, t1))

    def interval_sup_tv(self, mesh, t0, t1):
        return max(total_variation(self.at(mesh, t)) for t in self._knots_in(t0, t1))

    def dt_l1_integral(self, mesh, t0, t1):
        knots = self._knots_in(t0, t1)
        w = mesh.node_volumes
        total = 0.0
        for a, b in zip(knots[:-1], knots[1:]):
            total += float(np.sum(w * np.abs(self.at(mesh, b).values - self.at(mesh, a).values)))
        return total

    def is_zero(self):
        return all(np.all(f.values == 0.0) for f in self.fields)


# -- setup and report --------------------------------------------------------------


@dataclass(frozen=True)
class DiagnosticsOptions:
    """Which ledger families a run certifies and reports."""

    q_values: tuple = (1.0, 2.0)
    bv_check: bool = True
    sup_check: bool = True
    energy_check: bool = True
    tol_step: float = 1e-8
    tol_energy: float = 1e-8
    tol_lipschitz: float = 1e-6


@dataclass
class ProblemSetup:
    """Complete description of one initial boundary value problem run."""

    mesh: object
    flux: object
    graph: object
    horizon: float
    steps: int
    u0: DiscreteField
    w0: DiscreteField
    forcing: Forcing = dc_field(default_factory=ZeroForcing)
    solver: SolverOptions = dc_field(default_factory=SolverOptions)
    diagnostics: DiagnosticsOptions = dc_field(default_factory=DiagnosticsOptions)

    def __post_init__(self):
        if self.horizon <= 0 or self.steps < 1:
            raise ParabolicError("need horizon > 0 and steps >= 1")
        if not self.u0.is_dirichlet(tol=0.0):
            raise ParabolicError("u0 must vanish on the boundary")
        gap = membership_gap(self.graph, self.u0, self.w0)
        w_int = np.abs(self.w0.values[self.mesh.interior])
        tol = np.maximum(self.solver.mem_floor,
                         self.solver.mem_scale * self.solver.lam_final * (1.0 + w_int))
        if gap.size and np.any(gap > tol):
            bad = int(np.argmax(gap - tol))
            raise ParabolicError(
                f"initial pair violates membership at interior node {bad}: "
                f"gap {float(np.max(gap)):.3e}")

    @property
    def tau(self):
        return self.horizon / self.steps

    def q_ledger(self):
        pc = self.flux.p / (self.flux.p - 1.0)
        qs = list(dict.fromkeys(list(self.q_values_base()) + [pc]))
        qs.sort()
        if self.diagnostics.sup_check:
            qs.append(np.inf)
        return qs

    def q_values_base(self):
        return [float(q) for q in self.diagnostics.q_values]


@dataclass
class TrajectoryReport:
    """Trajectory fields, interpolants, and the certified ledger."""

    setup: ProblemSetup
    times: np.ndarray
    us: list
    ws: list
    fbars: list
    entries: list
    reported: dict

    @property
    def tau(self):
        return self.setup.tau

    def piecewise_constant(self, t):
        """Right-continuous step interpolant: step n+1 values on (t_n, t_{n+1}]."""
        n = self._index(t, constant=True)
        return self.us[n], self.ws[n]

    def piecewise_linear(self, t):
        """Nodal linear-in-time interpolant."""
        t = float(np.clip(t, 0.0, self.times[-1]))
        k = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.us) - 2))
        th = (t - self.times[k]) / self.tau
        mesh = self.setup.mesh
        u = DiscreteField(mesh, (1 - th) * self.us[k].values + th * self.us[k + 1].values)
        w = DiscreteField(mesh, (1 - th) * self.ws[k].values + th * self.ws[k + 1].values)
        return u, w

    def _index(self, t, constant=False):
        t = float(t)
        if t <= 0.0:
            return 0
        t = min(t, float(self.times[-1]))
        return int(np.ceil(t / self.tau - 1e-12))

    @property
    def lipschitz_constant(self):
        return self.reported.get("time_lipschitz_empirical", 0.0)

    def all_passed(self):
        return all(e.passed for e in self.entries)

    def failed_entries(self):
        return [e for e in self.entries if not e.passed]


def step(setup, n, w_prev, warm_start=None):
    """One implicit Euler step: solve the inclusion with time-scaled flux and
    data w_n + tau * fbar_n.  Returns (u_{n+1}, w_{n+1}, EllipticSolution)."""
    if np.any(~np.isfinite(w_prev.values)):
        raise ParabolicError(f"step {n}: previous state is not finite")
    tau = setup.tau
    fbar = setup.forcing.average(setup.mesh, n * tau, (n + 1) * tau)
    rhs = DiscreteField(setup.mesh, w_prev.values + tau * fbar.values)
    scaled = _scaled_flux(setup)
    try:
        sol = solve_inclusion(setup.mesh, scaled, setup.graph, rhs,
                              options=setup.solver, warm_start=warm_start)
    except EllipticError as exc:
        raise ParabolicError(f"step {n} failed: {exc}") from exc
    return sol.u, sol.w, sol


def _scaled_flux(setup):
    cached = getattr(setup, "_scaled_flux_cache", None)
    if cached is None:
        cached = setup.flux.scaled(setup.tau)
        setup._scaled_flux_cache = cached
    return cached


def run(setup):
    """Run all steps and certify the trajectory ledger.  See module docstring
    for the ledger contents."""
    mesh, graph, flux = setup.mesh, setup.graph, setup.flux
    tau, N = setup.tau, setup.steps
    diag = setup.diagnostics
    vol = mesh.node_volumes
    qs = setup.q_ledger()

    us = [setup.u0.copy()]
    ws = [setup.w0.copy()]
    fbars = []
    entries = []
    reported = {}

    sup_f = {q: 0.0 for q in qs}
    sup_f_tv = 0.0
    lip_max = 0.0
    energy_gap_max = 0.0
    conj_clamp_max = 0.0
    mem_gap_max = 0.0
    diss_sum = 0.0
    grad_sup = 0.0
    u_sup = lq_norm(setup.u0, np.inf)
    rlo, rhi = graph.range_bounds()
    tv_check = diag.bv_check and flux.x_independent

    conj_prev, clamp = _conjugate_mass(graph, ws[0], vol, rlo, rhi)
    conj_clamp_max = max(conj_clamp_max, clamp)
    warm = setup.u0

    for n in range(N):
        u_next, w_next, sol = step(setup, n, ws[-1], warm_start=warm)
        fbar = setup.forcing.average(mesh, n * tau, (n + 1) * tau)
        fbars.append(fbar)
        mem_gap_max = max(mem_gap_max, sol.membership_gap)

        for q in qs:
            fq = setup.forcing.interval_sup_lq(mesh, n * tau, (n + 1) * tau, q)
            sup_f[q] = max(sup_f[q], fq)
            qname = "inf" if q == np.inf else f"{q:g}"
            entries.append(EstimateEntry(
                f"step_data_norm[q={qname}]", lq_norm(w_next, q),
                lq_norm(ws[-1], q) + tau * fq, tol_rel=diag.tol_step, step=n + 1))
        if tv_check:
            ftv = setup.forcing.interval_sup_tv(mesh, n * tau, (n + 1) * tau)
            sup_f_tv = max(sup_f_tv, ftv)
            entries.append(EstimateEntry(
                "step_tv_bound", total_variation(w_next),
                total_variation(ws[-1]) + tau * ftv, tol_rel=1e-6, step=n + 1))

        dw = w_next.values - ws[-1].values
        lip_max = max(lip_max, float(np.sum(vol * np.abs(dw))) / tau)

        if diag.energy_check:
            conj_next, clamp = _conjugate_mass(graph, w_next, vol, rlo, rhi)
            conj_clamp_max = max(conj_clamp_max, clamp)
            pair_prev = float(np.sum(vol * dw * us[-1].values))
            pair_next = float(np.sum(vol * dw * u_next.values))
            d_conj = conj_next - conj_prev
            scale = 1.0 + abs(conj_next) + abs(conj_prev) + \
                float(np.sum(vol * np.abs(dw))) * max(1.0, lq_norm(u_next, np.inf),
                                                      lq_norm(us[-1], np.inf))
            entries.append(EstimateEntry("energy_identity_lower", pair_prev - d_conj,
                                         0.0, tol_abs=diag.tol_energy * scale, step=n + 1))
            entries.append(EstimateEntry("energy_identity_upper", d_conj - pair_next,
                                         0.0, tol_abs=diag.tol_energy * scale, step=n + 1))
            energy_gap_max = max(energy_gap_max, pair_next - pair_prev)
            conj_prev = conj_next

        diss_sum += tau * gradient_lp_norm(mesh, u_next, flux.p) ** flux.p
        grad_sup = max(grad_sup, gradient_lp_norm(mesh, u_next, flux.p))
        u_sup = max(u_sup, lq_norm(u_next, np.inf))

        us.append(u_next)
        ws.append(w_next)
        warm = u_next

    # global data-norm bounds (telescoped)
    for q in qs:
        qname = "inf" if q == np.inf else f"{q:g}"
        lhs = max(lq_norm(w, q) for w in ws)
        entries.append(EstimateEntry(
            f"global_data_norm[q={qname}]", lhs,
            setup.horizon * sup_f[q] + lq_norm(ws[0], q), tol_rel=diag.tol_step))
    if tv_check:
        entries.append(EstimateEntry(
            "global_tv_bound", max(total_variation(w) for w in ws),
            setup.horizon * sup_f_tv + total_variation(ws[0]), tol_rel=1e-6))

    # time-Lipschitz bound: ||f(0) - A(u0)||_1 + int ||df/dt||_1
    a_u0 = apply_operator(mesh, flux, setup.u0)
    f0 = setup.forcing.at(mesh, 0.0)
    lip_rhs = float(np.sum(vol * np.abs(f0.values - a_u0.values))) \
        + setup.forcing.dt_l1_integral(mesh, 0.0, setup.horizon)
    entries.append(EstimateEntry("time_lipschitz", lip_max, lip_rhs,
                                 tol_abs=diag.tol_lipschitz * (1.0 + lip_rhs)))

    reported.update({
        "time_lipschitz_empirical": lip_max,
        "time_lipschitz_bound": lip_rhs,
        "dissipation_sum": diss_sum,
        "gradient_sup": grad_sup,
        "membership_gap_max": mem_gap_max,
        "energy_gap_max": energy_gap_max,
        "conjugate_clamp_max": conj_clamp_max,
        "sup_norm_u": u_sup,
        "sup_forcing": {("inf" if q == np.inf else f"{q:g}"): v for q, v in sup_f.items()},
    })
    times = np.linspace(0.0, setup.horizon, N + 1)
    return TrajectoryReport(setup=setup, times=times, us=us, ws=ws,
                            fbars=fbars, entries=entries, reported=reported)


def _conjugate_mass(graph, w, vol, rlo, rhi):
    """Volume sum of the conjugate potential, with w clamped into the closed
    range of the graph (the clamp magnitude, a membership-slack effect, is
    reported)."""
    wc = np.clip(w.values, rlo, rhi)
    clamp = float(np.max(np.abs(wc - w.values)))
    return float(np.sum(vol * np.asarray(graph.conjugate(wc), dtype=float))), clamp


# -- comparison --------------------------------------------------------------------


@dataclass
class ComparisonReport:
    """Paired-run certificates of the positive-part comparison principle and
    L1 stability (exact discrete inequalities for x-independent fluxes)."""

    report1: TrajectoryReport
    report2: TrajectoryReport
    entries: list
    data_ordered: bool

    def all_passed(self):
        return all(e.passed for e in self.entries)


def compare(setup1, setup2, tol_rel=1e-8):
    """Run both setups and certify, at every step n,

        int (w1_n - w2_n)_+ <= int (w1_0 - w2_0)_+ + sum_{m<n} tau int (f1_m - f2_m)_+
        ||w1_n - w2_n||_1  <= ||w1_0 - w2_0||_1  + sum_{m<n} tau ||f1_m - f2_m||_1

    and, when the data are ordered (w1_0 >= w2_0, f1 >= f2), pointwise order
    of the trajectories.  Requires identical mesh, graph, time grid, and the
    same x-independent flux."""
    if not setup1.mesh.compatible(setup2.mesh):
        raise ParabolicError("comparison requires a common mesh")
    if (setup1.graph.kind, str(setup1.graph.params)) != (setup2.graph.kind, str(setup2.graph.params)):
        raise ParabolicError("comparison requires a common graph")
    if not (setup1.flux.x_independent and setup2.flux.x_independent):
        raise ParabolicError("comparison requires x-independent fluxes")
    if setup1.flux.label != setup2.flux.label:
        raise ParabolicError("comparison requires the same flux model")
    if (setup1.steps != setup2.steps) or (setup1.horizon != setup2.horizon):
        raise ParabolicError("comparison requires a common time grid")

    rep1 = run(setup1)
    rep2 = run(setup2)
    mesh = setup1.mesh
    vol = mesh.node_volumes
    tau = setup1.tau

    d0 = rep1.ws[0].values - rep2.ws[0].values
    pos0 = float(np.sum(vol * np.maximum(d0, 0.0)))
    l10 = float(np.sum(vol * np.abs(d0)))
    scale = 1.0 + l10
    ordered = bool(np.all(d0 >= 0.0))

    entries = []
    pos_f = l1_f = 0.0
    for n in range(1, setup1.steps + 1):
        df = rep1.fbars[n - 1].values - rep2.fbars[n - 1].values
        pos_f += tau * float(np.sum(vol * np.maximum(df, 0.0)))
        l1_f += tau * float(np.sum(vol * np.abs(df)))
        scale = max(scale, 1.0 + l10 + l1_f)
        ordered = ordered and bool(np.all(df >= -1e-14))
        dn = rep1.ws[n].values - rep2.ws[n].values
        entries.append(EstimateEntry(
            "comparison_positive_part", float(np.sum(vol * np.maximum(dn, 0.0))),
            pos0 + pos_f, tol_rel=tol_rel, tol_abs=1e-9 * scale, step=n))
        entries.append(EstimateEntry(
            "comparison_l1", float(np.sum(vol * np.abs(dn))),
            l10 + l1_f, tol_rel=tol_rel, tol_abs=1e-9 * scale, step=n))
    if ordered:
        worst = min(float(np.min(rep1.ws[n].values - rep2.ws[n].values))
                    for n in range(1, setup1.steps + 1))
        entries.append(EstimateEntry("pointwise_order", -worst, 0.0,
                                     tol_abs=1e-9 * scale))
    return ComparisonReport(report1=rep1, report2=rep2, entries=entries,
                            data_ordered=ordered)


# -- entropy harness ---------------------------------------------------------------


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _dsmoothstep(t):
    inside = (t > 0.0) & (t < 1.0)
    t = np.clip(t, 0.0, 1.0)
    return np.where(inside, 6.0 * t * (1.0 - t), 0.0)


class _Bump1D:
    """C^1 bump on [a, b]: smoothstep up to the midpoint, mirrored down."""

    def __init__(self, a, b):
        self.a, self.b = float(a), float(b)
        self.m = 0.5 * (a + b)
        self.w = self.m - self.a

    def value(self, s):
        s = np.asarray(s, dtype=float)
        up = _smoothstep((s - self.a) / self.w)
        down = _smoothstep((self.b - s) / self.w)
        return np.where(s <= self.m, up, down)

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        up = _dsmoothstep((s - self.a) / self.w) / self.w
        down = -_dsmoothstep((self.b - s) / self.w) / self.w
        return np.where(s <= self.m, up, down)


class _TimeCap:
    """C^1 profile equal to 1 at t = 0, decaying to 0 at t_end < T."""

    def __init__(self, t_end):
        self.t_end = float(t_end)

    def value(self, t):
        return _smoothstep(np.asarray((self.t_end - t) / self.t_end))

    def derivative(self, t):
        return -_dsmoothstep(np.asarray((self.t_end - t) / self.t_end)) / self.t_end


@dataclass
class _ZetaMember:
    """One admissible test function zeta(x, t) = space(x) * time(t)."""

    label: str
    case: str  # "i": s >= 0, zeta may touch the boundary; "ii": any s, compact support
    space_value: Callable
    space_gradient: Callable
    time_value: Callable
    time_derivative: Callable

    def value(self, coords, t):
        return self.space_value(coords) * float(self.time_value(t))

    def dt(self, coords, t):
        return self.space_value(coords) * float(self.time_derivative(t))

    def gradient(self, coords, t):
        return self.space_gradient(coords) * float(self.time_value(t))


class BumpTestFamily:
    """Deterministic finite family of nonnegative space-time bump test
    functions: one boundary-touching member (constant in space, decaying cap
    in time) plus compactly supported tensor bumps on dyadic subboxes."""

    def __init__(self, mesh, horizon, n_members=5):
        if n_members < 1:
            raise ParabolicError("family needs at least one member")
        self.members = []
        T = float(horizon)
        ext = mesh.extents

        def const_space(coords):
            return np.ones(coords.shape[0])

        def zero_grad(coords):
            return np.zeros((coords.shape[0], mesh.dim))

        cap = _TimeCap(0.7 * T)
        self.members.append(_ZetaMember("cap_global", "i", const_space, zero_grad,
                                        cap.value, cap.derivative))
        boxes = _dyadic_boxes(ext, n_members - 1)
        windows = [(_TimeCap(0.8 * T), None), (None, (0.15 * T, 0.85 * T)),
                   (_TimeCap(0.5 * T), None), (None, (0.05 * T, 0.6 * T))]
        for k, box in enumerate(boxes):
            bumps = [_Bump1D(a, b) for a, b in box]

            def mk_space(bs):
                def sval(coords):
                    out = np.ones(coords.shape[0])
                    for d, bb in enumerate(bs):
                        out = out * bb.value(coords[:, d])
                    return out

                def sgrad(coords):
                    vals = [bb.value(coords[:, d]) for d, bb in enumerate(bs)]
                    ders = [bb.derivative(coords[:, d]) for d, bb in enumerate(bs)]
                    out = np.zeros((coords.shape[0], len(bs)))
                    for d in range(len(bs)):
                        g = ders[d]
                        for dd in range(len(bs)):
                            if dd != d:
                                g = g * vals[dd]
                        out[:, d] = g
                    return out

                return sval, sgrad

            sval, sgrad = mk_space(bumps)
            capk, window = windows[k % len(windows)]
            if capk is not None:
                tv_, td_ = capk.value, capk.derivative
            else:
                tb = _Bump1D(*window)
                tv_, td_ = tb.value, tb.derivative
            self.members.append(_ZetaMember(f"bump_{k}", "ii", sval, sgrad, tv_, td_))


def _dyadic_boxes(extents, count):
    """Deterministic list of axis-aligned subboxes strictly inside the domain."""
    boxes = []
    fracs = [(0.1, 0.9), (0.1, 0.5), (0.5, 0.9), (0.3, 0.7), (0.2, 0.6), (0.4, 0.8)]
    for k in range(count):
        fa, fb = fracs[k % len(fracs)]
        box = []
        for (a, b) in extents:
            box.append((a + fa * (b - a), a + fb * (b - a)))
        boxes.append(tuple(box))
    return boxes


@dataclass
class EntropyReport:
    """Margins of the discretized entropy inequalities over the certifying
    family.  A finite family can only falsify the entropy property; entries
    are named accordingly."""

    entries: list
    slack: dict
    flagged: bool

    def all_passed(self):
        return not self.flagged


def entropy_check(report, s_values, family=None, slack_constant=10.0):
    """Evaluate both entropy inequality families on the trajectory.

    For each admissible pair (s, zeta) the space-time integral

        int_Q H0(v - s) [flux(grad u) . grad zeta - (g(v) - g(s)) dzeta/dt
                         - f zeta] dx dt - int (w0 - g(s))_+ zeta(., 0) dx

    must be <= slack (first family), and its mirrored counterpart with
    H0(-s - v) and + int (g(-s) - w0)_+ zeta(., 0) dx must be >= -slack
    (second family).  Space integrals use nodal quadrature (cell averages for
    the flux term), time integrals are trapezoidal per step; the slack
    absorbs that quadrature error and scales like (h^2 + tau)."""
    setup = report.setup
    mesh, graph, flux = setup.mesh, setup.graph, setup.flux
    if not flux.x_independent:
        raise ParabolicError("entropy check requires an x-independent flux")
    if family is None:
        family = BumpTestFamily(mesh, setup.horizon, n_members=5)
    tau = setup.tau
    vol = mesh.node_volumes.ravel()
    coords = mesh.coords()
    qpts = mesh.quad_points()
    cvol = cell_volumes(mesh)
    fmax = 0.0

    # precompute per-step cell data
    steps = []
    vmax = 0.0
    alpha_max = 0.0
    for n in range(1, setup.steps + 1):
        u, w = report.us[n], report.ws[n]
        v = u.values.ravel() + w.values.ravel()
        vmax = max(vmax, float(np.max(np.abs(v))))
        al = flux.flux(qpts, cell_gradients(mesh, u))
        alpha_max = max(alpha_max, float(np.max(np.abs(al))))
        vcell = _cell_average(mesh, v)
        fl = setup.forcing.at(mesh, report.times[n]).values.ravel()
        fl_prev = setup.forcing.at(mesh, report.times[n - 1]).values.ravel()
        fmax = max(fmax, float(np.max(np.abs(fl))), float(np.max(np.abs(fl_prev))))
        steps.append((v, vcell, al, fl_prev, fl))

    w0 = report.ws[0].values.ravel()
    entries = []
    slacks = {}
    hmax = max(mesh.spacing)

    for member in family.members:
        z_nodes = [member.value(coords, t) for t in report.times]
        dz_nodes = [member.dt(coords, t) for t in report.times]
        gz_cells = [member.gradient(qpts, t) for t in report.times]
        zeta_mass = sum(
            tau * 0.5 * (float(np.sum(vol * (np.abs(z_nodes[n - 1]) + np.abs(dz_nodes[n - 1])))
                         + np.sum(cvol * np.abs(gz_cells[n - 1]).sum(axis=1)))
                         + float(np.sum(vol * (np.abs(z_nodes[n]) + np.abs(dz_nodes[n])))
                         + np.sum(cvol * np.abs(gz_cells[n]).sum(axis=1))))
            for n in range(1, setup.steps + 1))
        zeta_mass += float(np.sum(vol * np.abs(z_nodes[0])))
        slack = slack_constant * (hmax ** 2 + tau) * (1.0 + vmax + fmax + alpha_max) * max(zeta_mass, 1e-30)
        for s in s_values:
            s = float(s)
            for sign_tag in ("first", "second"):
                if member.case == "i" and not (s >= 0.0):
                    continue
                total = _entropy_integral(report, steps, member, z_nodes, dz_nodes,
                                          gz_cells, graph, s, sign_tag, vol, cvol, w0, mesh)
                name = f"entropy_{sign_tag}[s={s:g},zeta={member.label}]"
                if sign_tag == "first":
                    entries.append(EstimateEntry(name, total, 0.0, tol_abs=slack))
                else:
                    entries.append(EstimateEntry(name, -total, 0.0, tol_abs=slack))
                slacks[name] = slack
    flagged = any(not e.passed for e in entries)
    return EntropyReport(entries=entries, slack=slacks, flagged=flagged)


def _cell_average(mesh, nodal_flat):
    if mesh.dim == 1:
        return 0.5 * (nodal_flat[1:] + nodal_flat[:-1])
    return nodal_flat[mesh._triangles].mean(axis=1)


def _entropy_integral(report, steps, member, z_nodes, dz_nodes, gz_cells,
                      graph, s, sign_tag, vol, cvol, w0, mesh):
    setup = report.setup
    tau = setup.tau
    gs = float(graph.g_map(s)) if sign_tag == "first" else float(graph.g_map(-s))
    total = 0.0
    for n in range(1, setup.steps + 1):
        v, vcell, al, fl_prev, fl = steps[n - 1]
        gv = np.asarray(graph.g_map(v), dtype=float)
        if sign_tag == "first":
            ind_n = (v - s) > 0.0
            ind_c = (vcell - s) > 0.0
        else:
            ind_n = (-s - v) > 0.0
            ind_c = (-s - vcell) > 0.0

        def integrand(z, dz, gz, f_nodes):
            flux_term = float(np.sum(cvol[ind_c] * np.sum(al[ind_c] * gz[ind_c], axis=1)))
            time_term = -float(np.sum(vol[ind_n] * (gv[ind_n] - gs) * dz[ind_n]))
            force_term = -float(np.sum(vol[ind_n] * f_nodes[ind_n] * z[ind_n]))
            return flux_term + time_term + force_term

        total += tau * 0.5 * (integrand(z_nodes[n - 1], dz_nodes[n - 1], gz_cells[n - 1], fl_prev)
                              + integrand(z_nodes[n], dz_nodes[n], gz_cells[n], fl))
    if sign_tag == "first":
        total -= float(np.sum(vol * np.maximum(w0 - gs, 0.0) * z_nodes[0]))
    else:
        total += float(np.sum(vol * np.maximum(gs - w0, 0.0) * z_nodes[0]))
    return total
