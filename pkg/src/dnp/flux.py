"""Flux models for quasilinear diffusion: potential/flux pairs with p-growth.

A model packages a convex potential a(x, z), its gradient flux alpha(x, z) =
D_z a(x, z), an exponent p in (1, inf), and structure constants (c, C) such
that, uniformly in x,

    c|z|^p - C <= a(x, z) <= C(|z|^p + 1),
    |alpha(x, z)| <= C(|z|^{p-1} + 1),      alpha(x, 0) = 0,
    (alpha(x,z1) - alpha(x,z2)) . (z1 - z2) >= c |z1 - z2|^p          (p >= 2)
                                >= c |z1-z2|^2 / (|z1|^{2-p} + |z2|^{2-p} + C)
                                                                      (p < 2).

``audit_hypotheses`` checks all of these by deterministic seeded sampling and
reports worst-case margins with witnesses; it is the acceptance gate for any
user-supplied model.

Shapes: ``x`` and ``z`` are (n, d) arrays with d in {1, 2}; ``potential``
returns (n,), ``flux`` (n, d), and ``flux_jacobian`` (n, d, d).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

__all__ = [
    "FluxError",
    "FluxModel",
    "FluxAuditReport",
    "make_p_laplacian",
    "make_sum_p_laplacian",
    "make_weighted_p_laplacian",
    "scale_flux",
    "audit_hypotheses",
    "make_flux",
]

_JAC_FLOOR = 1e-12  # |z| floor inside Hessians only; residual fluxes are exact


class FluxError(ValueError):
    """Invalid flux parameters."""


@dataclass(frozen=True)
class FluxModel:
    """Potential/flux pair with p-growth structure constants.

    ``x_independent`` marks models with alpha(x, z) = alpha(z); the
    comparison and entropy harnesses require it.
    """

    p: float
    c: float
    C: float
    x_independent: bool
    label: str
    potential_fn: Callable
    flux_fn: Callable
    jacobian_fn: Callable
    kind: str = "custom"
    params: Optional[dict] = None

    def potential(self, x, z):
        """a(x, z) for stacked points: x, z of shape (n, d) -> (n,)."""
        return self.potential_fn(np.asarray(x, dtype=float), np.asarray(z, dtype=float))

    def flux(self, x, z):
        """alpha(x, z) = D_z a(x, z), shape (n, d)."""
        return self.flux_fn(np.asarray(x, dtype=float), np.asarray(z, dtype=float))

    def flux_jacobian(self, x, z):
        """D_z alpha(x, z), shape (n, d, d).  Degenerate or singular points
        are floored at |z| ~ 1e-12 (used only to build Newton matrices)."""
        return self.jacobian_fn(np.asarray(x, dtype=float), np.asarray(z, dtype=float))

    def scaled(self, factor):
        """The model with potential multiplied by ``factor`` > 0 (used to fold
        the time step into the implicit elliptic subproblem)."""
        return scale_flux(self, factor)

    def __repr__(self):
        return f"FluxModel({self.label}, p={self.p:g}, c={self.c:g}, C={self.C:g})"


def _norm(z):
    return np.sqrt(np.sum(z * z, axis=-1))


def _p_constant_lower(p):
    """A structure constant valid for both the growth and monotonicity bounds
    of the pure p-Laplacian.

    For p >= 2 the monotonicity constant 2^{2-p} works, but the growth lower
    bound c|z|^p - C <= |z|^p/p forces c <= 1/p, so the shared constant is
    min(1/p, 2^{2-p}).  For p < 2 the inequality with denominator
    |z1|^{2-p} + |z2|^{2-p} + C holds with p - 1; the shared constant is the
    largest dyadic below min(p - 1, 1/p) (validated by the audit)."""
    if p >= 2.0:
        return min(1.0 / p, 2.0 ** (2.0 - p))
    target = min(p - 1.0, 1.0 / p)
    return 2.0 ** math.floor(math.log2(target))


def _plap_parts(p):
    def pot(z):
        return _norm(z) ** p / p

    def flux(z):
        a = _norm(z)
        with np.errstate(all="ignore"):
            fac = np.where(a > 0, a ** (p - 2.0), 0.0)
        return fac[..., None] * z

    def jac(z):
        n, d = z.shape
        a = np.maximum(_norm(z), _JAC_FLOOR)
        eye = np.eye(d)[None, :, :]
        zz = z[:, :, None] * z[:, None, :]
        with np.errstate(all="ignore"):
            out = (a ** (p - 2.0))[:, None, None] * eye \
                + ((p - 2.0) * a ** (p - 4.0))[:, None, None] * zz
        return out

    return pot, flux, jac


def make_p_laplacian(p):
    """Isotropic p-Laplacian model: a(z) = |z|^p / p, alpha(z) = |z|^{p-2} z.

    alpha is extended by 0 at z = 0 (continuously for p < 2)."""
    p = float(p)
    if not p > 1.0:
        raise FluxError(f"p-Laplacian requires p > 1, got {p}")
    pot, flux, jac = _plap_parts(p)
    return FluxModel(
        p=p, c=_p_constant_lower(p), C=1.0, x_independent=True,
        label=f"p_laplacian(p={p:g})",
        potential_fn=lambda x, z: pot(z),
        flux_fn=lambda x, z: flux(z),
        jacobian_fn=lambda x, z: jac(z),
        kind="p_laplacian", params={"p": p})


def make_sum_p_laplacian(ps):
    """Sum of p_i-Laplacian potentials; the structure exponent is max(p_i)."""
    ps = [float(q) for q in ps]
    if not ps or any(q <= 1.0 for q in ps):
        raise FluxError(f"every exponent must exceed 1, got {ps}")
    pmax = max(ps)
    parts = [_plap_parts(q) for q in ps]

    def pot(x, z):
        return sum(pp(z) for pp, _, _ in parts)

    def flux(x, z):
        return sum(ff(z) for _, ff, _ in parts)

    def jac(x, z):
        return sum(jj(z) for _, _, jj in parts)

    return FluxModel(
        p=pmax, c=_p_constant_lower(pmax), C=float(len(ps)), x_independent=True,
        label=f"sum_p_laplacian(ps={ps})",
        potential_fn=pot, flux_fn=flux, jacobian_fn=jac,
        kind="sum_p_laplacian", params={"ps": ps})


def make_weighted_p_laplacian(p, weight, w_lo, w_hi):
    """x-dependent model a(x, z) = w(x) |z|^p / p with a positive bounded
    weight.  ``weight`` maps (n, d) points to (n,) values; the declared bounds
    0 < w_lo <= w(x) <= w_hi enter the structure constants and are spot-checked
    by the audit."""
    p = float(p)
    if not p > 1.0:
        raise FluxError(f"p-Laplacian requires p > 1, got {p}")
    w_lo, w_hi = float(w_lo), float(w_hi)
    if not (0.0 < w_lo <= w_hi):
        raise FluxError("weight bounds must satisfy 0 < w_lo <= w_hi")
    pot, flux, jac = _plap_parts(p)

    return FluxModel(
        p=p, c=w_lo * _p_constant_lower(p), C=max(w_hi, 1.0), x_independent=False,
        label=f"weighted_p_laplacian(p={p:g})",
        potential_fn=lambda x, z: weight(x) * pot(z),
        flux_fn=lambda x, z: weight(x)[:, None] * flux(z),
        jacobian_fn=lambda x, z: weight(x)[:, None, None] * jac(z),
        kind="weighted_p_laplacian", params={"p": p, "w_lo": w_lo, "w_hi": w_hi})


def scale_flux(model, factor):
    """Multiply the potential (hence flux and jacobian) by ``factor`` > 0."""
    factor = float(factor)
    if factor <= 0:
        raise FluxError("scale factor must be positive")
    return replace(
        model,
        c=model.c * factor,
        C=model.C * max(factor, 1.0),
        label=f"{model.label} * {factor:g}",
        potential_fn=lambda x, z, _m=model: factor * _m.potential_fn(x, z),
        flux_fn=lambda x, z, _m=model: factor * _m.flux_fn(x, z),
        jacobian_fn=lambda x, z, _m=model: factor * _m.jacobian_fn(x, z),
    )


@dataclass
class FluxAuditReport:
    """Worst-case margins of the structure hypotheses over a seeded sample.

    Margins are slack values (>= 0 means the inequality holds); each margin
    carries the witnessing sample.  ``gradient_error`` is the relative
    mismatch between the flux and central differences of the potential."""

    label: str
    samples: int
    seed: int
    growth_lower: float
    growth_upper: float
    flux_bound: float
    flux_at_zero: float
    monotonicity: float
    gradient_error: float
    witnesses: dict
    passed: bool

    def summary(self):
        lines = [f"flux audit: {self.label} ({self.samples} samples, seed {self.seed})",
                 f"  growth lower margin   {self.growth_lower:.6e}",
                 f"  growth upper margin   {self.growth_upper:.6e}",
                 f"  flux bound margin     {self.flux_bound:.6e}",
                 f"  |flux(x, 0)|          {self.flux_at_zero:.6e}",
                 f"  monotonicity margin   {self.monotonicity:.6e}",
                 f"  max gradient error    {self.gradient_error:.6e}",
                 f"  passed: {self.passed}"]
        return "\n".join(lines)


def audit_hypotheses(model, sample_count=10_000, seed=0, dim=2, z_max=1e3,
                     x_box=((0.0, 1.0), (0.0, 1.0)), grad_tol=1e-6):
    """Randomized check of the growth, boundedness, monotonicity, and
    gradient-consistency hypotheses.

    Failures are reported, not raised: the report carries the worst margins
    and the witnessing points.  Magnitudes are sampled log-uniformly in
    [1e-6, z_max] so both the degenerate origin and the growth regime are
    exercised.
    """
    if sample_count < 1:
        raise FluxError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    n = int(sample_count)
    d = int(dim)

    def sample_z(k):
        mags = 10.0 ** rng.uniform(-6, np.log10(z_max), size=k)
        dirs = rng.normal(size=(k, d))
        dirs /= np.maximum(np.linalg.norm(dirs, axis=1), 1e-300)[:, None]
        return mags[:, None] * dirs

    box = np.asarray(x_box, dtype=float)[:d]
    x = rng.uniform(box[:, 0], box[:, 1], size=(n, d))
    z = sample_z(n)
    z2 = sample_z(n)
    p, c, C = model.p, model.c, model.C

    a = model.potential(x, z)
    al = model.flux(x, z)
    nz = _norm(z)

    m_lower = a - (c * nz ** p - C)
    m_upper = C * (nz ** p + 1.0) - a
    m_flux = C * (nz ** (p - 1.0) + 1.0) - _norm(al)
    zero_val = float(np.max(_norm(model.flux(x[:64], np.zeros((min(n, 64), d))))))

    al2 = model.flux(x, z2)
    dz = z - z2
    ndz = _norm(dz)
    lhs = np.sum((al - al2) * dz, axis=1)
    if p >= 2.0:
        rhs = c * ndz ** p
    else:
        rhs = c * ndz ** 2 / (nz ** (2.0 - p) + _norm(z2) ** (2.0 - p) + C)
    m_mono = lhs - rhs

    # gradient consistency away from the degenerate origin
    sel = nz >= 1e-3
    xg, zg, alg = x[sel][:512], z[sel][:512], al[sel][:512]
    gerr = 0.0
    gwit = None
    if len(zg):
        eps_fd = 1e-6 * (1.0 + _norm(zg))
        fd = np.empty_like(zg)
        for k in range(d):
            e = np.zeros(d)
            e[k] = 1.0
            fd[:, k] = (model.potential(xg, zg + eps_fd[:, None] * e)
                        - model.potential(xg, zg - eps_fd[:, None] * e)) / (2.0 * eps_fd)
        rel = _norm(fd - alg) / (1.0 + _norm(alg))
        gerr = float(np.max(rel))
        gwit = zg[int(np.argmax(rel))].tolist()

    def worst(vals, pts):
        i = int(np.argmin(vals))
        return float(vals[i]), pts[i].tolist()

    wl, pl = worst(m_lower, z)
    wu, pu = worst(m_upper, z)
    wf, pf = worst(m_flux, z)
    wm, pm = worst(m_mono, z)
    passed = (wl >= 0.0 and wu >= 0.0 and wf >= 0.0 and wm >= -1e-12 * float(np.max(rhs + 1))
              and zero_val == 0.0 and gerr <= grad_tol)
    return FluxAuditReport(
        label=model.label, samples=n, seed=seed,
        growth_lower=wl, growth_upper=wu, flux_bound=wf,
        flux_at_zero=zero_val, monotonicity=wm, gradient_error=gerr,
        witnesses={"growth_lower": pl, "growth_upper": pu, "flux_bound": pf,
                   "monotonicity": pm, "gradient": gwit},
        passed=bool(passed))


def make_flux(kind, **params):
    """Construct a built-in flux model from its config tag."""
    if kind == "p_laplacian":
        return make_p_laplacian(params["p"])
    if kind == "sum_p_laplacian":
        return make_sum_p_laplacian(params["ps"])
    if kind == "weighted_p_laplacian":
        return make_weighted_p_laplacian(params["p"], params["weight"],
                                         params["w_lo"], params["w_hi"])
    raise FluxError(f"unknown flux kind '{kind}'")
