"""One-dimensional maximal monotone graphs and their convex calculus.

A graph here is a maximal monotone subset of R x R containing (0, 0).  It is
stored as an ordered list of pieces covering the domain; vertical segments
(multi-valued points) arise implicitly wherever adjacent pieces disagree at a
shared breakpoint, and a bounded domain end may carry an unbounded vertical
ray ("wall", e.g. the subdifferential of an interval indicator).

The calculus provided: set-valued evaluation, resolvent (id + lam*G)^{-1},
Yosida regularization, minimal section, convex primitive, Fenchel conjugate,
graph inversion, and the pair of 1-Lipschitz maps b = (id + G)^{-1} and
g = id - b used to rewrite degenerate parabolic problems in the sum variable
v = u + w.

All numeric entry points are vectorized over numpy arrays and accept scalars.
Yosida values are always computed directly in value space (closed forms or a
safeguarded root search on the value variable); forming (v - J)/lam from a
rounded resolvent J would lose eps/lam absolute accuracy and is avoided
throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = [
    "GraphError",
    "Piece",
    "MonotoneGraph",
    "identity_graph",
    "power_graph",
    "exp_graph",
    "log_graph",
    "sign_graph",
    "heaviside_graph",
    "normal_cone_graph",
    "piecewise_graph",
    "make_graph",
]

_BISECT_TOL = 1e-13
_SBIG = 1e12


class GraphError(ValueError):
    """Malformed graph description or evaluation outside the domain."""


@dataclass(frozen=True)
class Piece:
    """One branch of a graph: a nondecreasing function on [lo, hi].

    A piece must be either strictly increasing or constant on its interval
    (this keeps inversion exact).  ``fn`` and ``dfn`` are vectorized;
    ``antiderivative`` is any function F with F' = fn (used for the exact
    primitive; adaptive quadrature is the fallback).
    """

    lo: float
    hi: float
    fn: Callable
    dfn: Callable
    antiderivative: Optional[Callable] = None
    constant: bool = False

    def integral(self, a, b):
        """Integral of fn over [a, b]; exact when an antiderivative exists."""
        if self.constant:
            mid = _safe_point(a, b)
            return float(self.fn(np.asarray(mid))) * (b - a)
        if self.antiderivative is not None:
            return float(self.antiderivative(np.asarray(b)) - self.antiderivative(np.asarray(a)))
        from scipy.integrate import quad

        val, _ = quad(lambda s: float(self.fn(np.asarray(s))), a, b,
                      epsabs=1e-13, epsrel=1e-12, limit=200)
        return val


def _safe_point(lo, hi):
    """A finite evaluation point inside [lo, hi]."""
    if np.isfinite(lo) and np.isfinite(hi):
        return 0.5 * (lo + hi)
    if np.isfinite(lo):
        return lo + 1.0
    if np.isfinite(hi):
        return hi - 1.0
    return 0.0


def _as_array(x):
    a = np.asarray(x, dtype=float)
    return a, (a.ndim == 0)


def _ret(a, scalar):
    return float(np.asarray(a).ravel()[0]) if scalar else a


class MonotoneGraph:
    """Maximal monotone graph on R with 0 in G(0).

    Parameters
    ----------
    pieces : sequence of Piece
        Contiguous cover of the domain, ordered by interval.  Value jumps at
        interior breakpoints are filled in (maximality).
    wall_lo, wall_hi : bool
        Unbounded vertical ray at a finite domain end.
    label : str
        Human-readable tag.
    kind, params : str, dict
        Constructor tag and parameters (used for config round trips).
    yosida_fn, conjugate_fn, inverse_fn : callables, optional
        Exact fast paths; generic algorithms are used where omitted.
    """

    def __init__(self, pieces, wall_lo=False, wall_hi=False, label="graph",
                 kind="piecewise", params=None,
                 yosida_fn=None, pair_fn=None, conjugate_fn=None, inverse_fn=None):
        self.pieces = tuple(pieces)
        if not self.pieces:
            raise GraphError("graph needs at least one piece")
        self.wall_lo = bool(wall_lo)
        self.wall_hi = bool(wall_hi)
        self.label = label
        self.kind = kind
        self.params = dict(params or {})
        self._yosida_fn = yosida_fn
        self._pair_fn = pair_fn  # returns (G_lam(v), J_lam(v)) jointly
        self._conjugate_fn = conjugate_fn
        self._inverse_fn = inverse_fn
        self._index_breakpoints()
        self._validate()
        self._break_prim = None  # cumulative primitive at breakpoints, lazy

    # -- construction ----------------------------------------------------------

    def _index_breakpoints(self):
        self._breaks = np.array([p.lo for p in self.pieces[1:]])
        jl, jh = [], []
        for a, b in zip(self.pieces, self.pieces[1:]):
            jl.append(self._right_lim(a))
            jh.append(self._left_lim(b))
        self._jump_lo = np.array(jl)
        self._jump_hi = np.array(jh)

    def _validate(self):
        for a, b in zip(self.pieces, self.pieces[1:]):
            if a.hi != b.lo:
                raise GraphError("pieces must cover a contiguous interval")
        if self._breaks.size and np.any(self._jump_lo > self._jump_hi + 1e-12):
            raise GraphError("piece values must be nondecreasing across breakpoints")
        lo, hi = self.domain
        if np.isfinite(lo) and not self.wall_lo and np.isfinite(self._left_lim(self.pieces[0])):
            raise GraphError("finite lower domain end needs a wall or a -inf asymptote")
        if np.isfinite(hi) and not self.wall_hi and np.isfinite(self._right_lim(self.pieces[-1])):
            raise GraphError("finite upper domain end needs a wall or a +inf asymptote")
        if (self.wall_lo and not np.isfinite(lo)) or (self.wall_hi and not np.isfinite(hi)):
            raise GraphError("wall requires a finite domain end")
        vset = self.eval_set(0.0)
        if vset is None or vset[0] > 1e-12 or vset[1] < -1e-12:
            raise GraphError("graph must contain (0, 0)")

    @staticmethod
    def _left_lim(piece):
        """Value of fn at the left end of its interval (limit at open ends)."""
        s = piece.lo if np.isfinite(piece.lo) else min(piece.hi, 0.0) - _SBIG
        with np.errstate(all="ignore"):
            return float(piece.fn(np.asarray(s)))

    @staticmethod
    def _right_lim(piece):
        s = piece.hi if np.isfinite(piece.hi) else max(piece.lo, 0.0) + _SBIG
        with np.errstate(all="ignore"):
            return float(piece.fn(np.asarray(s)))

    def _prim_anchors(self):
        """Primitive values at interior breakpoints (anchored to j(0) = 0)."""
        if self._break_prim is None:
            vals = []
            for b in self._breaks:
                vals.append(self._integrate_selection(0.0, float(b)))
            self._break_prim = np.array(vals)
        return self._break_prim

    def _integrate_selection(self, a, b):
        """Signed integral of the minimal section from a to b."""
        if a == b:
            return 0.0
        sign = 1.0
        if a > b:
            a, b, sign = b, a, -1.0
        total = 0.0
        for p in self.pieces:
            lo, hi = max(p.lo, a), min(p.hi, b)
            if lo < hi:
                total += p.integral(lo, hi)
        return sign * total

    # -- structure -------------------------------------------------------------

    @property
    def domain(self):
        """(lo, hi) of D(G); ends may be +-inf."""
        return self.pieces[0].lo, self.pieces[-1].hi

    @property
    def domain_closed(self):
        """Whether each finite domain end belongs to D(G)."""
        lo, hi = self.domain
        closed_lo = bool(np.isfinite(lo)) and (self.wall_lo or np.isfinite(self._left_lim(self.pieces[0])))
        closed_hi = bool(np.isfinite(hi)) and (self.wall_hi or np.isfinite(self._right_lim(self.pieces[-1])))
        return closed_lo, closed_hi

    def range_bounds(self):
        """Closure of the set of attained values, as (lo, hi)."""
        lo = -np.inf if self.wall_lo else self._left_lim(self.pieces[0])
        hi = np.inf if self.wall_hi else self._right_lim(self.pieces[-1])
        return lo, hi

    def _piece_index(self, s):
        return np.searchsorted(self._breaks, s, side="left") if self._breaks.size \
            else np.zeros(np.shape(s), dtype=int)

    def eval_set(self, s):
        """Full value set G(s) as a closed interval (lo, hi), or None when s is
        outside D(G).  Interval ends may be +-inf at walls."""
        s = float(s)
        dlo, dhi = self.domain
        closed_lo, closed_hi = self.domain_closed
        if s < dlo or s > dhi:
            return None
        if s == dlo and np.isfinite(dlo):
            if not closed_lo:
                return None
            v = self._left_lim(self.pieces[0])
            return (-np.inf, v) if self.wall_lo else (v, v)
        if s == dhi and np.isfinite(dhi):
            if not closed_hi:
                return None
            v = self._right_lim(self.pieces[-1])
            return (v, np.inf) if self.wall_hi else (v, v)
        for i, b in enumerate(self._breaks):
            if s == b:
                return (float(self._jump_lo[i]), float(self._jump_hi[i]))
        k = int(self._piece_index(s))
        with np.errstate(all="ignore"):
            v = float(self.pieces[k].fn(np.asarray(s)))
        return (v, v)

    def contains(self, s, v, tol=0.0):
        """Membership test v in G(s) with absolute tolerance."""
        vset = self.eval_set(s)
        if vset is None:
            return False
        return vset[0] - tol <= v <= vset[1] + tol

    def minimal_section(self, s):
        """Element of G(s) of least absolute value (limit of the Yosida map).

        Raises GraphError outside D(G)."""
        s_arr, scalar = _as_array(s)
        out = self._selection(s_arr)
        if np.any(~np.isfinite(np.atleast_1d(out))):
            raise GraphError(f"minimal_section outside D(G) = {self.domain}")
        return _ret(out, scalar)

    def _selection(self, s):
        """Vectorized minimal section; nan outside the domain."""
        s = np.asarray(s, dtype=float)
        out = np.full(s.shape, np.nan)
        dlo, dhi = self.domain
        closed_lo, closed_hi = self.domain_closed
        strict = (s > dlo) & (s < dhi)
        k = self._piece_index(s)
        with np.errstate(all="ignore"):
            for i, p in enumerate(self.pieces):
                m = strict & (k == i)
                if np.any(m):
                    out[m] = p.fn(s[m])
        for i, b in enumerate(self._breaks):
            m = s == b
            if np.any(m):
                out[m] = np.clip(0.0, self._jump_lo[i], self._jump_hi[i])
        if closed_lo:
            m = s == dlo
            if np.any(m):
                v = self._left_lim(self.pieces[0])
                out[m] = min(v, 0.0) if self.wall_lo else v
        if closed_hi:
            m = s == dhi
            if np.any(m):
                v = self._right_lim(self.pieces[-1])
                out[m] = max(v, 0.0) if self.wall_hi else v
        return out

    # -- resolvent family ------------------------------------------------------

    def _pair(self, lam, v):
        """(G_lam(v), J_lam(v)) jointly.  Graphs with asymptote ends solve in
        the s-variable and return both values of the solved point on the
        graph; reconstructing one from the other there would lose the
        residual-granularity of the stiff equation."""
        if self._pair_fn is not None:
            y, J = self._pair_fn(lam, v)
            return np.asarray(y, dtype=float), np.asarray(J, dtype=float)
        y = self._yosida_fn(lam, v) if self._yosida_fn is not None \
            else self._yosida_bisect(lam, v)
        y = np.asarray(y, dtype=float)
        return y, v - lam * y

    def yosida(self, lam, s):
        """Yosida regularization G_lam(s) = (s - J_lam(s))/lam, evaluated in
        value space.  Defined for every real s; 1/lam-Lipschitz, monotone
        nondecreasing, and G_lam(0) = 0."""
        if lam <= 0:
            raise GraphError("yosida requires lam > 0")
        s_arr, scalar = _as_array(s)
        return _ret(self._pair(lam, s_arr)[0], scalar)

    def resolvent(self, lam, v):
        """J_lam(v): the unique s such that s + lam*G(s) contains v."""
        if lam <= 0:
            raise GraphError("resolvent requires lam > 0")
        v_arr, scalar = _as_array(v)
        return _ret(self._pair(lam, v_arr)[1], scalar)

    def _yosida_bisect(self, lam, v):
        """Generic Yosida evaluation: bisection on the value variable.

        The root w satisfies w = sel(v - lam*w) for the (monotone) minimal
        selection, so the iteration converges unconditionally, across jumps
        and walls; accuracy is absolute in w, independent of lam."""
        v = np.atleast_1d(np.asarray(v, dtype=float))
        dlo, dhi = self.domain
        jlo = np.clip(np.minimum(v, 0.0), dlo, dhi)
        jhi = np.clip(np.maximum(v, 0.0), dlo, dhi)
        wlo = (v - jhi) / lam
        whi = (v - jlo) / lam
        width = float(np.max(whi - wlo)) if v.size else 0.0
        n_it = min(140, max(40, int(np.ceil(np.log2(max(width, 1.0) / _BISECT_TOL))) + 10))
        for _ in range(n_it):
            wm = 0.5 * (wlo + whi)
            with np.errstate(all="ignore"):
                g = self._selection(v - lam * wm) - wm
            pos = g > 0
            wlo = np.where(pos, wm, wlo)
            whi = np.where(pos, whi, wm)
        return (0.5 * (wlo + whi)).reshape(np.shape(v))

    def yosida_slope(self, lam, s, resolvent_point=None):
        """Derivative of the Yosida map (left value at kinks), in [0, 1/lam].

        Jump and wall regimes are detected exactly from the partition
        {b + lam*G(b)} of the data axis rather than from the rounded
        resolvent point."""
        s_arr, scalar = _as_array(s)
        s_arr = np.atleast_1d(s_arr)
        if resolvent_point is None:
            J = np.atleast_1d(self._pair(lam, s_arr)[1])
        else:
            J = np.atleast_1d(np.asarray(resolvent_point, dtype=float))
        out = np.zeros(s_arr.shape)
        k = self._piece_index(J)
        with np.errstate(all="ignore"):
            for i, p in enumerate(self.pieces):
                m = k == i
                if np.any(m):
                    pt = np.clip(J[m], max(p.lo, -_SBIG), min(p.hi, _SBIG))
                    d = np.asarray(p.dfn(pt), dtype=float)
                    d = np.where(np.isnan(d), np.inf, np.maximum(d, 0.0))
                    inv_d = np.where(d > 0, 1.0 / d, np.inf)
                    out[m] = 1.0 / (lam + inv_d)
        for i, b in enumerate(self._breaks):
            m = (s_arr > b + lam * self._jump_lo[i]) & (s_arr < b + lam * self._jump_hi[i])
            out[m] = 1.0 / lam
        dlo, dhi = self.domain
        if self.wall_lo:
            out[s_arr < dlo + lam * self._left_lim(self.pieces[0])] = 1.0 / lam
        if self.wall_hi:
            out[s_arr > dhi + lam * self._right_lim(self.pieces[-1])] = 1.0 / lam
        out = out.reshape(np.shape(s)) if np.ndim(s) else out[0]
        return _ret(np.asarray(out), scalar)

    # -- convex calculus -------------------------------------------------------

    def primitive(self, s):
        """The convex potential j with G = dj, normalized to j(0) = 0, j >= 0.

        Equals the integral of the minimal section inside D(G), extends by
        lower-semicontinuous limits to the closure, and is +inf outside."""
        s_arr, scalar = _as_array(s)
        s_arr = np.atleast_1d(s_arr)
        out = np.full(s_arr.shape, np.inf)
        dlo, dhi = self.domain
        inside = (s_arr >= dlo) & (s_arr <= dhi)
        anchors = self._prim_anchors()
        k = self._piece_index(np.clip(s_arr, dlo, dhi))
        with np.errstate(all="ignore"):
            for i, p in enumerate(self.pieces):
                m = inside & (k == i)
                if not np.any(m):
                    continue
                if i > 0:
                    anchor, offset = float(self._breaks[i - 1]), float(anchors[i - 1])
                elif self._breaks.size:
                    anchor, offset = float(self._breaks[0]), float(anchors[0])
                else:
                    anchor, offset = 0.0, 0.0
                if p.constant:
                    c = float(p.fn(np.asarray(_safe_point(p.lo, p.hi))))
                    out[m] = offset + c * (s_arr[m] - anchor)
                elif p.antiderivative is not None:
                    out[m] = offset + p.antiderivative(s_arr[m]) - float(p.antiderivative(np.asarray(anchor)))
                else:
                    out[m] = offset + np.array([p.integral(anchor, float(x)) for x in s_arr[m]])
        out[inside & np.isnan(out)] = np.inf
        out = out.reshape(np.shape(s)) if np.ndim(s) else out[0]
        return _ret(np.asarray(out), scalar)

    def conjugate(self, v):
        """Fenchel conjugate j*(v) = sup_s (s*v - j(s)); j*(0) = 0, j* >= 0.

        Finite exactly on the closure of the range of G; the equality
        j(s) + j*(v) = s*v characterizes v in G(s)."""
        v_arr, scalar = _as_array(v)
        if self._conjugate_fn is not None:
            return _ret(np.asarray(self._conjugate_fn(v_arr), dtype=float), scalar)
        flat = np.atleast_1d(v_arr)
        res = np.array([self._conjugate_scalar(float(x)) for x in flat])
        out = res.reshape(v_arr.shape) if v_arr.ndim else res[0]
        return _ret(np.asarray(out), scalar)

    def _conjugate_scalar(self, v):
        """Supremum sweep over pieces.

        Each piece contributes its endpoint value or the interior critical
        point where the piece attains v; infinite intervals are truncated at
        a large abscissa, so conjugates of graphs whose tails approach an
        asymptote slower than integrably are underestimated there (the
        built-ins install exact closed forms instead)."""
        rlo, rhi = self.range_bounds()
        if v > rhi or v < rlo:
            return np.inf
        best = 0.0  # s = 0 gives sv - j(s) = 0
        for p in self.pieces:
            a = p.lo if np.isfinite(p.lo) else -_SBIG
            b = p.hi if np.isfinite(p.hi) else _SBIG
            with np.errstate(all="ignore"):
                fa = float(p.fn(np.asarray(a)))
                fb = float(p.fn(np.asarray(b)))
            if p.constant or fb <= v:
                s_star = b
            elif fa >= v:
                s_star = a
            else:
                lo, hi = a, b
                for _ in range(100):
                    mid = 0.5 * (lo + hi)
                    with np.errstate(all="ignore"):
                        if float(p.fn(np.asarray(mid))) > v:
                            hi = mid
                        else:
                            lo = mid
                s_star = 0.5 * (lo + hi)
            s_eval = min(max(s_star, self.domain[0]), self.domain[1])
            js = float(self.primitive(s_eval))
            val = s_eval * v - js
            if np.isfinite(val):
                best = max(best, val)
        return best

    def moreau_envelope(self, lam, s):
        """Moreau envelope of the primitive: lam/2*G_lam(s)^2 + j(J_lam(s))."""
        s_arr, scalar = _as_array(s)
        y, J = self._pair(lam, s_arr)
        out = 0.5 * lam * y * y + self.primitive(J)
        return _ret(np.asarray(out), scalar)

    def bg_pair(self, v):
        """The Minty decomposition v = b(v) + g(v) with b = (id + G)^{-1},
        g := v - b(v); g(v) in G(b(v)), both maps nonexpansive and
        nondecreasing, and the sum identity is exact in floating point."""
        v_arr, scalar = _as_array(v)
        _, b = self._pair(1.0, v_arr)
        gval = v_arr - b
        if scalar:
            return float(b), float(gval)
        return b, gval

    def b_map(self, v):
        """b = (id + G)^{-1}(v)."""
        return self.bg_pair(v)[0]

    def g_map(self, v):
        """g = (id + G^{-1})^{-1}(v) = v - b(v)."""
        return self.bg_pair(v)[1]

    # -- inversion -------------------------------------------------------------

    def inverse(self):
        """Reflection of the graph across the diagonal (maximal monotone again).

        Strictly increasing pieces invert to pieces; constant spans become
        jumps; jumps become constant spans; walls and infinite constant tails
        swap roles."""
        if self._inverse_fn is not None:
            return self._inverse_fn()
        pieces = []
        wall_lo = wall_hi = False
        for i, p in enumerate(self.pieces):
            if p.constant:
                if not np.isfinite(p.lo) and i == 0:
                    wall_lo = True
                if not np.isfinite(p.hi) and i == len(self.pieces) - 1:
                    wall_hi = True
                continue
            pieces.append(_inverted_piece(p))
        for i, b in enumerate(self._breaks):
            jl, jh = float(self._jump_lo[i]), float(self._jump_hi[i])
            if jh > jl:
                pieces.append(Piece(jl, jh, _const_fn(float(b)), _zero_fn,
                                    antiderivative=_linear_fn(float(b)), constant=True))
        dlo, dhi = self.domain
        if self.wall_lo:
            v = self._left_lim(self.pieces[0])
            pieces.append(Piece(-np.inf, v, _const_fn(float(dlo)), _zero_fn,
                                antiderivative=_linear_fn(float(dlo)), constant=True))
        if self.wall_hi:
            v = self._right_lim(self.pieces[-1])
            pieces.append(Piece(v, np.inf, _const_fn(float(dhi)), _zero_fn,
                                antiderivative=_linear_fn(float(dhi)), constant=True))
        if not pieces:
            raise GraphError("inverse has empty domain interior (graph is a single vertical line)")
        pieces.sort(key=lambda q: (q.lo, q.hi))
        return MonotoneGraph(pieces, wall_lo=wall_lo, wall_hi=wall_hi,
                             label=f"{self.label}^-1", kind="piecewise",
                             params={"inverse_of": self.label})

    def __repr__(self):
        dlo, dhi = self.domain
        return f"MonotoneGraph({self.label}, domain=({dlo:g}, {dhi:g}), pieces={len(self.pieces)})"


# -- piece helpers ---------------------------------------------------------------


def _const_fn(c):
    return lambda s: np.full_like(np.asarray(s, dtype=float), c)


def _zero_fn(s):
    return np.zeros_like(np.asarray(s, dtype=float))


def _linear_fn(c):
    return lambda s: c * np.asarray(s, dtype=float)


def _inverted_piece(p):
    """Invert a strictly increasing piece (numeric bisection inverse)."""

    def inv(v):
        v = np.asarray(v, dtype=float)
        lo = np.full(v.shape, p.lo if np.isfinite(p.lo) else -_SBIG)
        hi = np.full(v.shape, p.hi if np.isfinite(p.hi) else _SBIG)
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            with np.errstate(all="ignore"):
                above = p.fn(mid) > v
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
        return 0.5 * (lo + hi)

    def dinv(v):
        s = inv(v)
        with np.errstate(all="ignore"):
            d = np.asarray(p.dfn(s), dtype=float)
        return np.where(d > 0, 1.0 / d, np.inf)

    anti = None
    if p.antiderivative is not None:
        def anti(v):
            # Young's identity: an antiderivative of f^{-1} is v*f^{-1}(v) - F(f^{-1}(v))
            s = inv(v)
            return np.asarray(v, dtype=float) * s - p.antiderivative(s)

    fa = MonotoneGraph._left_lim(p)
    fb = MonotoneGraph._right_lim(p)
    lo = fa if np.isfinite(fa) else -np.inf
    hi = fb if np.isfinite(fb) else np.inf
    return Piece(lo, hi, inv, dinv, antiderivative=anti)


def _smooth_pair(f, df, dom_lo=-np.inf, dom_hi=np.inf):
    """(Yosida, resolvent) evaluator for a single smooth increasing branch.

    Solves s + lam*f(s) = v by safeguarded Newton in s and returns
    (f(s), s): the pair lies exactly on the graph, the value carries
    relative accuracy (never the eps/lam loss of (v - J)/lam), and near an
    asymptote end, where s-granularity floors the equation residual, s
    itself remains accurate to one ulp."""

    def pair(lam, v):
        v = np.atleast_1d(np.asarray(v, dtype=float))
        slo = np.clip(np.minimum(v, 0.0), dom_lo, dom_hi)
        shi = np.clip(np.maximum(v, 0.0), dom_lo, dom_hi)
        s = v / (1.0 + lam)
        bad0 = (s <= slo) | (s >= shi)
        s = np.where(bad0 & (slo < shi), 0.5 * (slo + shi), np.where(bad0, slo, s))
        tol = 1e-15 * (1.0 + (float(np.max(np.abs(v))) if v.size else 0.0))
        for _ in range(110):
            with np.errstate(all="ignore"):
                g = s + lam * f(s) - v
            pos = g > 0
            shi = np.where(pos, np.minimum(shi, s), shi)
            slo = np.where(pos, slo, np.maximum(slo, s))
            if not v.size or float(np.max(np.abs(g))) <= tol:
                break
            if float(np.max(shi - slo)) <= 0.0:
                break
            with np.errstate(all="ignore"):
                sn = s - g / (1.0 + lam * df(s))
            bad = ~np.isfinite(sn) | (sn <= slo) | (sn >= shi)
            s = np.where(bad, 0.5 * (slo + shi), sn)
        with np.errstate(all="ignore"):
            out = np.asarray(f(s), dtype=float)
            g = s + lam * out - v
        # where the s-equation converged, f(s) carries relative accuracy;
        # near an asymptote end the float granularity of s floors |g| and the
        # difference quotient is the accurate value (the graph is vertical
        # there, so the quotient's eps/lam error is relatively negligible)
        stalled = ~np.isfinite(out) | (np.abs(g) > 1e-11 * (1.0 + np.abs(v)))
        if np.any(stalled):
            out = np.where(stalled, (v - s) / lam, out)
        shp = np.shape(v)
        return out.reshape(shp), s.reshape(shp)

    return pair


# -- built-in constructors --------------------------------------------------------


def identity_graph():
    """The identity graph G(s) = {s} (primitive s^2/2)."""
    return power_graph(2.0)


def power_graph(r):
    """Odd power graph s -> |s|^{r-2} s with r > 1 (primitive |s|^r / r).

    The inverse is the power graph with the conjugate exponent r/(r-1)."""
    r = float(r)
    if not r > 1.0:
        raise GraphError(f"power graph requires r > 1, got {r}")
    rc = r / (r - 1.0)

    def f(s):
        s = np.asarray(s, dtype=float)
        a = np.abs(s)
        with np.errstate(all="ignore"):
            return np.where(a > 0, a ** (r - 2.0) * s, 0.0)

    def df(s):
        s = np.asarray(s, dtype=float)
        a = np.abs(s)
        with np.errstate(all="ignore"):
            return np.where(a > 0, (r - 1.0) * a ** (r - 2.0),
                            0.0 if r >= 2.0 else np.inf)

    def anti(s):
        return np.abs(np.asarray(s, dtype=float)) ** r / r

    if r == 2.0:
        def yos(lam, v):
            return np.asarray(v, dtype=float) / (1.0 + lam)
    elif r == 3.0:
        def yos(lam, v):
            v = np.asarray(v, dtype=float)
            av = np.abs(v)
            sq = np.sqrt(1.0 + 4.0 * lam * av)
            return 4.0 * v * av / ((1.0 + sq) ** 2)
    else:
        yos = None

    def conj(v):
        return np.abs(np.asarray(v, dtype=float)) ** rc / rc

    label = "identity" if r == 2.0 else f"power(r={r:g})"
    return MonotoneGraph([Piece(-np.inf, np.inf, f, df, antiderivative=anti)],
                         label=label, kind="power", params={"r": r},
                         yosida_fn=yos,
                         pair_fn=None if yos is not None else _smooth_pair(f, df),
                         conjugate_fn=conj,
                         inverse_fn=lambda: power_graph(rc))


def exp_graph():
    """Exponential graph G(s) = {e^s - 1} (primitive e^s - s - 1)."""

    def f(s):
        return np.expm1(np.asarray(s, dtype=float))

    def df(s):
        return np.exp(np.asarray(s, dtype=float))

    def anti(s):
        s = np.asarray(s, dtype=float)
        return np.exp(s) - s - 1.0

    def conj(v):
        v = np.atleast_1d(np.asarray(v, dtype=float))
        out = np.full(v.shape, np.inf)
        ok = v > -1.0
        with np.errstate(all="ignore"):
            out[ok] = (1.0 + v[ok]) * np.log1p(v[ok]) - v[ok]
        out[v == -1.0] = 1.0
        return out.reshape(np.shape(v))

    return MonotoneGraph([Piece(-np.inf, np.inf, f, df, antiderivative=anti)],
                         label="exp", kind="exp", params={},
                         pair_fn=_smooth_pair(f, df),
                         conjugate_fn=conj, inverse_fn=log_graph)


def log_graph():
    """Logarithmic graph G(s) = {log(1+s)} on (-1, inf); inverse of exp_graph."""

    def f(s):
        with np.errstate(all="ignore"):
            return np.log1p(np.asarray(s, dtype=float))

    def df(s):
        with np.errstate(all="ignore"):
            return 1.0 / (1.0 + np.asarray(s, dtype=float))

    def anti(s):
        s = np.asarray(s, dtype=float)
        with np.errstate(all="ignore"):
            out = (1.0 + s) * np.log1p(s) - s
        return np.where(s == -1.0, 1.0, out)

    def conj(v):
        v = np.asarray(v, dtype=float)
        return np.exp(v) - v - 1.0

    return MonotoneGraph([Piece(-1.0, np.inf, f, df, antiderivative=anti)],
                         label="log", kind="log", params={},
                         pair_fn=_smooth_pair(f, df, dom_lo=-1.0),
                         conjugate_fn=conj, inverse_fn=exp_graph)


def sign_graph():
    """The sign graph: -1 for s < 0, [-1, 1] at 0, +1 for s > 0
    (subdifferential of |s|; conjugate is the indicator of [-1, 1])."""

    def pair(lam, v):
        v = np.asarray(v, dtype=float)
        y = np.clip(v / lam, -1.0, 1.0)
        J = np.sign(v) * np.maximum(np.abs(v) - lam, 0.0)  # soft threshold, exact
        return y, J

    def conj(v):
        v = np.asarray(v, dtype=float)
        return np.where(np.abs(v) <= 1.0, 0.0, np.inf)

    return MonotoneGraph(
        [Piece(-np.inf, 0.0, _const_fn(-1.0), _zero_fn,
               antiderivative=_linear_fn(-1.0), constant=True),
         Piece(0.0, np.inf, _const_fn(1.0), _zero_fn,
               antiderivative=_linear_fn(1.0), constant=True)],
        label="sign", kind="sign", params={},
        pair_fn=pair, conjugate_fn=conj,
        inverse_fn=lambda: normal_cone_graph(-1.0, 1.0))


def heaviside_graph():
    """The Heaviside graph: 0 for s < 0, [0, 1] at 0, 1 for s > 0
    (subdifferential of the positive part; the Stefan-problem nonlinearity)."""

    def pair(lam, v):
        v = np.asarray(v, dtype=float)
        y = np.clip(v / lam, 0.0, 1.0)
        J = np.where(v < 0.0, v, np.where(v <= lam, 0.0, v - lam))
        return y, J

    def conj(v):
        v = np.asarray(v, dtype=float)
        return np.where((v >= 0.0) & (v <= 1.0), 0.0, np.inf)

    return MonotoneGraph(
        [Piece(-np.inf, 0.0, _const_fn(0.0), _zero_fn,
               antiderivative=_zero_fn, constant=True),
         Piece(0.0, np.inf, _const_fn(1.0), _zero_fn,
               antiderivative=_linear_fn(1.0), constant=True)],
        label="heaviside", kind="heaviside", params={},
        pair_fn=pair, conjugate_fn=conj,
        inverse_fn=lambda: normal_cone_graph(0.0, 1.0))


def normal_cone_graph(lo, hi):
    """Subdifferential of the indicator of [lo, hi] with lo <= 0 <= hi:
    {0} inside, vertical rays at the finite ends.  The resolvent is the
    clamp onto [lo, hi], independent of the parameter."""
    lo, hi = float(lo), float(hi)
    if not (lo <= 0.0 <= hi) or lo >= hi:
        raise GraphError(f"normal cone interval needs lo <= 0 <= hi and lo < hi, got [{lo}, {hi}]")

    def pair(lam, v):
        v = np.asarray(v, dtype=float)
        J = np.clip(v, lo, hi)  # resolvent independent of the parameter
        return (v - J) / lam, J

    def conj(v):
        v = np.asarray(v, dtype=float)
        return np.maximum(lo * v, hi * v)

    def inv():
        pieces = []
        if np.isfinite(lo):
            pieces.append(Piece(-np.inf, 0.0, _const_fn(lo), _zero_fn,
                                antiderivative=_linear_fn(lo), constant=True))
        if np.isfinite(hi):
            pieces.append(Piece(0.0, np.inf, _const_fn(hi), _zero_fn,
                                antiderivative=_linear_fn(hi), constant=True))
        return MonotoneGraph(pieces, label=f"normal_cone([{lo:g},{hi:g}])^-1",
                             kind="piecewise", params={"inverse_of": "normal_cone"})

    return MonotoneGraph(
        [Piece(lo, hi, _const_fn(0.0), _zero_fn, antiderivative=_zero_fn, constant=True)],
        wall_lo=np.isfinite(lo), wall_hi=np.isfinite(hi),
        label=f"normal_cone([{lo:g},{hi:g}])", kind="normal_cone",
        params={"lo": lo, "hi": hi},
        pair_fn=pair, conjugate_fn=conj, inverse_fn=inv)


def piecewise_graph(breakpoints, fns, dfns=None, domain=(-np.inf, np.inf),
                    walls=(False, False), jumps=None, label="piecewise"):
    """Generic graph from interval data.

    Parameters
    ----------
    breakpoints : sequence of float
        Interior breakpoints, strictly increasing.
    fns : sequence of callables
        One vectorized nondecreasing function per interval
        (``len(breakpoints) + 1`` of them); each must be strictly increasing
        or constant on its interval.
    dfns : sequence of callables, optional
        Derivatives; central differences are used where omitted.
    domain : (float, float)
        Domain interval (default all of R).
    walls : (bool, bool)
        Vertical rays at the finite domain ends.
    jumps : sequence of (lo, hi), optional
        Declared value intervals at the breakpoints; validated against the
        monotone fill-in of the adjacent piece limits (jumps are implicit
        otherwise).
    """
    bps = [float(b) for b in breakpoints]
    if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
        raise GraphError("breakpoints must be strictly increasing")
    if len(fns) != len(bps) + 1:
        raise GraphError("need exactly one function per interval")
    edges = [float(domain[0])] + bps + [float(domain[1])]
    pieces = []
    for i, fn in enumerate(fns):
        lo, hi = edges[i], edges[i + 1]
        if lo >= hi:
            raise GraphError("breakpoints must lie strictly inside the domain")
        dfn = dfns[i] if dfns else _numeric_derivative(fn)
        a = lo if np.isfinite(lo) else min(hi, 0.0) - 1.0
        b = hi if np.isfinite(hi) else max(lo, 0.0) + 1.0
        with np.errstate(all="ignore"):
            const = abs(float(fn(np.asarray(a))) - float(fn(np.asarray(b)))) < 1e-14
        pieces.append(Piece(lo, hi, fn, dfn, constant=const))
    g = MonotoneGraph(pieces, wall_lo=walls[0], wall_hi=walls[1], label=label)
    if jumps is not None:
        if len(jumps) != len(bps):
            raise GraphError("need one jump interval per breakpoint")
        for k, (jl, jh) in enumerate(jumps):
            el, eh = float(g._jump_lo[k]), float(g._jump_hi[k])
            if abs(jl - el) > 1e-10 * (1 + abs(el)) or abs(jh - eh) > 1e-10 * (1 + abs(eh)):
                raise GraphError(
                    f"declared jump [{jl}, {jh}] at {bps[k]} does not match the "
                    f"piece limits [{el}, {eh}] (monotone fill-in)")
    return g


def _numeric_derivative(fn, rel=1e-7):
    def dfn(s):
        s = np.asarray(s, dtype=float)
        h = rel * (1.0 + np.abs(s))
        with np.errstate(all="ignore"):
            return (fn(s + h) - fn(s - h)) / (2.0 * h)
    return dfn


def make_graph(kind, **params):
    """Construct a built-in graph from its config tag."""
    builders = {
        "identity": lambda: identity_graph(),
        "power": lambda: power_graph(params["r"]),
        "exp": lambda: exp_graph(),
        "log": lambda: log_graph(),
        "sign": lambda: sign_graph(),
        "heaviside": lambda: heaviside_graph(),
        "normal_cone": lambda: normal_cone_graph(params["lo"], params["hi"]),
    }
    if kind not in builders:
        raise GraphError(f"unknown graph kind '{kind}'")
    return builders[kind]()
