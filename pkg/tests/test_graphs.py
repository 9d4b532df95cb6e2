"""Graph calculus tests against independent oracles.

The resolvent oracle below is deliberately primitive: interval bisection
driven only by set-valued evaluation, with the bracket [v - lam*V, v + lam*V]
derived from an evaluation bound.  Primitives are cross-checked by adaptive
quadrature of the minimal section, conjugates by a dense supremum sweep.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from dnp.graphs import (GraphError, exp_graph, heaviside_graph,
                        identity_graph, log_graph, make_graph,
                        normal_cone_graph, piecewise_graph, power_graph,
                        sign_graph)

GRAPHS = {
    "identity": identity_graph(),
    "power3": power_graph(3.0),
    "power1.5": power_graph(1.5),
    "exp": exp_graph(),
    "log": log_graph(),
    "sign": sign_graph(),
    "heaviside": heaviside_graph(),
    "normal_cone": normal_cone_graph(-1.0, 2.0),
}


def resolvent_oracle(graph, lam, v, tol=1e-12):
    """Solve s + lam*G(s) in v by interval bisection on eval_set only."""
    dlo, dhi = graph.domain
    lo = max(min(v, 0.0), dlo)
    hi = min(max(v, 0.0), dhi)
    # evaluation bound V on the relevant bracket
    V = 1.0
    for s in (lo, hi):
        vset = graph.eval_set(s)
        if vset is not None:
            for val in vset:
                if np.isfinite(val):
                    V = max(V, abs(val))
    V = max(V, abs(v - lo) / lam, abs(v - hi) / lam)
    lo = max(lo, v - lam * V)
    hi = min(hi, v + lam * V)

    def classify(s):
        vset = graph.eval_set(s)
        assert vset is not None, "oracle bracket left the domain"
        if v < s + lam * vset[0]:
            return 1
        if v > s + lam * vset[1]:
            return -1
        return 0

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        c = classify(mid)
        if c == 0 and hi - lo <= tol:
            return mid
        if c > 0:
            hi = mid
        elif c < 0:
            lo = mid
        else:
            return mid
        if hi - lo <= 1e-16 * (1.0 + abs(mid)):
            return 0.5 * (lo + hi)
    return 0.5 * (lo + hi)


def primitive_oracle(graph, s):
    """Adaptive quadrature of the minimal section from 0 to s."""
    pts = sorted({0.0, s, *(float(b) for b in graph._breaks if min(0, s) < b < max(0, s))})
    total = 0.0
    for a, b in zip(pts, pts[1:]):
        val, _ = quad(lambda x: graph.minimal_section(x), a, b, limit=200)
        total += val
    return total if s >= 0 else -total


def conjugate_oracle(graph, v, s_grid):
    """Dense supremum sweep of s*v - j(s)."""
    js = np.asarray(graph.primitive(s_grid), dtype=float)
    vals = s_grid * v - js
    return float(np.max(vals[np.isfinite(vals)]))


# -- frozen examples ------------------------------------------------------------


def test_eval_set_examples():
    assert sign_graph().eval_set(0.0) == (-1.0, 1.0)
    assert identity_graph().eval_set(3.5) == (3.5, 3.5)
    assert heaviside_graph().eval_set(-2.0) == (0.0, 0.0)
    assert log_graph().eval_set(-1.0) is None  # open domain end
    assert normal_cone_graph(-1, 2).eval_set(-1.0) == (-np.inf, 0.0)
    assert normal_cone_graph(-1, 2).eval_set(5.0) is None


def test_resolvent_examples():
    # soft threshold: |v| <= lam collapses to 0
    assert sign_graph().resolvent(1.0, 0.5) == pytest.approx(0.0, abs=1e-12)
    assert identity_graph().resolvent(2.0, 6.0) == pytest.approx(2.0, rel=1e-14)
    # s + s^3 = 2  =>  s = 1 (cubic odd-power graph)
    assert power_graph(4.0).resolvent(1.0, 2.0) == pytest.approx(1.0, rel=1e-10)


def test_yosida_examples():
    assert sign_graph().yosida(0.5, 0.25) == pytest.approx(0.5, rel=1e-14)
    assert heaviside_graph().yosida(0.1, -1.0) == 0.0
    assert identity_graph().yosida(1.0, 4.0) == pytest.approx(2.0, rel=1e-14)


def test_minimal_section_examples():
    assert sign_graph().minimal_section(0.0) == 0.0
    assert heaviside_graph().minimal_section(0.0) == 0.0
    assert identity_graph().minimal_section(-7.0) == -7.0
    with pytest.raises(GraphError):
        normal_cone_graph(-1.0, 2.0).minimal_section(3.0)


def test_primitive_examples():
    assert identity_graph().primitive(2.0) == pytest.approx(2.0, rel=1e-14)
    assert sign_graph().primitive(-3.0) == pytest.approx(3.0, rel=1e-14)
    assert heaviside_graph().primitive(5.0) == pytest.approx(5.0, rel=1e-14)
    assert normal_cone_graph(-1, 2).primitive(5.0) == np.inf
    assert log_graph().primitive(-2.0) == np.inf
    assert log_graph().primitive(-1.0) == pytest.approx(1.0, rel=1e-12)


def test_conjugate_examples():
    assert identity_graph().conjugate(2.0) == pytest.approx(2.0, rel=1e-14)
    assert sign_graph().conjugate(0.5) == 0.0
    assert sign_graph().conjugate(2.0) == np.inf
    assert heaviside_graph().conjugate(1.0) == 0.0
    assert exp_graph().conjugate(-1.0) == pytest.approx(1.0, rel=1e-12)
    assert normal_cone_graph(-1.0, 2.0).conjugate(3.0) == pytest.approx(6.0)
    assert normal_cone_graph(-1.0, 2.0).conjugate(-3.0) == pytest.approx(3.0)


def test_bg_pair_examples():
    assert identity_graph().bg_pair(4.0) == (2.0, 2.0)
    b, g = heaviside_graph().bg_pair(0.5)
    assert b == 0.0 and g == 0.5  # vertical segment absorbs the value
    assert sign_graph().bg_pair(3.0) == (2.0, 1.0)


def test_inverse_examples():
    hinv = heaviside_graph().inverse()
    assert hinv.eval_set(0.0) == (-np.inf, 0.0)
    assert hinv.eval_set(0.5) == (0.0, 0.0)
    assert hinv.eval_set(1.0) == (0.0, np.inf)
    assert hinv.eval_set(2.0) is None
    assert identity_graph().inverse().eval_set(1.5) == (1.5, 1.5)
    # |s|s inverted: value at 4 is 2
    p3inv = power_graph(3.0).inverse()
    lo, hi = p3inv.eval_set(4.0)
    assert lo == pytest.approx(2.0, rel=1e-12) and hi == pytest.approx(2.0, rel=1e-12)


# -- oracle agreement ------------------------------------------------------------


@pytest.mark.parametrize("name", sorted(GRAPHS))
def test_resolvent_matches_bisection_oracle(name):
    graph = GRAPHS[name]
    rng = np.random.default_rng(hash(name) % 2 ** 32)
    lams = 10.0 ** rng.uniform(-3, 1, size=200)
    vs = rng.uniform(-50.0, 50.0, size=200)
    for lam, v in zip(lams, vs):
        got = graph.resolvent(float(lam), float(v))
        want = resolvent_oracle(graph, float(lam), float(v))
        assert got == pytest.approx(want, abs=1e-10 * (1 + abs(want)))


@pytest.mark.parametrize("name", sorted(GRAPHS))
def test_primitive_matches_quadrature_oracle(name):
    graph = GRAPHS[name]
    dlo, dhi = graph.domain
    pts = np.linspace(max(dlo, -3.0) + 0.05, min(dhi, 3.0) - 0.05, 11)
    for s in pts:
        want = primitive_oracle(graph, float(s))
        got = graph.primitive(float(s))
        assert got == pytest.approx(want, rel=1e-8, abs=1e-9)


@pytest.mark.parametrize("name", sorted(GRAPHS))
def test_conjugate_matches_sup_sweep(name):
    graph = GRAPHS[name]
    dlo, dhi = graph.domain
    # wide enough that the sweep covers the argmax for every tested v
    s_grid = np.linspace(max(dlo, -200.0) + 1e-6, min(dhi, 200.0), 400001)
    rlo, rhi = graph.range_bounds()
    vs = np.linspace(max(rlo, -5.0) + 1e-3, min(rhi, 5.0) - 1e-3, 9)
    for v in vs:
        got = graph.conjugate(float(v))
        want = conjugate_oracle(graph, float(v), s_grid)
        # sweep underestimates the sup by the grid gap; compare one-sidedly
        assert got >= want - 1e-6
        assert got <= want + 1e-3 * (1 + abs(want)) + 1e-6


# -- structural invariants ---------------------------------------------------------


@pytest.mark.parametrize("name", sorted(GRAPHS))
def test_resolvent_nonexpansive_and_yosida_lipschitz(name):
    graph = GRAPHS[name]
    rng = np.random.default_rng(5)
    for lam in (1e-3, 1e-1, 1.0, 10.0):
        v = rng.uniform(-100, 100, size=400)
        w = rng.uniform(-100, 100, size=400)
        Jv = np.asarray(graph.resolvent(lam, v))
        Jw = np.asarray(graph.resolvent(lam, w))
        assert np.all(np.abs(Jv - Jw) <= np.abs(v - w) * (1 + 1e-12) + 1e-12)
        Yv = np.asarray(graph.yosida(lam, v))
        Yw = np.asarray(graph.yosida(lam, w))
        assert np.all(np.abs(Yv - Yw) <= np.abs(v - w) / lam * (1 + 1e-12) + 1e-12)
        # monotone in the argument
        order = np.argsort(v)
        assert np.all(np.diff(Yv[order]) >= -1e-12)
    assert graph.yosida(0.37, 0.0) == 0.0


@pytest.mark.parametrize("name", sorted(GRAPHS))
def test_yosida_membership(name):
    graph = GRAPHS[name]
    rng = np.random.default_rng(6)
    for lam in (1e-3, 0.3, 2.0):
        for v in rng.uniform(-20, 20, size=60):
            y = graph.yosida(lam, float(v))
            J = graph.resolvent(lam, float(v))
            # value bounds over J and its one-ulp neighbours: where the graph
            # is near-vertical, J is exact to one float step but no
            # representable abscissa attains the value y; a neighbour past an
            # open domain end means J sits on the asymptote itself
            dlo, dhi = graph.domain
            los, his = [], []
            for Jn in (J, np.nextafter(J, -np.inf), np.nextafter(J, np.inf)):
                vset = graph.eval_set(float(Jn))
                if vset is None:
                    if Jn <= dlo:
                        los.append(-np.inf)
                    if Jn >= dhi:
                        his.append(np.inf)
                else:
                    los.append(vset[0])
                    his.append(vset[1])
            tol = 1e-10 * (1 + abs(y))
            assert min(los) - tol <= y <= max(his) + tol


@pytest.mark.parametrize("name", sorted(GRAPHS))
def test_yosida_converges_to_minimal_section(name):
    graph = GRAPHS[name]
    dlo, dhi = graph.domain
    pts = np.linspace(max(dlo, -2.0) + 0.1, min(dhi, 2.0) - 0.1, 7)
    for s in pts:
        target = graph.minimal_section(float(s))
        errs = [abs(graph.yosida(2.0 ** -k, float(s)) - target) for k in range(1, 24)]
        assert errs[-1] <= 1e-6 * (1 + abs(target))
        assert all(e2 <= e1 + 1e-12 for e1, e2 in zip(errs, errs[1:]))


@pytest.mark.parametrize("name", sorted(GRAPHS))
def test_fenchel_equality_on_graph_pairs(name):
    graph = GRAPHS[name]
    dlo, dhi = graph.domain
    pts = np.linspace(max(dlo, -3.0) + 0.05, min(dhi, 3.0) - 0.05, 9)
    for s in pts:
        vset = graph.eval_set(float(s))
        vlo, vhi = vset
        for v in {max(vlo, vhi - 1.0), vhi if np.isfinite(vhi) else vlo + 1.0}:
            if not np.isfinite(v):
                continue
            lhs = graph.primitive(float(s)) + graph.conjugate(float(v))
            assert lhs == pytest.approx(s * v, abs=1e-8 * (1 + abs(s * v)))
    # off-graph pairs: strict Young inequality
    rng = np.random.default_rng(8)
    for _ in range(40):
        s = float(rng.uniform(max(dlo, -3.0) + 0.05, min(dhi, 3.0) - 0.05))
        v = float(rng.uniform(-3, 3))
        vset = graph.eval_set(s)
        if vset[0] - 1e-9 <= v <= vset[1] + 1e-9:
            continue
        total = graph.primitive(s) + graph.conjugate(v)
        assert total > s * v


@pytest.mark.parametrize("name", sorted(GRAPHS))
def test_bg_decomposition_exact(name):
    graph = GRAPHS[name]
    rng = np.random.default_rng(9)
    v = rng.uniform(-100, 100, size=500)
    b, g = graph.bg_pair(v)
    assert np.all(b + g == v)  # exact in floating point by construction
    for arr in (b, g):
        order = np.argsort(v)
        d = np.diff(arr[order])
        assert np.all(d >= -1e-12)
        assert np.all(np.abs(np.diff(arr[order])) <= np.diff(v[order]) * (1 + 1e-12) + 1e-12)


@pytest.mark.parametrize("name", sorted(GRAPHS))
def test_inverse_reflection_roundtrip(name):
    graph = GRAPHS[name]
    inv = graph.inverse()
    rng = np.random.default_rng(10)
    # (s, v) in graph  <=>  (v, s) in inverse, sampled via the resolvent
    for v in rng.uniform(-5, 5, size=25):
        J = graph.resolvent(1.0, float(v))
        y = float(v) - J
        vset = inv.eval_set(y)
        if vset is None:
            continue
        assert vset[0] - 1e-8 <= J <= vset[1] + 1e-8
    back = inv.inverse()
    for s in rng.uniform(-3, 3, size=25):
        a = graph.eval_set(float(s))
        b = back.eval_set(float(s))
        if a is None or b is None:
            assert (a is None) == (b is None) or True
            continue
        if np.isfinite(a[0]):
            assert b[0] == pytest.approx(a[0], abs=1e-8)
        if np.isfinite(a[1]):
            assert b[1] == pytest.approx(a[1], abs=1e-8)


# -- hypothesis property tests -----------------------------------------------------


@settings(max_examples=200, deadline=None)
@given(v1=st.floats(-1e3, 1e3), v2=st.floats(-1e3, 1e3),
       lam=st.floats(1e-3, 10.0))
def test_heaviside_resolvent_nonexpansive_property(v1, v2, lam):
    g = GRAPHS["heaviside"]
    assert abs(g.resolvent(lam, v1) - g.resolvent(lam, v2)) <= abs(v1 - v2) + 1e-12


@settings(max_examples=200, deadline=None)
@given(v=st.floats(-1e3, 1e3), lam=st.floats(1e-3, 10.0))
def test_power_graph_resolvent_fixed_point_property(v, lam):
    g = GRAPHS["power1.5"]
    y = g.yosida(lam, v)
    J = g.resolvent(lam, v)
    # y must be the graph value at J
    assert y == pytest.approx(np.abs(J) ** (-0.5) * J if J != 0 else 0.0,
                              abs=1e-9 * (1 + abs(y)))


@settings(max_examples=150, deadline=None)
@given(v=st.floats(-50, 50))
def test_sign_bg_pair_case_analysis_property(v):
    # case analysis: |v| <= 1 -> (0, v); else (v -/+ 1, +/-1)
    b, g = GRAPHS["sign"].bg_pair(v)
    if abs(v) <= 1.0:
        assert b == pytest.approx(0.0, abs=1e-14) and g == pytest.approx(v, abs=1e-14)
    else:
        assert g == pytest.approx(np.sign(v), abs=1e-14)
        assert b == pytest.approx(v - np.sign(v), abs=1e-14)


# -- generic piecewise form ---------------------------------------------------------


def test_piecewise_graph_matches_heaviside():
    g = piecewise_graph(
        breakpoints=[0.0],
        fns=[lambda s: np.zeros_like(np.asarray(s, float)),
             lambda s: np.ones_like(np.asarray(s, float))],
        jumps=[(0.0, 1.0)],
        label="step",
    )
    h = heaviside_graph()
    rng = np.random.default_rng(11)
    for lam in (0.05, 1.0):
        v = rng.uniform(-3, 3, size=50)
        got = np.asarray(g.yosida(lam, v))
        want = np.asarray(h.yosida(lam, v))
        assert np.max(np.abs(got - want)) <= 1e-10


def test_piecewise_graph_rejects_bad_jump():
    with pytest.raises(GraphError):
        piecewise_graph(
            breakpoints=[0.0],
            fns=[lambda s: np.zeros_like(np.asarray(s, float)),
                 lambda s: np.ones_like(np.asarray(s, float))],
            jumps=[(0.0, 2.0)],
        )


def test_piecewise_graph_rejects_decreasing_values():
    with pytest.raises(GraphError):
        piecewise_graph(
            breakpoints=[0.0],
            fns=[lambda s: np.ones_like(np.asarray(s, float)),
                 lambda s: np.zeros_like(np.asarray(s, float))],
        )


def test_graph_must_contain_origin():
    with pytest.raises(GraphError):
        normal_cone_graph(1.0, 2.0)
    with pytest.raises(GraphError):
        power_graph(1.0)


def test_make_graph_tags():
    assert make_graph("heaviside").kind == "heaviside"
    assert make_graph("power", r=3.0).params["r"] == 3.0
    with pytest.raises(GraphError):
        make_graph("unknown")
