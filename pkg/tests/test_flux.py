"""Flux model construction and hypothesis audits."""

import numpy as np
import pytest

from dnp.flux import (FluxError, FluxModel, audit_hypotheses, make_flux,
                      make_p_laplacian, make_sum_p_laplacian,
                      make_weighted_p_laplacian, scale_flux)


def test_p_laplacian_pointwise_examples():
    m = make_p_laplacian(2.0)
    x = np.zeros((1, 2))
    z = np.array([[3.0, 4.0]])
    assert m.potential(x, z)[0] == pytest.approx(12.5)
    assert m.flux(x, z)[0] == pytest.approx([3.0, 4.0])

    m4 = make_p_laplacian(4.0)
    z = np.array([[1.0, 0.0]])
    assert m4.potential(x, z)[0] == pytest.approx(0.25)
    assert m4.flux(x, z)[0] == pytest.approx([1.0, 0.0])

    m15 = make_p_laplacian(1.5)
    z = np.array([[4.0, 0.0]])
    assert m15.flux(x, z)[0] == pytest.approx([2.0, 0.0])
    # finite differences of the potential reproduce the flux
    eps = 1e-6
    fd = (m15.potential(x, z + [[eps, 0]]) - m15.potential(x, z - [[eps, 0]])) / (2 * eps)
    assert fd[0] == pytest.approx(2.0, rel=1e-8)


def test_flux_vanishes_at_origin():
    for p in (1.5, 2.0, 3.0):
        m = make_p_laplacian(p)
        z0 = np.zeros((4, 2))
        assert np.all(m.flux(np.zeros((4, 2)), z0) == 0.0)


def test_sum_p_laplacian_examples():
    x = np.zeros((1, 2))
    single = make_sum_p_laplacian([2.0])
    plain = make_p_laplacian(2.0)
    z = np.array([[0.3, -1.2]])
    assert single.potential(x, z)[0] == pytest.approx(plain.potential(x, z)[0])
    assert single.flux(x, z)[0] == pytest.approx(plain.flux(x, z)[0])

    m = make_sum_p_laplacian([2.0, 4.0])
    z = np.array([[1.0, 0.0]])
    assert m.potential(x, z)[0] == pytest.approx(0.75)
    assert m.flux(x, z)[0] == pytest.approx([2.0, 0.0])

    assert make_sum_p_laplacian([1.5, 3.0]).p == 3.0


def test_parameter_validation():
    with pytest.raises(FluxError):
        make_p_laplacian(1.0)
    with pytest.raises(FluxError):
        make_sum_p_laplacian([])
    with pytest.raises(FluxError):
        make_sum_p_laplacian([2.0, 0.5])
    with pytest.raises(FluxError):
        make_weighted_p_laplacian(2.0, lambda x: np.ones(len(x)), 0.0, 1.0)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_audit_passes_p_laplacian(p):
    report = audit_hypotheses(make_p_laplacian(p), sample_count=10_000, seed=0)
    assert report.passed, report.summary()
    assert report.monotonicity >= 0.0
    assert report.growth_lower >= 0.0 and report.growth_upper >= 0.0
    assert report.flux_at_zero == 0.0


def test_audit_passes_sum_and_weighted():
    report = audit_hypotheses(make_sum_p_laplacian([1.5, 2.0, 3.0]),
                              sample_count=10_000, seed=1)
    assert report.passed, report.summary()

    def weight(x):
        return 1.0 + 0.5 * np.sin(2 * np.pi * x[:, 0])

    wmodel = make_weighted_p_laplacian(2.0, weight, 0.5, 1.5)
    assert not wmodel.x_independent
    report = audit_hypotheses(wmodel, sample_count=10_000, seed=2)
    assert report.passed, report.summary()


def test_audit_fails_adversarial_model():
    base = make_p_laplacian(2.0)
    bad = FluxModel(
        p=2.0, c=base.c, C=base.C, x_independent=True, label="negated",
        potential_fn=lambda x, z: -base.potential_fn(x, z),
        flux_fn=lambda x, z: -base.flux_fn(x, z),
        jacobian_fn=lambda x, z: -base.jacobian_fn(x, z))
    report = audit_hypotheses(bad, sample_count=200, seed=0)
    assert not report.passed
    assert report.monotonicity < 0.0
    assert report.witnesses["monotonicity"] is not None


def test_audit_1d_sampling():
    report = audit_hypotheses(make_p_laplacian(3.0), sample_count=5000, seed=4, dim=1)
    assert report.passed, report.summary()


def test_scaled_model_keeps_structure():
    m = make_p_laplacian(2.0)
    s = scale_flux(m, 0.01)
    x = np.zeros((1, 1))
    z = np.array([[2.0]])
    assert s.potential(x, z)[0] == pytest.approx(0.01 * m.potential(x, z)[0])
    assert s.flux(x, z)[0] == pytest.approx(0.01 * m.flux(x, z)[0])
    report = audit_hypotheses(s, sample_count=3000, seed=5)
    assert report.passed, report.summary()
    with pytest.raises(FluxError):
        scale_flux(m, 0.0)


def test_make_flux_tags():
    assert make_flux("p_laplacian", p=2.5).kind == "p_laplacian"
    assert make_flux("sum_p_laplacian", ps=[2.0, 3.0]).p == 3.0
    with pytest.raises(FluxError):
        make_flux("unknown")
