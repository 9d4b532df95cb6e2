"""Mesh, field, energy/operator, norms, TV, and snapshot round trips."""

import numpy as np
import pytest

from dnp.flux import make_p_laplacian
from dnp.grid import (DiscreteField, GridError, apply_operator, energy,
                      field_from_function, field_from_values,
                      gradient_lp_norm, interval_mesh, lq_norm,
                      read_field_csv, rectangle_mesh, total_variation,
                      write_field_csv, zero_field)


def test_mesh_validation():
    with pytest.raises(GridError):
        interval_mesh(1.0, 0.0, 11)
    with pytest.raises(GridError):
        interval_mesh(0.0, 1.0, 2)
    m = rectangle_mesh((0, 2), (0, 1), 9, 5)
    assert m.dim == 2 and m.spacing == (0.25, 0.25)
    assert m.interior.sum() == 7 * 3


def test_energy_zero_field_and_scaling():
    for mesh in (interval_mesh(0, 1, 17), rectangle_mesh((0, 1), (0, 1), 9, 9)):
        for p in (1.5, 2.0, 3.0):
            flux = make_p_laplacian(p)
            assert energy(mesh, flux, zero_field(mesh)) == 0.0
            if mesh.dim == 1:
                u = field_from_function(mesh, lambda x: x * (1 - x))
            else:
                u = field_from_function(mesh, lambda x, y: x * (1 - x) * y * (1 - y))
            e1 = energy(mesh, flux, u)
            u2 = DiscreteField(mesh, 2.0 * u.values)
            assert energy(mesh, flux, u2) == pytest.approx(2.0 ** p * e1, rel=1e-12)


def test_energy_quadratic_closed_form():
    # int_0^1 (1 - 2x)^2 / 2 dx = 1/6
    errs = []
    for n in (33, 65, 129):
        mesh = interval_mesh(0, 1, n)
        u = field_from_function(mesh, lambda x: x * (1 - x))
        errs.append(abs(energy(mesh, make_p_laplacian(2.0), u) - 1.0 / 6.0))
    # midpoint quadrature of a quadratic integrand of piecewise linears is
    # second order against the smooth energy
    assert errs[0] <= 0.02 and errs[2] <= errs[0] / 4.0


def test_operator_is_second_difference_for_p2():
    mesh = interval_mesh(0, 1, 33)
    rng = np.random.default_rng(0)
    u = zero_field(mesh)
    u.values[1:-1] = rng.standard_normal(31)
    out = apply_operator(mesh, make_p_laplacian(2.0), u)
    h = mesh.spacing[0]
    want = (2 * u.values[1:-1] - u.values[:-2] - u.values[2:]) / h ** 2
    assert np.max(np.abs(out.values[1:-1] - want)) <= 1e-12 * np.max(np.abs(want))
    assert out.values[0] == 0.0 and out.values[-1] == 0.0


@pytest.mark.parametrize("dim", [1, 2])
@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_operator_is_energy_gradient(dim, p):
    # finite-difference check of the volume-rescaled gradient identity
    mesh = interval_mesh(0, 1, 17) if dim == 1 else rectangle_mesh((0, 1), (0, 1), 7, 7)
    flux = make_p_laplacian(p)
    rng = np.random.default_rng(42)
    for _ in range(20):
        u = zero_field(mesh)
        u.values[mesh.interior] = rng.uniform(-1, 1, int(mesh.interior.sum()))
        w = zero_field(mesh)
        w.values[mesh.interior] = rng.uniform(-1, 1, int(mesh.interior.sum()))
        au = apply_operator(mesh, flux, u)
        pairing = np.sum(mesh.node_volumes * au.values * w.values)
        eps = 1e-6
        up = DiscreteField(mesh, u.values + eps * w.values)
        um = DiscreteField(mesh, u.values - eps * w.values)
        fd = (energy(mesh, flux, up) - energy(mesh, flux, um)) / (2 * eps)
        assert abs(pairing - fd) <= 1e-5 * (1 + abs(pairing))


@pytest.mark.parametrize("dim", [1, 2])
@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_operator_monotone(dim, p):
    mesh = interval_mesh(0, 1, 17) if dim == 1 else rectangle_mesh((0, 1), (0, 1), 7, 7)
    flux = make_p_laplacian(p)
    rng = np.random.default_rng(1)
    for _ in range(50):
        u = zero_field(mesh)
        w = zero_field(mesh)
        u.values[mesh.interior] = rng.uniform(-2, 2, int(mesh.interior.sum()))
        w.values[mesh.interior] = rng.uniform(-2, 2, int(mesh.interior.sum()))
        du = u.values - w.values
        pairing = np.sum(mesh.node_volumes * du
                         * (apply_operator(mesh, flux, u).values
                            - apply_operator(mesh, flux, w).values))
        assert pairing >= -1e-12
        if p >= 2:
            diff = DiscreteField(mesh, du)
            assert pairing >= flux.c * gradient_lp_norm(mesh, diff, p) ** p - 1e-10


def test_operator_consistency_order():
    # 1D, p = 2: second-difference of sin approximates pi^2 sin at order 2
    errs = []
    for n in (33, 65, 129):
        mesh = interval_mesh(0, 1, n)
        u = field_from_function(mesh, lambda x: np.sin(np.pi * x))
        u.values[mesh.boundary] = 0.0
        out = apply_operator(mesh, make_p_laplacian(2.0), u)
        want = np.pi ** 2 * u.values
        errs.append(np.max(np.abs((out.values - want)[mesh.interior])))
    orders = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(orders) >= 1.9


def test_operator_consistency_2d():
    errs = []
    for n in (9, 17, 33):
        mesh = rectangle_mesh((0, 1), (0, 1), n, n)
        u = field_from_function(mesh, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
        u.values[mesh.boundary] = 0.0
        out = apply_operator(mesh, make_p_laplacian(2.0), u)
        want = 2 * np.pi ** 2 * u.values
        errs.append(np.max(np.abs((out.values - want)[mesh.interior])))
    orders = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(orders) >= 1.9


def test_norms():
    mesh = interval_mesh(0, 1, 41)
    one = field_from_values(mesh, np.ones(mesh.shape))
    assert lq_norm(one, 1.0) == pytest.approx(1.0, rel=1e-14)
    const = field_from_values(mesh, -3.5 * np.ones(mesh.shape))
    assert lq_norm(const, np.inf) == 3.5
    f = field_from_function(mesh, lambda x: np.sin(np.pi * x))
    assert lq_norm(f, 2.0) == pytest.approx(np.sqrt(0.5), rel=1e-3)
    with pytest.raises(GridError):
        lq_norm(f, 0.5)


def test_total_variation():
    mesh = interval_mesh(0, 1, 41)
    assert total_variation(field_from_values(mesh, np.full(mesh.shape, 2.2))) == 0.0
    step = field_from_function(mesh, lambda x: (x >= 0.5).astype(float))
    assert total_variation(step) == pytest.approx(1.0, rel=1e-14)
    rng = np.random.default_rng(2)
    f = field_from_values(mesh, rng.uniform(-1, 1, mesh.shape))
    g = field_from_values(mesh, rng.uniform(-1, 1, mesh.shape))
    fg = field_from_values(mesh, f.values + g.values)
    assert total_variation(fg) <= total_variation(f) + total_variation(g) + 1e-12
    # 2D: transverse measures weight the jumps
    mesh2 = rectangle_mesh((0, 1), (0, 1), 21, 21)
    step2 = field_from_function(mesh2, lambda x, y: (x >= 0.5).astype(float) * np.ones_like(y))
    assert total_variation(step2) == pytest.approx(1.0, rel=1e-12)


def test_field_csv_roundtrip(tmp_path):
    for mesh in (interval_mesh(0, 1, 19), rectangle_mesh((0, 1), (0, 2), 7, 9)):
        rng = np.random.default_rng(3)
        f = field_from_values(mesh, rng.standard_normal(mesh.shape))
        path = tmp_path / f"snap{mesh.dim}.csv"
        write_field_csv(f, path)
        g = read_field_csv(mesh, path)
        assert np.array_equal(f.values, g.values)
        # byte stability
        before = path.read_bytes()
        write_field_csv(f, path)
        assert path.read_bytes() == before
    with pytest.raises(GridError):
        read_field_csv(interval_mesh(0, 1, 5), path)
