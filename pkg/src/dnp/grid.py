"""Structured meshes, nodal fields, and the discrete diffusion operator.

The domain is an interval or an axis-aligned rectangle on a uniform node
grid.  The discrete energy is assembled from per-cell gradients (1D) or
per-triangle P1 gradients on the two-triangle split of each grid cell (2D);
the discrete operator is the exact gradient of that energy with respect to
interior nodal values, rescaled by nodal volumes so entries approximate the
divergence-form operator pointwise.  Homogeneous Dirichlet conditions are
imposed by constraining boundary nodes to zero.

The triangle split (rather than a bilinear cell-average gradient) is chosen
deliberately: the cell-average gradient annihilates the checkerboard mode,
which destroys uniqueness of discrete minimizers, while P1 triangle gradients
are injective on Dirichlet fields and, for isotropic fluxes, make the key
sign inequality  sum_T |T| alpha(grad u) . grad(I_h gamma(u)) >= 0  exact for
every nondecreasing gamma with gamma(0) = 0.  That inequality is what turns
the continuous data-norm and contraction estimates into exact discrete
certificates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GridError",
    "Mesh",
    "DiscreteField",
    "interval_mesh",
    "rectangle_mesh",
    "zero_field",
    "field_from_values",
    "field_from_function",
    "energy",
    "apply_operator",
    "lq_norm",
    "total_variation",
    "gradient_lp_norm",
    "cell_gradients",
    "write_field_csv",
    "read_field_csv",
]


class GridError(ValueError):
    """Mesh/field mismatch or invalid mesh parameters."""


class Mesh:
    """Uniform node grid on an interval (1D) or rectangle (2D).

    Nodes are indexed [i] or [i, j] with coordinates x_i = x0 + i*hx (and
    y_j = y0 + j*hy); field arrays share this shape.
    """

    def __init__(self, extents, shape):
        extents = tuple((float(a), float(b)) for a, b in extents)
        shape = tuple(int(n) for n in shape)
        if len(extents) != len(shape) or len(shape) not in (1, 2):
            raise GridError("mesh dimension must be 1 or 2")
        if any(n < 3 for n in shape):
            raise GridError("need at least 3 nodes per axis")
        if any(b <= a for a, b in extents):
            raise GridError("extents must be increasing intervals")
        self.extents = extents
        self.shape = shape
        self.dim = len(shape)
        self.spacing = tuple((b - a) / (n - 1) for (a, b), n in zip(extents, shape))
        self.axes = tuple(np.linspace(a, b, n) for (a, b), n in zip(extents, shape))
        self._build_geometry()

    def _build_geometry(self):
        # trapezoid node volumes (products across axes)
        ws = []
        for h, n in zip(self.spacing, self.shape):
            w = np.full(n, h)
            w[0] = w[-1] = h / 2.0
            ws.append(w)
        if self.dim == 1:
            self.node_volumes = ws[0]
            self.interior = np.zeros(self.shape, dtype=bool)
            self.interior[1:-1] = True
        else:
            self.node_volumes = np.outer(ws[0], ws[1])
            self.interior = np.zeros(self.shape, dtype=bool)
            self.interior[1:-1, 1:-1] = True
        self.boundary = ~self.interior
        if self.dim == 2:
            nx, ny = self.shape
            ii, jj = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), indexing="ij")
            ii, jj = ii.ravel(), jj.ravel()

            def nid(i, j):
                return i * ny + j

            # lower triangle: right angle at (i, j); upper: right angle at (i+1, j+1)
            lower = np.stack([nid(ii, jj), nid(ii + 1, jj), nid(ii, jj + 1)], axis=1)
            upper = np.stack([nid(ii + 1, jj + 1), nid(ii, jj + 1), nid(ii + 1, jj)], axis=1)
            self._triangles = np.concatenate([lower, upper], axis=0)
            hx, hy = self.spacing
            x0 = self.axes[0][ii]
            y0 = self.axes[1][jj]
            cl = np.stack([x0 + hx / 3.0, y0 + hy / 3.0], axis=1)
            cu = np.stack([x0 + 2.0 * hx / 3.0, y0 + 2.0 * hy / 3.0], axis=1)
            self._tri_centroids = np.concatenate([cl, cu], axis=0)
            n_tri = self._triangles.shape[0]
            half = n_tri // 2
            # gradient coefficients: grad u = B @ u[tri] with legs along the axes
            bx = np.zeros((n_tri, 3))
            by = np.zeros((n_tri, 3))
            bx[:half] = np.array([-1.0, 1.0, 0.0]) / hx
            by[:half] = np.array([-1.0, 0.0, 1.0]) / hy
            bx[half:] = np.array([1.0, -1.0, 0.0]) / hx
            by[half:] = np.array([1.0, 0.0, -1.0]) / hy
            self._tri_B = np.stack([bx, by], axis=1)  # (n_tri, 2, 3)
            self._tri_area = hx * hy / 2.0

    @property
    def n_nodes(self):
        return int(np.prod(self.shape))

    def coords(self):
        """Node coordinates as an (n_nodes, dim) array (C order of the grid)."""
        if self.dim == 1:
            return self.axes[0][:, None]
        X, Y = np.meshgrid(self.axes[0], self.axes[1], indexing="ij")
        return np.stack([X.ravel(), Y.ravel()], axis=1)

    def quad_points(self):
        """Quadrature points of the gradient cells: midpoints (1D) or triangle
        centroids (2D), shape (n_cells, dim)."""
        if self.dim == 1:
            x = self.axes[0]
            return (0.5 * (x[1:] + x[:-1]))[:, None]
        return self._tri_centroids

    def compatible(self, other):
        return (self.extents == other.extents) and (self.shape == other.shape)

    def __repr__(self):
        return f"Mesh(dim={self.dim}, shape={self.shape}, extents={self.extents})"


def interval_mesh(a, b, n_nodes):
    """Uniform 1D mesh on [a, b] with ``n_nodes`` nodes."""
    return Mesh([(a, b)], [n_nodes])


def rectangle_mesh(extent_x, extent_y, nx, ny):
    """Uniform 2D mesh on a rectangle."""
    return Mesh([extent_x, extent_y], [nx, ny])


@dataclass
class DiscreteField:
    """Nodal scalar field on a mesh; shape follows the mesh grid."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.mesh.shape:
            raise GridError(f"field shape {self.values.shape} != mesh shape {self.mesh.shape}")

    def copy(self):
        return DiscreteField(self.mesh, self.values.copy())

    def interior_values(self):
        return self.values[self.mesh.interior]

    def with_zero_boundary(self):
        out = self.values.copy()
        out[self.mesh.boundary] = 0.0
        return DiscreteField(self.mesh, out)

    def is_dirichlet(self, tol=0.0):
        return bool(np.all(np.abs(self.values[self.mesh.boundary]) <= tol))


def zero_field(mesh):
    return DiscreteField(mesh, np.zeros(mesh.shape))


def field_from_values(mesh, values):
    return DiscreteField(mesh, np.asarray(values, dtype=float).reshape(mesh.shape))


def field_from_function(mesh, fn):
    """Sample ``fn`` at the nodes; fn takes coordinate arrays (x[, y])."""
    if mesh.dim == 1:
        vals = fn(mesh.axes[0])
    else:
        X, Y = np.meshgrid(mesh.axes[0], mesh.axes[1], indexing="ij")
        vals = fn(X, Y)
    return DiscreteField(mesh, np.broadcast_to(np.asarray(vals, dtype=float), mesh.shape).copy())


def _check(mesh, field):
    if field.mesh is not mesh and not mesh.compatible(field.mesh):
        raise GridError("field defined on an incompatible mesh")


def cell_gradients(mesh, field):
    """Per-cell gradients, shape (n_cells, dim): first differences over
    intervals (1D) or P1 triangle gradients (2D)."""
    _check(mesh, field)
    u = field.values
    if mesh.dim == 1:
        return (np.diff(u) / mesh.spacing[0])[:, None]
    flat = u.ravel()
    tri = mesh._triangles
    return np.einsum("tkn,tn->tk", mesh._tri_B, flat[tri])


def cell_volumes(mesh):
    if mesh.dim == 1:
        return np.full(mesh.shape[0] - 1, mesh.spacing[0])
    return np.full(mesh._triangles.shape[0], mesh._tri_area)


def energy(mesh, flux_model, field):
    """Discrete diffusion energy: quadrature of the potential over the
    gradient cells.  Requires a Dirichlet-admissible field."""
    g = cell_gradients(mesh, field)
    return float(np.sum(cell_volumes(mesh) * flux_model.potential(mesh.quad_points(), g)))


def apply_operator(mesh, flux_model, field):
    """Discrete divergence-form operator: the exact gradient of ``energy``
    with respect to interior nodal values, divided by nodal volumes; boundary
    entries are zero.  For the 1D quadratic potential this reduces to the
    classical second-difference stencil (with the minus sign)."""
    _check(mesh, field)
    al = flux_model.flux(mesh.quad_points(), cell_gradients(mesh, field))
    out = _scatter_energy_gradient(mesh, al)
    out /= mesh.node_volumes
    out[mesh.boundary] = 0.0
    return DiscreteField(mesh, out)


def _scatter_energy_gradient(mesh, cell_flux):
    """dE/du as a full nodal array (no volume rescale, no boundary mask)."""
    if mesh.dim == 1:
        h = mesh.spacing[0]
        a = cell_flux[:, 0] * h  # cell volume times flux
        out = np.zeros(mesh.shape)
        out[:-1] -= a / h
        out[1:] += a / h
        return out
    tri = mesh._triangles
    contrib = np.einsum("tkn,tk->tn", mesh._tri_B, cell_flux) * mesh._tri_area
    out = np.zeros(mesh.n_nodes)
    np.add.at(out, tri.ravel(), contrib.ravel())
    return out.reshape(mesh.shape)


def lq_norm(field, q):
    """Volume-weighted lq norm; q = inf gives the max magnitude.  Scaled by
    the max so large exponents neither overflow nor underflow."""
    if q != np.inf and q < 1:
        raise GridError(f"norm exponent must be in [1, inf], got {q}")
    v = np.abs(field.values)
    m = float(np.max(v)) if v.size else 0.0
    if q == np.inf or m == 0.0:
        return m
    w = field.mesh.node_volumes
    return float(m * np.sum(w * (v / m) ** q) ** (1.0 / q))


def total_variation(field):
    """Anisotropic discrete total variation: sum over axis-adjacent node
    pairs of |difference| times the transverse trapezoid measure (1 in 1D)."""
    u = field.values
    mesh = field.mesh
    if mesh.dim == 1:
        return float(np.sum(np.abs(np.diff(u))))
    wx = np.full(mesh.shape[0], mesh.spacing[0])
    wx[0] = wx[-1] = mesh.spacing[0] / 2.0
    wy = np.full(mesh.shape[1], mesh.spacing[1])
    wy[0] = wy[-1] = mesh.spacing[1] / 2.0
    tv_x = np.sum(np.abs(np.diff(u, axis=0)) * wy[None, :])
    tv_y = np.sum(np.abs(np.diff(u, axis=1)) * wx[:, None])
    return float(tv_x + tv_y)


def gradient_lp_norm(mesh, field, p):
    """Cell-volume weighted L^p norm of the discrete gradient."""
    g = cell_gradients(mesh, field)
    mag = np.sqrt(np.sum(g * g, axis=1))
    return float(np.sum(cell_volumes(mesh) * mag ** p) ** (1.0 / p))


def l1_distance(f1, f2):
    """Volume-weighted L1 distance between two fields."""
    _check(f1.mesh, f2)
    return float(np.sum(f1.mesh.node_volumes * np.abs(f1.values - f2.values)))


def integral(field):
    """Volume-weighted integral (signed mass)."""
    return float(np.sum(field.mesh.node_volumes * field.values))


def positive_part_integral(field):
    """Integral of the positive part."""
    return float(np.sum(field.mesh.node_volumes * np.maximum(field.values, 0.0)))


# -- snapshots -------------------------------------------------------------------


def write_field_csv(field, path):
    """Write a nodal snapshot as CSV: header x[,y],value; one node per line;
    17 significant digits (byte-stable for identical inputs)."""
    mesh = field.mesh
    coords = mesh.coords()
    vals = field.values.ravel()
    header = ("x,value" if mesh.dim == 1 else "x,y,value")
    lines = [header]
    for i in range(coords.shape[0]):
        cs = ",".join(f"{c:.17g}" for c in coords[i])
        lines.append(f"{cs},{vals[i]:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_field_csv(mesh, path):
    """Read a snapshot written by ``write_field_csv`` onto ``mesh`` and
    validate that the node coordinates agree."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] != mesh.n_nodes or data.shape[1] != mesh.dim + 1:
        raise GridError(f"snapshot {path} does not match mesh {mesh}")
    coords = mesh.coords()
    if not np.allclose(data[:, :mesh.dim], coords, rtol=0.0, atol=1e-12):
        raise GridError(f"snapshot {path} node coordinates do not match the mesh")
    return field_from_values(mesh, data[:, -1])
