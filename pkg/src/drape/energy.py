"""Discrete Foppl-von Karman energy of a hanging sheet.

Fields live on the nodes of a uniform grid over ``[-width/2, width/2] x [-L, 0]``
and are stored as ``(ny, nx)`` arrays; row ``ny - 1`` is the clamped top edge
``y = 0``.

Membrane terms use first derivatives at cell centres (the average of the two
forward differences along each cell edge, i.e. the bilinear gradient at the
centre) weighted by the cell area. Bending uses nodal second differences,
three-point in the interior and four-point one-sided at the edges, with
trapezoid weights. Gravity uses the trapezoid rule.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

MIN_NODES_PER_PERIOD = 16


class UnderResolvedWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    L: float
    width: float = 1.0

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            # four-point one-sided second differences need at least 4 nodes
            raise ValueError(f"grid needs nx, ny >= 4, got {self.nx}x{self.ny}")
        if not (self.L > 0 and self.width > 0):
            raise ValueError("grid extents must be positive")

    @property
    def dx(self):
        return self.width / (self.nx - 1)

    @property
    def dy(self):
        return self.L / (self.ny - 1)

    @property
    def x(self):
        return np.linspace(-self.width / 2, self.width / 2, self.nx)

    @property
    def y(self):
        return np.linspace(-self.L, 0.0, self.ny)

    @property
    def shape(self):
        return (self.ny, self.nx)

    def mesh(self):
        return np.meshgrid(self.x, self.y)

    def trapezoid_weights(self):
        wx = np.full(self.nx, self.dx)
        wx[[0, -1]] *= 0.5
        wy = np.full(self.ny, self.dy)
        wy[[0, -1]] *= 0.5
        return np.outer(wy, wx)

    def cell_centers(self):
        xc = 0.5 * (self.x[1:] + self.x[:-1])
        yc = 0.5 * (self.y[1:] + self.y[:-1])
        return np.meshgrid(xc, yc)


def default_grid(p, ny=None):
    """Grid following the resolution contract: ``nx = max(129, 24 round(1/w0) + 1)``
    for canonical parameters."""
    nx = max(129, 24 * round(1.0 / p.w0) + 1)
    if ny is None:
        ny = max(65, int(round(p.L / (4.0 / (nx - 1)))) + 1)
    return Grid(nx=nx, ny=ny, L=p.L)


@dataclass(frozen=True, eq=False)
class DeformationField:
    grid: Grid
    ux: np.ndarray
    uy: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        for name in ("ux", "uy", "xi"):
            a = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if a.shape != self.grid.shape:
                raise ValueError(f"{name} has shape {a.shape}, grid expects {self.grid.shape}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} contains non-finite values")
            object.__setattr__(self, name, a)

    @classmethod
    def zeros(cls, grid):
        z = np.zeros(grid.shape)
        return cls(grid, z, z.copy(), z.copy())

    def stacked(self):
        return np.stack([self.ux, self.uy, self.xi])

    @classmethod
    def from_stacked(cls, grid, arr):
        return cls(grid, arr[0], arr[1], arr[2])


@dataclass(frozen=True)
class EnergyBreakdown:
    e_xx: float
    e_shear: float
    e_yy: float
    bending: float
    gravity: float
    total: float
    bulk: float
    excess: float

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# closed-form pieces


def bulk_minimizer(tau, L, y):
    """Minimiser ``f(y) = (tau y^2 + 2 tau L y) / 4`` of the bulk energy."""
    y = np.asarray(y, dtype=float)
    if np.any(y < -L * (1 + 1e-12)) or np.any(y > L * 1e-12):
        raise ValueError("y must lie in [-L, 0]")
    return (tau * y**2 + 2 * tau * L * y) / 4


def bulk_minimizer_slope(tau, L, y):
    """``f_y(y) = tau (y + L) / 2``."""
    return tau * (np.asarray(y, dtype=float) + L) / 2


def bulk_energy(tau, L, width=1.0):
    """Minimum of the bulk energy over a sheet of the given width."""
    return -(tau**2) * L**3 * width / 12.0


def wrinkle_vs_trivial_threshold(p):
    """True when the wrinkled top profile beats the flat compressed one."""
    delta = getattr(p, "Delta", 1.0)
    return p.h <= p.w0 * math.sqrt(delta) / math.sqrt(8 * math.pi**2)


def boundary_profile(p, grid_or_nx):
    """Top-row values ``(ux, uy, xi)`` of the clamped wrinkled edge.

    ``xi = (w0 sqrt(Delta)/pi) sin(2 pi x/w0)`` and ``ux = -1/2 int_0^x xi_x^2``
    in closed form.
    """
    if isinstance(grid_or_nx, Grid):
        x = grid_or_nx.x
    else:
        x = np.linspace(-0.5, 0.5, int(grid_or_nx))
    w0 = p.w0
    delta = getattr(p, "Delta", 1.0)
    k = 2 * np.pi / w0
    xi = w0 * math.sqrt(delta) / np.pi * np.sin(k * x)
    ux = -delta * (x + np.sin(2 * k * x) / (2 * k))
    return ux, np.zeros_like(x), xi


# ---------------------------------------------------------------------------
# difference operators


def _second_difference(n, d):
    """Nodal second derivative, 3-point interior, 4-point one-sided ends."""
    m = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        m[i, i - 1], m[i, i], m[i, i + 1] = 1.0, -2.0, 1.0
    m[0, :4] = [2.0, -5.0, 4.0, -1.0]
    m[n - 1, n - 4 :] = [-1.0, 4.0, -5.0, 2.0]
    return (m / d**2).tocsr()


def _first_difference(n, d):
    """Nodal first derivative, central interior, 3-point one-sided ends."""
    m = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        m[i, i - 1], m[i, i + 1] = -0.5, 0.5
    m[0, :3] = [-1.5, 2.0, -0.5]
    m[n - 1, n - 3 :] = [0.5, -2.0, 1.5]
    return (m / d).tocsr()


class _Operators:
    def __init__(self, grid):
        self.grid = grid
        self.dx, self.dy = grid.dx, grid.dy
        self.area = self.dx * self.dy
        self.w = grid.trapezoid_weights()
        self.d2x = _second_difference(grid.nx, self.dx)
        self.d2y = _second_difference(grid.ny, self.dy)
        self.d1x = _first_difference(grid.nx, self.dx)
        self.d1y = _first_difference(grid.ny, self.dy)
        self.d2x_t = self.d2x.T.tocsr()
        self.d1x_t = self.d1x.T.tocsr()
        self.d2y_t = self.d2y.T.tocsr()
        self.d1y_t = self.d1y.T.tocsr()

    # cell-centre gradient of a nodal array and its adjoint
    def cx(self, a):
        return (a[:-1, 1:] - a[:-1, :-1] + a[1:, 1:] - a[1:, :-1]) / (2 * self.dx)

    def cy(self, a):
        return (a[1:, :-1] - a[:-1, :-1] + a[1:, 1:] - a[:-1, 1:]) / (2 * self.dy)

    def cx_t(self, g):
        g = g / (2 * self.dx)
        out = np.zeros(self.grid.shape)
        out[:-1, 1:] += g
        out[:-1, :-1] -= g
        out[1:, 1:] += g
        out[1:, :-1] -= g
        return out

    def cy_t(self, g):
        g = g / (2 * self.dy)
        out = np.zeros(self.grid.shape)
        out[1:, :-1] += g
        out[:-1, :-1] -= g
        out[1:, 1:] += g
        out[:-1, 1:] -= g
        return out

    def grad_t(self, gx, gy):
        """``cx_t(gx) + cy_t(gy)`` in one pass."""
        p = gx / (2 * self.dx)
        q = gy / (2 * self.dy)
        out = np.zeros(self.grid.shape)
        out[:-1, 1:] += p - q
        out[:-1, :-1] -= p + q
        out[1:, 1:] += p + q
        out[1:, :-1] += q - p
        return out

    # nodal Hessian components; arrays are (ny, nx) so x acts on the right
    def xx(self, a):
        return np.asarray(self.d2x @ a.T).T

    def yy(self, a):
        return np.asarray(self.d2y @ a)

    def xy(self, a):
        return np.asarray(self.d1y @ (self.d1x @ a.T).T)

    def xx_t(self, g):
        return np.asarray(self.d2x_t @ g.T).T

    def yy_t(self, g):
        return np.asarray(self.d2y_t @ g)

    def xy_t(self, g):
        return np.asarray(self.d1x_t @ (self.d1y_t @ g).T).T


_OP_CACHE = {}


def operators(grid):
    op = _OP_CACHE.get(grid)
    if op is None:
        if len(_OP_CACHE) > 16:
            _OP_CACHE.clear()
        op = _OP_CACHE[grid] = _Operators(grid)
    return op


# ---------------------------------------------------------------------------
# energy and gradient


def _check_resolution(grid, p):
    w0 = getattr(p, "w0", None)
    if w0 is not None and w0 / grid.dx < MIN_NODES_PER_PERIOD:
        warnings.warn(
            f"grid has {w0 / grid.dx:.1f} nodes per wrinkle period (< {MIN_NODES_PER_PERIOD})",
            UnderResolvedWarning,
            stacklevel=3,
        )


def _strains(op, ux, uy, xi):
    xx_, xy_ = op.cx(xi), op.cy(xi)
    a = op.cx(ux) + 0.5 * xx_**2
    b = op.cy(ux) + op.cx(uy) + xx_ * xy_
    c = op.cy(uy) + 0.5 * xy_**2
    return a, b, c, xx_, xy_


def energy_terms(grid, ux, uy, xi, h, tau):
    """Raw discrete terms ``(e_xx, e_shear, e_yy, bending, gravity)``."""
    op = operators(grid)
    a, b, c, _, _ = _strains(op, ux, uy, xi)
    A = op.area
    e_xx = A * np.sum(a * a)
    e_shear = 0.5 * A * np.sum(b * b)
    e_yy = A * np.sum(c * c)
    hxx, hyy, hxy = op.xx(xi), op.yy(xi), op.xy(xi)
    bending = h**2 * np.sum(op.w * (hxx**2 + 2 * hxy**2 + hyy**2))
    gravity = tau * np.sum(op.w * uy)
    return float(e_xx), float(e_shear), float(e_yy), float(bending), float(gravity)


def energy_and_gradient(grid, ux, uy, xi, h, tau):
    """Total discrete energy and its exact gradient as three nodal arrays."""
    op = operators(grid)
    a, b, c, xx_, xy_ = _strains(op, ux, uy, xi)
    A = op.area
    hxx, hyy, hxy = op.xx(xi), op.yy(xi), op.xy(xi)
    total = (
        A * (np.sum(a * a) + 0.5 * np.sum(b * b) + np.sum(c * c))
        + h**2 * np.sum(op.w * (hxx**2 + 2 * hxy**2 + hyy**2))
        + tau * np.sum(op.w * uy)
    )
    ga, gb, gc = 2 * A * a, A * b, 2 * A * c
    g_ux = op.grad_t(ga, gb)
    g_uy = op.grad_t(gb, gc) + tau * op.w
    g_xi = op.grad_t(ga * xx_ + gb * xy_, gb * xx_ + gc * xy_)
    hw = 2 * h**2 * op.w
    g_xi += op.xx_t(hw * hxx) + 2 * op.xy_t(hw * hxy) + op.yy_t(hw * hyy)
    return float(total), g_ux, g_uy, g_xi


def _check_finite(field):
    for name in ("ux", "uy", "xi"):
        if np.isnan(getattr(field, name)).any():
            raise FloatingPointError(f"NaN in field component {name}")


def fvk_energy(field: DeformationField, p) -> EnergyBreakdown:
    """Quadrature of the four energy integrals plus gravity.

    ``p`` supplies ``h`` and ``tau`` (canonical or physical); the bulk
    reference is ``bulk_energy(tau, L, width)`` of the field's grid.
    """
    _check_finite(field)
    _check_resolution(field.grid, p)
    g = field.grid
    e_xx, e_shear, e_yy, bending, gravity = energy_terms(g, field.ux, field.uy, field.xi, p.h, p.tau)
    total = e_xx + e_shear + e_yy + bending + gravity
    bulk = bulk_energy(p.tau, g.L, g.width)
    return EnergyBreakdown(e_xx, e_shear, e_yy, bending, gravity, total, bulk, total - bulk)


def fvk_gradient(field: DeformationField, p, mask=None):
    """Gradient of the discrete energy with respect to every nodal value.

    Returns ``(g_ux, g_uy, g_xi)``. ``mask`` is a boolean ``(ny, nx)`` array
    (or a stack of three) marking Dirichlet nodes, whose entries are zeroed.
    """
    _check_finite(field)
    _check_resolution(field.grid, p)
    _, gx, gy, gz = energy_and_gradient(field.grid, field.ux, field.uy, field.xi, p.h, p.tau)
    if mask is not None:
        m = np.broadcast_to(np.asarray(mask, dtype=bool), (3,) + field.grid.shape)
        gx, gy, gz = (np.where(mi, 0.0, gi) for mi, gi in zip(m, (gx, gy, gz)))
    return gx, gy, gz


def top_row_mask(grid):
    m = np.zeros(grid.shape, dtype=bool)
    m[-1, :] = True
    return m


def curvature_number(field: DeformationField, p):
    """``h`` times the largest nodal curvature of ``xi``: a validity
    diagnostic for the small-slope model, not enforced anywhere."""
    op = operators(field.grid)
    k = np.sqrt(op.xx(field.xi) ** 2 + 2 * op.xy(field.xi) ** 2 + op.yy(field.xi) ** 2)
    return float(p.h * k.max())


def excess_decomposition(field: DeformationField, p):
    """Split the excess into the nonnegative pieces of the lower-bound identity.

    With ``fc`` the cell-centre slope of the bulk minimiser ``f`` and ``c`` the
    discrete vertical strain, and provided ``uy = 0`` on the top row,

        e_yy + gravity = B_disc(f) + sum A (c - fc)^2 + sum A fc xi_y^2

    exactly, because sampled ``f`` is the minimiser of the discrete bulk
    functional. Since ``fc >= 0`` every piece is nonnegative, and
    ``B_disc(f) >= bulk`` (the discrete offset is ``dy^2 tau^2 L width / 48``).
    """
    g = field.grid
    op = operators(g)
    a, b, c, xx_, xy_ = _strains(op, field.ux, field.uy, field.xi)
    A = op.area
    f_nodes = bulk_minimizer(p.tau, g.L, np.broadcast_to(g.y[:, None], g.shape))
    fc = op.cy(f_nodes)
    hxx, hyy, hxy = op.xx(field.xi), op.yy(field.xi), op.xy(field.xi)
    return {
        "e_xx": float(A * np.sum(a * a)),
        "e_shear": float(0.5 * A * np.sum(b * b)),
        "bending": float(p.h**2 * np.sum(op.w * (hxx**2 + 2 * hxy**2 + hyy**2))),
        "vertical_deviation": float(A * np.sum((c - fc) ** 2)),
        "tilt": float(A * np.sum(fc * xy_**2)),
        "discrete_bulk": float(A * np.sum(fc**2) + p.tau * np.sum(op.w * f_nodes)),
    }
