"""Grids, complex fields, differential operators, energies, and field I/O.

Fields are sampled at cell centers x_i = -lx + (i + 1/2) dx on the box
[-lx, lx] x [-ly, ly]; all integrals are midpoint quadrature. Periodic
grids use spectral derivatives, box grids 4th-order central differences
with zero extension outside the box.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi

# 4th-order central first-derivative stencil, applied with 2-cell zero padding
_FD4 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid2D:
    """Uniform cell-centered grid on [-lx, lx] x [-ly, ly].

    boundary is 'periodic' (torus, spectral operators) or 'box'
    (field decays to ~0 well inside the edges, FD operators).
    """

    nx: int
    ny: int
    lx: float
    ly: float
    boundary: str = "periodic"

    def __post_init__(self):
        if self.nx < 16 or self.ny < 16:
            raise GridError(f"grid too coarse: {self.nx} x {self.ny} (need >= 16)")
        if self.lx <= 0 or self.ly <= 0:
            raise GridError("box half-widths must be positive")
        if self.boundary not in ("periodic", "box"):
            raise GridError(f"unknown boundary mode {self.boundary!r}")

    @property
    def dx(self):
        return 2.0 * self.lx / self.nx

    @property
    def dy(self):
        return 2.0 * self.ly / self.ny

    @property
    def cell_area(self):
        return self.dx * self.dy

    @property
    def box_area(self):
        return 4.0 * self.lx * self.ly

    @property
    def x(self):
        return -self.lx + (np.arange(self.nx) + 0.5) * self.dx

    @property
    def y(self):
        return -self.ly + (np.arange(self.ny) + 0.5) * self.dy

    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="ij")

    def wavenumbers(self):
        kx = TWO_PI * np.fft.fftfreq(self.nx, d=self.dx)
        ky = TWO_PI * np.fft.fftfreq(self.ny, d=self.dy)
        return np.meshgrid(kx, ky, indexing="ij")

    def with_boundary(self, boundary):
        return Grid2D(self.nx, self.ny, self.lx, self.ly, boundary)

    def same_geometry(self, other):
        return (self.nx, self.ny) == (other.nx, other.ny) and np.isclose(
            self.lx, other.lx) and np.isclose(self.ly, other.ly)


@dataclass
class ComplexField2D:
    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.shape != (self.grid.nx, self.grid.ny):
            raise GridError(
                f"field shape {self.values.shape} does not match grid "
                f"({self.grid.nx}, {self.grid.ny})")

    def copy(self):
        return ComplexField2D(self.grid, self.values.copy())


@dataclass
class VectorField2D:
    grid: Grid2D
    vx: np.ndarray
    vy: np.ndarray

    def __post_init__(self):
        self.vx = np.asarray(self.vx, dtype=np.float64)
        self.vy = np.asarray(self.vy, dtype=np.float64)
        shape = (self.grid.nx, self.grid.ny)
        if self.vx.shape != shape or self.vy.shape != shape:
            raise GridError("vector components do not match grid shape")


# ---------------------------------------------------------------------------
# derivatives

def _diff_spectral(values, grid, axis):
    k = TWO_PI * np.fft.fftfreq(values.shape[axis],
                                d=grid.dx if axis == 0 else grid.dy)
    shape = [1, 1]
    shape[axis] = values.shape[axis]
    fhat = np.fft.fft(values, axis=axis)
    out = np.fft.ifft(1j * k.reshape(shape) * fhat, axis=axis)
    if np.isrealobj(values):
        return out.real
    return out


def _diff_fd4(values, grid, axis, pad_mode="constant"):
    h = grid.dx if axis == 0 else grid.dy
    pad = [(0, 0), (0, 0)]
    pad[axis] = (2, 2)
    vp = np.pad(values, pad, mode=pad_mode)
    sl = [slice(None), slice(None)]
    out = np.zeros_like(values)
    for off, c in zip(range(-2, 3), _FD4):
        if c == 0.0:
            continue
        sl[axis] = slice(2 + off, 2 + off + values.shape[axis])
        out = out + c * vp[tuple(sl)]
    return out / h


def diff(values, grid, axis, pad_mode="constant"):
    """d/dx_axis of a sampled (real or complex) array, mode set by the grid.

    pad_mode picks the box-boundary ghost convention: "constant" (zero)
    for decaying wave functions, "edge" for view fields whose modulus
    tends to one at the boundary.
    """
    if grid.boundary == "periodic":
        return _diff_spectral(values, grid, axis)
    return _diff_fd4(values, grid, axis, pad_mode)


def grad(values, grid, pad_mode="constant"):
    return diff(values, grid, 0, pad_mode), diff(values, grid, 1, pad_mode)


def gradient(f: ComplexField2D):
    """Both partial derivatives of a complex field, as two complex fields."""
    gx, gy = grad(f.values, f.grid)
    return ComplexField2D(f.grid, gx), ComplexField2D(f.grid, gy)


def laplacian(values, grid):
    """Laplacian consistent with grad: spectral -|k|^2, or FD4 applied twice.

    In box mode the composition of the antisymmetric first-derivative
    stencils makes -laplacian the exact discrete energy gradient of
    sum |grad u|^2 / 2, so Euler-Lagrange residuals vanish at discrete
    minimizers.
    """
    if grid.boundary == "periodic":
        kxm, kym = grid.wavenumbers()
        out = np.fft.ifft2(-(kxm**2 + kym**2) * np.fft.fft2(values))
        return out.real if np.isrealobj(values) else out
    return (_diff_fd4(_diff_fd4(values, grid, 0), grid, 0)
            + _diff_fd4(_diff_fd4(values, grid, 1), grid, 1))


def divergence(vf: VectorField2D):
    return diff(vf.vx, vf.grid, 0) + diff(vf.vy, vf.grid, 1)


def curl(vf: VectorField2D):
    """Scalar curl d(vy)/dx - d(vx)/dy."""
    return diff(vf.vy, vf.grid, 0) - diff(vf.vx, vf.grid, 1)


# ---------------------------------------------------------------------------
# integrals and energies

def integrate(values, grid, mask=None):
    """Midpoint quadrature of a sampled scalar, optionally over a boolean mask."""
    if mask is None:
        return float(np.sum(values) * grid.cell_area)
    return float(np.sum(values[mask]) * grid.cell_area)


def mass(f: ComplexField2D):
    """Total mass integral |f|^2 over the box."""
    return integrate(np.abs(f.values) ** 2, f.grid)


def normalize_mass(f: ComplexField2D, m):
    """Rescale to mass exactly m (in floating point)."""
    cur = mass(f)
    if cur <= 0:
        raise ValueError("cannot normalize a zero field")
    return ComplexField2D(f.grid, f.values * np.sqrt(m / cur))


def energy_gpv(u: ComplexField2D, V, eps):
    """Gross-Pitaevskii energy: |grad u|^2/2 + (V |u|^2/2 + |u|^4/4)/eps^2."""
    gx, gy = grad(u.values, u.grid)
    dens = np.abs(u.values) ** 2
    e = 0.5 * (np.abs(gx) ** 2 + np.abs(gy) ** 2)
    e = e + (V * dens / 2.0 + dens**2 / 4.0) / eps**2
    return integrate(e, u.grid)


def energy_weighted(v: ComplexField2D, eta, eps, mask=None):
    """Weighted free energy of the rescaled view:

    eta^2 |grad v|^2 / 2 + eta^4 (|v|^2 - 1)^2 / (4 eps^2),
    optionally restricted to a window mask. Box-mode derivatives use
    edge replication (views approach modulus one at the boundary, not
    zero). Products are grouped as (eta |grad v|)^2 and
    (eta^2 (|v|^2-1))^2 so that v = u/eta stays finite deep in the tail
    where eta is many orders below the roundoff floor of u.

    On periodic grids the gradient factor is assembled through the
    composite field u = eta v as eta grad v = grad(eta v) - v grad eta.
    The spectral derivative then never acts across the jump where a view
    is masked off, nor across the phase seam a nonzero total winding
    forces on the torus; both would otherwise ring across the whole
    grid.
    """
    eta = np.asarray(eta, dtype=np.float64)
    if np.any(eta < 0):
        raise ValueError("weight eta must be nonnegative")
    dens = np.abs(v.values) ** 2
    if v.grid.boundary == "periodic":
        ux, uy = grad(eta * v.values, v.grid)
        ex, ey = grad(eta, v.grid)
        gx = ux - v.values * ex
        gy = uy - v.values * ey
        e = 0.5 * (np.abs(gx) ** 2 + np.abs(gy) ** 2)
    else:
        gx, gy = grad(v.values, v.grid, pad_mode="edge")
        e = 0.5 * ((eta * np.abs(gx)) ** 2 + (eta * np.abs(gy)) ** 2)
    e = e + (eta**2 * (dens - 1.0)) ** 2 / (4.0 * eps**2)
    return integrate(e, v.grid, mask)


def energy_decomposition_residual(u: ComplexField2D, eta, V, lambda_eps, eps):
    """|E_gpv(u) - E_gpv(eta) - E_weighted(u/eta) - (lambda/2 eps^2)(M(u)-M(eta))|.

    Exact identity in the continuum for positive eta solving the
    Euler-Lagrange equation; discretely it holds to quadrature error.
    """
    grid = u.grid
    eta = np.asarray(eta, dtype=np.float64)
    eta_f = ComplexField2D(grid, eta.astype(np.complex128))
    v = ComplexField2D(grid, u.values / eta)
    lhs = energy_gpv(u, V, eps)
    rhs = (energy_gpv(eta_f, V, eps) + energy_weighted(v, eta, eps)
           + lambda_eps / (2.0 * eps**2) * (mass(u) - mass(eta_f)))
    return abs(lhs - rhs)


# ---------------------------------------------------------------------------
# current and Jacobian

def current(f: ComplexField2D):
    """Superfluid current j = Im(conj(f) grad f)."""
    gx, gy = grad(f.values, f.grid)
    c = np.conj(f.values)
    return VectorField2D(f.grid, (c * gx).imag, (c * gy).imag)


def wrap_angle(d):
    """Wrap phase differences to (-pi, pi]."""
    return d - TWO_PI * np.round(d / TWO_PI)


def phase_winding(f: ComplexField2D):
    """Signed winding of the phase around each grid plaquette.

    W[i, j] is the sum of wrapped phase differences around the cell with
    corners (i,j), (i+1,j), (i+1,j+1), (i,j+1); each value is within
    roundoff of a multiple of 2 pi. Box grids have no wrap-around
    plaquettes: last row/column are zero.
    """
    th = np.angle(f.values)
    t10 = np.roll(th, -1, axis=0)
    t01 = np.roll(th, -1, axis=1)
    t11 = np.roll(t10, -1, axis=1)
    w = (wrap_angle(t10 - th) + wrap_angle(t11 - t10)
         + wrap_angle(t01 - t11) + wrap_angle(th - t01))
    if f.grid.boundary == "box":
        w[-1, :] = 0.0
        w[:, -1] = 0.0
    return w


def jacobian(f: ComplexField2D):
    """Jacobian density J = (1/2) curl j, plaquette-exact.

    Computed as phase winding per cell / (2 dx dy) so that the integral
    over any union of cells is exactly pi times an integer (up to
    roundoff), and the total over a torus vanishes identically.
    """
    return phase_winding(f) / (2.0 * f.grid.cell_area)


def pointwise_jacobian(f: ComplexField2D):
    """Smooth Jacobian Im(conj(d1 f) d2 f) at plaquette centers.

    Corner-averaged differences; used as a weight for sub-cell vortex
    localization, not for winding counts.
    """
    v = f.values
    v10 = np.roll(v, -1, axis=0)
    v01 = np.roll(v, -1, axis=1)
    v11 = np.roll(v10, -1, axis=1)
    dvx = ((v10 + v11) - (v + v01)) / (2.0 * f.grid.dx)
    dvy = ((v01 + v11) - (v + v10)) / (2.0 * f.grid.dy)
    out = (np.conj(dvx) * dvy).imag
    if f.grid.boundary == "box":
        out[-1, :] = 0.0
        out[:, -1] = 0.0
    return out


def plaquette_centers(grid):
    """Centers of the plaquettes indexed like phase_winding output."""
    cx = grid.x + 0.5 * grid.dx
    cy = grid.y + 0.5 * grid.dy
    if grid.boundary == "periodic":
        # wrap-around plaquette centers land past the box edge; fold back
        cx = np.where(cx > grid.lx, cx - 2 * grid.lx, cx)
        cy = np.where(cy > grid.ly, cy - 2 * grid.ly, cy)
    return np.meshgrid(cx, cy, indexing="ij")


# ---------------------------------------------------------------------------
# binary field format

_HEADER = struct.Struct("<iiddi")
_BOUNDARY_FLAGS = {"periodic": 0, "box": 1}
_BOUNDARY_NAMES = {0: "periodic", 1: "box"}


def save_field(path, f: ComplexField2D):
    """Write the binary field format:

    int32 nx, int32 ny, float64 lx, float64 ly, int32 boundary flag
    (0 periodic, 1 box), then nx*ny row-major complex128, all
    little-endian.
    """
    g = f.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(g.nx, g.ny, g.lx, g.ly, _BOUNDARY_FLAGS[g.boundary]))
        fh.write(np.ascontiguousarray(f.values, dtype="<c16").tobytes())


def load_field(path):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise IOError(f"{path}: truncated header")
        nx, ny, lx, ly, flag = _HEADER.unpack(head)
        if flag not in _BOUNDARY_NAMES:
            raise IOError(f"{path}: unknown boundary flag {flag}")
        raw = fh.read(16 * nx * ny)
        if len(raw) != 16 * nx * ny:
            raise IOError(f"{path}: truncated payload")
    values = np.frombuffer(raw, dtype="<c16").reshape(nx, ny).astype(np.complex128)
    return ComplexField2D(Grid2D(nx, ny, lx, ly, _BOUNDARY_NAMES[flag]), values)
