"""Grid, operator, energy, Jacobian, and field I/O tests."""

import numpy as np
import pytest

from gpvortex import fields
from gpvortex.fields import ComplexField2D, Grid2D, GridError, VectorField2D


def make_field(grid, fn):
    X, Y = grid.mesh()
    return ComplexField2D(grid, fn(X, Y))


def test_grid_spacing_and_coords():
    g = Grid2D(64, 32, 2.0, 1.0)
    assert g.dx == pytest.approx(4.0 / 64)
    assert g.dy == pytest.approx(2.0 / 32)
    assert g.x[0] == pytest.approx(-2.0 + 0.5 * g.dx)
    assert g.x[-1] == pytest.approx(2.0 - 0.5 * g.dx)
    assert g.box_area == pytest.approx(8.0)


def test_grid_validation():
    with pytest.raises(GridError):
        Grid2D(8, 64, 1.0, 1.0)
    with pytest.raises(GridError):
        Grid2D(64, 64, -1.0, 1.0)
    with pytest.raises(GridError):
        Grid2D(64, 64, 1.0, 1.0, "open")
    with pytest.raises(GridError):
        ComplexField2D(Grid2D(32, 32, 1.0, 1.0), np.zeros((16, 16)))


def test_gaussian_mass():
    # integral of exp(-|x|^2) over the plane is pi; tails at lx=6 are ~1e-31
    g = Grid2D(128, 128, 6.0, 6.0)
    f = make_field(g, lambda X, Y: np.exp(-(X**2 + Y**2) / 2.0))
    assert fields.mass(f) == pytest.approx(np.pi, abs=1e-6)


def test_normalize_mass_exact():
    g = Grid2D(32, 32, 1.0, 1.0)
    rng = np.random.default_rng(7)
    f = ComplexField2D(g, rng.normal(size=(32, 32)) + 1j * rng.normal(size=(32, 32)))
    out = fields.normalize_mass(f, 2.5)
    assert fields.mass(out) == pytest.approx(2.5, rel=1e-14)


def test_spectral_derivative_exact_mode():
    g = Grid2D(64, 64, np.pi, np.pi)
    X, Y = g.mesh()
    f = np.sin(3.0 * X) * np.cos(2.0 * Y)
    dfx = fields.diff(f, g, 0)
    assert np.max(np.abs(dfx - 3.0 * np.cos(3.0 * X) * np.cos(2.0 * Y))) < 1e-10
    dfy = fields.diff(f, g, 1)
    assert np.max(np.abs(dfy + 2.0 * np.sin(3.0 * X) * np.sin(2.0 * Y))) < 1e-10


def test_fd4_derivative_order():
    # compactly supported bump, error should drop ~16x per refinement
    errs = []
    for n in (64, 128, 256):
        g = Grid2D(n, n, 8.0, 8.0, "box")
        X, Y = g.mesh()
        f = np.exp(-(X**2 + Y**2))
        dfx = fields.diff(f, g, 0)
        errs.append(np.max(np.abs(dfx + 2.0 * X * f)))
    assert errs[1] / errs[2] > 12.0
    assert errs[2] < 1e-4


def test_laplacian_modes():
    g = Grid2D(64, 64, np.pi, np.pi)
    X, Y = g.mesh()
    f = np.sin(2.0 * X) * np.sin(Y)
    lap = fields.laplacian(f, g)
    assert np.max(np.abs(lap + 5.0 * f)) < 1e-9
    # box mode: wide-stencil FD4 composition, 4th-order convergence
    errs = []
    for n in (64, 128):
        gb = Grid2D(n, n, 8.0, 8.0, "box")
        Xb, Yb = gb.mesh()
        fb = np.exp(-(Xb**2 + Yb**2))
        lapb = fields.laplacian(fb, gb)
        exact = (4.0 * (Xb**2 + Yb**2) - 4.0) * fb
        errs.append(np.max(np.abs(lapb - exact)))
    assert errs[0] / errs[1] > 12.0


def test_energy_uniform_no_potential():
    # |u| = 1, V = 0, eps = 1 on [-1,1]^2: energy = area / 4 = 1
    g = Grid2D(32, 32, 1.0, 1.0)
    u = ComplexField2D(g, np.ones((32, 32)))
    assert fields.energy_gpv(u, 0.0, 1.0) == pytest.approx(1.0, rel=1e-12)


def test_energy_uniform_with_potential():
    # |u| = 1, V = 1, eps = 0.5 on [-1,1]^2: 4 * (1/0.25) * (1/2 + 1/4) = 12
    g = Grid2D(32, 32, 1.0, 1.0)
    u = ComplexField2D(g, np.ones((32, 32)))
    V = np.ones((32, 32))
    assert fields.energy_gpv(u, V, 0.5) == pytest.approx(12.0, rel=1e-12)


def test_energy_weighted_identity_flat_weight():
    # with eta = 1: E_weighted(v) = E_gpv(v; V = -1) + |box| / (4 eps^2)
    g = Grid2D(48, 48, 1.5, 1.5)
    rng = np.random.default_rng(3)
    phase = rng.normal(size=(48, 48))
    v = ComplexField2D(g, (1.0 + 0.1 * np.cos(phase)) * np.exp(1j * phase))
    eps = 0.4
    lhs = fields.energy_weighted(v, np.ones((48, 48)), eps)
    rhs = fields.energy_gpv(v, -np.ones((48, 48)), eps) + g.box_area / (4 * eps**2)
    assert lhs == pytest.approx(rhs, rel=1e-9)


def test_energy_weighted_mask_and_negative_weight():
    g = Grid2D(32, 32, 1.0, 1.0)
    v = ComplexField2D(g, 2.0 * np.ones((32, 32)))
    eta = np.ones((32, 32))
    full = fields.energy_weighted(v, eta, 1.0)
    X, _ = g.mesh()
    half = fields.energy_weighted(v, eta, 1.0, mask=X < 0)
    assert half == pytest.approx(full / 2.0, rel=1e-12)
    with pytest.raises(ValueError):
        fields.energy_weighted(v, -eta, 1.0)


def test_energy_decomposition_flat_ground_state():
    # eta = 1 solves the V = 0 Euler-Lagrange system with multiplier 1
    g = Grid2D(64, 64, 2.0, 2.0)
    X, Y = g.mesh()
    v = (1.0 + 0.2 * np.sin(np.pi * X / 2.0)) * np.exp(
        0.3j * np.cos(np.pi * Y / 2.0))
    u = ComplexField2D(g, v)
    res = fields.energy_decomposition_residual(u, np.ones((64, 64)), 0.0, 1.0, 0.3)
    scale = abs(fields.energy_gpv(u, 0.0, 0.3))
    assert res <= 1e-8 * scale


def test_current_plane_wave():
    # u = exp(i k.x): j = k pointwise
    g = Grid2D(64, 64, np.pi, np.pi)
    X, Y = g.mesh()
    u = ComplexField2D(g, np.exp(1j * (3.0 * X - 2.0 * Y)))
    j = fields.current(u)
    assert np.max(np.abs(j.vx - 3.0)) < 1e-9
    assert np.max(np.abs(j.vy + 2.0)) < 1e-9


def test_current_real_field_zero():
    g = Grid2D(32, 32, 1.0, 1.0)
    X, Y = g.mesh()
    u = ComplexField2D(g, np.cos(np.pi * X) * np.cos(np.pi * Y))
    j = fields.current(u)
    assert np.max(np.abs(j.vx)) < 1e-10
    assert np.max(np.abs(j.vy)) < 1e-10


def test_current_single_vortex_profile():
    # pure degree-1 phase: j = (x - a)_perp / |x - a|^2 away from the core
    g = Grid2D(256, 256, 2.0, 2.0, "box")
    X, Y = g.mesh()
    Z = X + 1j * Y
    r = np.abs(Z)
    u = ComplexField2D(g, np.where(r > 0, Z / np.where(r > 0, r, 1.0), 0.0))
    j = fields.current(u)
    ring = (r > 0.8) & (r < 1.2) & (np.abs(X) < 1.5) & (np.abs(Y) < 1.5)
    ex = -Y / r**2
    ey = X / r**2
    err = np.hypot(j.vx - ex, j.vy - ey)[ring]
    assert np.max(err) < 2e-2


def test_jacobian_plane_wave_zero():
    g = Grid2D(64, 64, np.pi, np.pi)
    X, Y = g.mesh()
    u = ComplexField2D(g, np.exp(1j * (2.0 * X + 5.0 * Y)))
    J = fields.jacobian(u)
    assert np.max(np.abs(J)) * g.cell_area < 1e-10


def test_jacobian_single_vortex_ball_integral():
    # integral of J over a ball around a degree-1 vortex is pi (within 5%)
    eps = 0.1
    g = Grid2D(128, 128, 2.0, 2.0, "box")
    X, Y = g.mesh()
    Z = (X - 0.3) + 1j * (Y + 0.2)
    r = np.abs(Z)
    u = ComplexField2D(g, np.tanh(r / eps) * np.where(r > 0, Z / np.where(r > 0, r, 1.0), 0.0))
    J = fields.jacobian(u)
    cx, cy = fields.plaquette_centers(g)
    ball = (cx - 0.3) ** 2 + (cy + 0.2) ** 2 < (10 * eps) ** 2
    val = np.sum(J[ball]) * g.cell_area
    assert val == pytest.approx(np.pi, rel=0.05)
    # box total: integer multiple of pi to 1e-9
    tot = np.sum(J) * g.cell_area
    assert abs(tot / np.pi - round(tot / np.pi)) < 1e-9


def test_winding_quantization_random_fields():
    # every plaquette winding is a multiple of 2 pi to roundoff
    rng = np.random.default_rng(11)
    for _ in range(5):
        g = Grid2D(48, 48, 1.0, 1.0)
        vals = rng.normal(size=(48, 48)) + 1j * rng.normal(size=(48, 48))
        w = fields.phase_winding(ComplexField2D(g, vals))
        frac = np.abs(w - 2 * np.pi * np.round(w / (2 * np.pi)))
        assert np.max(frac) < 1e-10


def test_winding_torus_total_zero():
    rng = np.random.default_rng(5)
    for _ in range(5):
        g = Grid2D(32, 32, 1.0, 1.0)
        vals = rng.normal(size=(32, 32)) + 1j * rng.normal(size=(32, 32))
        w = fields.phase_winding(ComplexField2D(g, vals))
        assert abs(np.sum(w)) < 1e-9


def test_divergence_curl_consistency():
    g = Grid2D(64, 64, np.pi, np.pi)
    X, Y = g.mesh()
    vf = VectorField2D(g, np.sin(X) * np.cos(Y), np.cos(X) * np.sin(Y))
    div = fields.divergence(vf)
    assert np.max(np.abs(div - 2.0 * np.cos(X) * np.cos(Y))) < 1e-10
    # gradient fields are curl-free
    cf = fields.curl(VectorField2D(g, *fields.grad(np.sin(X) * np.sin(Y), g)))
    assert np.max(np.abs(cf)) < 1e-9


def test_field_io_roundtrip(tmp_path):
    g = Grid2D(32, 24, 1.5, 1.25, "box")
    rng = np.random.default_rng(13)
    f = ComplexField2D(g, rng.normal(size=(32, 24)) + 1j * rng.normal(size=(32, 24)))
    p = tmp_path / "field.bin"
    fields.save_field(p, f)
    back = fields.load_field(p)
    assert back.grid == g
    assert np.array_equal(back.values, f.values)
    # twice-saved files are byte-identical
    p2 = tmp_path / "field2.bin"
    fields.save_field(p2, f)
    assert p.read_bytes() == p2.read_bytes()


def test_field_io_truncated(tmp_path):
    g = Grid2D(16, 16, 1.0, 1.0)
    f = ComplexField2D(g, np.ones((16, 16)))
    p = tmp_path / "field.bin"
    fields.save_field(p, f)
    data = p.read_bytes()
    bad = tmp_path / "bad.bin"
    bad.write_bytes(data[:-8])
    with pytest.raises(IOError):
        fields.load_field(bad)
    bad.write_bytes(data[:10])
    with pytest.raises(IOError):
        fields.load_field(bad)
