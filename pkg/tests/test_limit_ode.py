"""Tests for the limiting vortex motion law and its RK4 integrator."""

import numpy as np
import pytest

from gpvortex.fields import Grid2D
from gpvortex import limit_ode as lo


@pytest.fixture(scope="module")
def parabolic():
    """Radial density 1 - |x|^2 clipped at zero, sampled on a box grid."""
    g = Grid2D(256, 256, 2.0, 2.0, boundary="box")
    X, Y = g.mesh()
    rho = np.maximum(1.0 - (X**2 + Y**2), 0.0)
    return lo.InterpolatedDensity(rho, g)


def test_state_validates_shapes_and_degrees():
    with pytest.raises(ValueError):
        lo.OdeState(np.zeros((2, 2)), np.array([1]))
    with pytest.raises(ValueError):
        lo.OdeState(np.zeros((1, 2)), np.array([2]))
    st = lo.OdeState([0.1, 0.2], [1])
    assert st.b.shape == (1, 2) and st.d.shape == (1,)


def test_density_rejects_bad_input():
    g = Grid2D(32, 32, 1.0, 1.0, boundary="box")
    with pytest.raises(ValueError):
        lo.InterpolatedDensity(np.ones((16, 16)), g)
    with pytest.raises(ValueError):
        lo.InterpolatedDensity(-np.ones((32, 32)), g)


def test_rhs_radial_parabolic_velocity(parabolic):
    # For density 1 - r^2 a positive vortex at (r0, 0) moves tangentially
    # with speed 2 r0 / (1 - r0^2): here (0, -4/3).
    v = lo.ode_rhs(np.array([[0.5, 0.0]]), np.array([1]), parabolic)
    assert abs(v[0, 0]) < 1e-12
    assert abs(v[0, 1] + 4.0 / 3.0) < 1e-12


def test_rhs_vanishes_at_critical_point(parabolic):
    v = lo.ode_rhs(np.array([[0.0, 0.0]]), np.array([1]), parabolic)
    assert np.abs(v).max() < 1e-12


def test_rhs_floor_violation_raises(parabolic):
    with pytest.raises(lo.DensityFloorError):
        lo.ode_rhs(np.array([[1.5, 0.0]]), np.array([1]), parabolic)


def test_rhs_decoupling(parabolic):
    b = np.array([[0.5, 0.0], [-0.2, 0.3]])
    d = np.array([1, -1])
    both = lo.ode_rhs(b, d, parabolic)
    first = lo.ode_rhs(b[:1], d[:1], parabolic)
    second = lo.ode_rhs(b[1:], d[1:], parabolic)
    assert np.array_equal(both[0], first[0])
    assert np.array_equal(both[1], second[0])


def test_rhs_degree_flip_reverses_exactly(parabolic):
    b = np.array([[0.31, -0.22]])
    plus = lo.ode_rhs(b, np.array([1]), parabolic)
    minus = lo.ode_rhs(b, np.array([-1]), parabolic)
    assert np.array_equal(minus, -plus)


def test_rhs_invariant_under_positive_rescale(parabolic):
    g = parabolic.grid
    X, Y = g.mesh()
    rho = np.maximum(1.0 - (X**2 + Y**2), 0.0)
    scaled = lo.InterpolatedDensity(7.3 * rho, g)
    b = np.array([[0.5, 0.0], [0.1, -0.4]])
    d = np.array([1, 1])
    v1 = lo.ode_rhs(b, d, parabolic)
    v2 = lo.ode_rhs(b, d, scaled)
    assert np.abs(v2 - v1).max() < 1e-13


def test_integrate_validates_steps(parabolic):
    st = lo.OdeState([0.5, 0.0], [1])
    with pytest.raises(ValueError):
        lo.integrate(st, parabolic, 1.0, 0.0)
    with pytest.raises(ValueError):
        lo.integrate(st, parabolic, -1.0, 1e-3)


def test_orbit_angular_velocity_and_period(parabolic):
    # One full revolution: |omega| = 2/(1 - 0.25) = 8/3, period 3 pi / 4.
    st = lo.OdeState([0.5, 0.0], [1])
    period = 3 * np.pi / 4
    dtau = period / 2356
    traj = lo.integrate(st, parabolic, period, dtau)
    assert traj.halt_reason is None
    ang = np.unwrap(np.arctan2(traj.positions[:, 0, 1],
                               traj.positions[:, 0, 0]))
    slope = np.polyfit(traj.taus, ang, 1)[0]
    assert abs(abs(slope) - 8.0 / 3.0) < 1e-9
    assert slope < 0  # positive degree circulates clockwise here
    ret = np.hypot(*(traj.positions[-1, 0] - np.array([0.5, 0.0])))
    assert ret < 1e-9


def test_level_line_conserved_long_run(parabolic):
    st = lo.OdeState([0.5, 0.0], [1])
    traj = lo.integrate(st, parabolic, 10.0, 1e-3)
    assert traj.halt_reason is None
    assert len(traj.taus) == 10001
    drift = np.abs(traj.densities - traj.densities[0]).max()
    assert drift <= 1e-6


def test_reversal_retraces_orbit(parabolic):
    st = lo.OdeState([0.5, 0.0], [1])
    fwd = lo.integrate(st, parabolic, 2.0, 1e-3)
    fin = fwd.final_state
    back = lo.integrate(lo.OdeState(fin.b, -fin.d, 0.0), parabolic,
                        fin.tau, 1e-3)
    err = np.hypot(*(back.positions[-1, 0] - np.array([0.5, 0.0])))
    assert err <= 1e-7


def test_opposite_pair_halts_on_collision(parabolic):
    # Mirror-image vortices of opposite degree circulate toward each other
    # and meet after a quarter turn, tau = (pi/2)/(8/3) = 3 pi / 16.
    st = lo.OdeState(np.array([[0.5, 0.0], [-0.5, 0.0]]), np.array([1, -1]))
    traj = lo.integrate(st, parabolic, 2.0, 1e-3)
    assert traj.halt_reason == "collision"
    assert abs(traj.halt_tau - 3 * np.pi / 16) < 5e-3
    assert traj.taus[-1] == traj.halt_tau


def test_start_below_floor_halts_immediately(parabolic):
    st = lo.OdeState([1.8, 0.0], [1])
    traj = lo.integrate(st, parabolic, 1.0, 1e-3)
    assert traj.halt_reason == "density-floor"
    assert traj.halt_tau == 0.0
    assert len(traj.taus) == 1


def test_smooth_density_level_line():
    # Same conservation property for a smooth bell-shaped density, the
    # form produced by a squared ground-state modulus.
    g = Grid2D(192, 192, 2.5, 2.5, boundary="box")
    X, Y = g.mesh()
    rho = np.exp(-(X**2 + Y**2))
    dens = lo.InterpolatedDensity(rho, g)
    st = lo.OdeState([0.7, 0.0], [-1])
    traj = lo.integrate(st, dens, 5.0, 1e-3)
    assert traj.halt_reason is None
    drift = np.abs(traj.densities - traj.densities[0]).max()
    assert drift <= 1e-6


def test_trajectory_rows_and_monotone_times(parabolic):
    st = lo.OdeState(np.array([[0.5, 0.0], [0.0, 0.3]]), np.array([1, 1]))
    traj = lo.integrate(st, parabolic, 0.05, 1e-3)
    assert np.all(np.diff(traj.taus) > 0)
    rows = list(traj.rows())
    assert len(rows) == 2 * len(traj.taus)
    tau0, idx, x, y, rho = rows[1]
    assert idx == 1 and tau0 == traj.taus[0]
    assert np.isclose(rho, parabolic.density(np.array([[x, y]]))[0])
    assert np.all(np.isfinite(traj.positions))
