"""Integration of the limiting vortex motion law.

Each vortex moves along a level line of a background density rho with
velocity d * (grad rho)^perp / rho evaluated at its own position; the
vortices do not interact at this order. The density is supplied as a
sampled field; off-grid values come from bicubic interpolation of the
samples and of their discrete gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.spatial.distance import pdist

from gpvortex import fields

COLLISION_DISTANCE = 1e-3
DENSITY_FLOOR_FRACTION = 1e-6


class DensityFloorError(ValueError):
    """A vortex position left the region where the density is trusted."""


@dataclass
class OdeState:
    b: np.ndarray
    d: np.ndarray
    tau: float = 0.0

    def __post_init__(self):
        self.b = np.atleast_2d(np.asarray(self.b, dtype=np.float64))
        self.d = np.atleast_1d(np.asarray(self.d, dtype=np.int64))
        if self.b.shape != (len(self.d), 2):
            raise ValueError("positions must be (l, 2) with one degree each")
        if np.any(np.abs(self.d) != 1):
            raise ValueError("degrees must be +1 or -1")


class InterpolatedDensity:
    """Bicubic views of a sampled density and of its discrete gradient.

    The gradient is differentiated on the grid first (same convention as
    the field operators) and each component is then splined; splining
    rho alone and differentiating the spline is visibly rougher for the
    level-line conservation property.
    """

    def __init__(self, values, grid):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (grid.nx, grid.ny):
            raise ValueError("density shape does not match the grid")
        self.grid = grid
        self.peak = float(values.max())
        if self.peak <= 0:
            raise ValueError("density must be positive somewhere")
        self.floor = DENSITY_FLOOR_FRACTION * self.peak
        x, y = grid.x, grid.y
        self._rho = RectBivariateSpline(x, y, values, kx=3, ky=3)
        gx, gy = fields.grad(values, grid)
        self._gx = RectBivariateSpline(x, y, np.real(gx), kx=3, ky=3)
        self._gy = RectBivariateSpline(x, y, np.real(gy), kx=3, ky=3)

    def density(self, points):
        points = np.atleast_2d(points)
        return self._rho(points[:, 0], points[:, 1], grid=False)

    def gradient(self, points):
        points = np.atleast_2d(points)
        return np.stack([self._gx(points[:, 0], points[:, 1], grid=False),
                         self._gy(points[:, 0], points[:, 1], grid=False)],
                        axis=1)


def ode_rhs(b, d, density: InterpolatedDensity):
    """Velocities d_i (grad rho)^perp(b_i) / rho(b_i), rows per vortex.

    The vortices are decoupled: each velocity depends only on its own
    position and degree. Raises DensityFloorError when any position
    sits where the density is below 1e-6 of its peak.
    """
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    d = np.atleast_1d(np.asarray(d))
    rho = density.density(b)
    if np.any(rho <= density.floor):
        bad = int(np.argmin(rho))
        raise DensityFloorError(
            f"vortex {bad} at {b[bad]} sees density {rho[bad]:.3e} below the "
            f"floor {density.floor:.3e}")
    g = density.gradient(b)
    perp = np.stack([-g[:, 1], g[:, 0]], axis=1)
    return d[:, None] * perp / rho[:, None]


@dataclass
class OdeTrajectory:
    taus: np.ndarray
    positions: np.ndarray   # (n_frames, l, 2)
    densities: np.ndarray   # (n_frames, l)
    degrees: np.ndarray
    halt_reason: str | None = None
    halt_tau: float | None = None

    @property
    def final_state(self):
        return OdeState(self.positions[-1].copy(), self.degrees.copy(),
                        float(self.taus[-1]))

    def rows(self):
        """Flat (tau, index, x, y, density) tuples, one per vortex per frame."""
        for k in range(len(self.taus)):
            for i in range(self.positions.shape[1]):
                yield (float(self.taus[k]), i,
                       float(self.positions[k, i, 0]),
                       float(self.positions[k, i, 1]),
                       float(self.densities[k, i]))


def integrate(state0: OdeState, density: InterpolatedDensity, tau_end, dtau):
    """Classical RK4 from state0.tau to tau_end with fixed step dtau.

    Halts early, recording reason and time, if a vortex leaves the
    density floor mid-stage or if two vortices approach below the
    collision distance.
    """
    if dtau <= 0:
        raise ValueError("dtau must be positive")
    span = tau_end - state0.tau
    if span <= 0:
        raise ValueError("tau_end must lie beyond the initial time")
    n_steps = max(1, int(round(span / dtau)))
    b = state0.b.copy()
    d = state0.d
    tau = state0.tau
    taus = [tau]
    pos = [b.copy()]
    dens = [density.density(b)]
    halt_reason = halt_tau = None
    for _ in range(n_steps):
        try:
            k1 = ode_rhs(b, d, density)
            k2 = ode_rhs(b + 0.5 * dtau * k1, d, density)
            k3 = ode_rhs(b + 0.5 * dtau * k2, d, density)
            k4 = ode_rhs(b + dtau * k3, d, density)
        except DensityFloorError:
            halt_reason, halt_tau = "density-floor", tau
            break
        b = b + (dtau / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        tau += dtau
        taus.append(tau)
        pos.append(b.copy())
        dens.append(density.density(b))
        if len(d) >= 2 and pdist(b).min() < COLLISION_DISTANCE:
            halt_reason, halt_tau = "collision", tau
            break
    return OdeTrajectory(np.array(taus), np.array(pos), np.array(dens),
                         d.copy(), halt_reason, halt_tau)
