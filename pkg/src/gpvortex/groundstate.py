"""Thomas-Fermi profiles and Gross-Pitaevskii ground states.

The ground state at mass m minimizes

    E(eta) = int |grad eta|^2 / 2 + (V eta^2 / 2 + eta^4 / 4) / eps^2

over real fields with int eta^2 = m. The minimizer is positive and solves
the Euler-Lagrange system -eps^2 lap eta + (V + eta^2) eta = lambda eta.
Solved by projected, spectrally preconditioned descent with Armijo
backtracking; the reported residual uses the same discrete operators as
the energy, so it genuinely vanishes at the discrete minimizer.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass

import numpy as np

from gpvortex import fields
from gpvortex.fields import ComplexField2D, Grid2D


class BoxTooSmallError(ValueError):
    """Thomas-Fermi support would touch the computational boundary."""


class ResolutionError(ValueError):
    """Grid too coarse to resolve the healing length."""


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residual_tail):
        super().__init__(f"{msg}; residual tail {residual_tail}")
        self.residual_tail = residual_tail


def harmonic_trap(grid):
    X, Y = grid.mesh()
    return X**2 + Y**2


def quartic_trap(grid):
    X, Y = grid.mesh()
    return (X**2 + Y**2) ** 2


def solve_lambda0(V, m, grid, tol=1e-10, bracket=None):
    """Thomas-Fermi multiplier: the root of mu(lam) = int (lam - V)^+ = m.

    mu is continuous and nondecreasing, so bisection on
    [min V, max V + m/|box|] converges unconditionally; the result is
    independent of the bracket at fixed tolerance. Relative mass defect
    at the returned multiplier is below tol.
    """
    V = np.asarray(V, dtype=np.float64)
    if m <= 0:
        raise ValueError("mass must be positive")
    area = grid.cell_area

    def mu(lam):
        return np.sum(np.maximum(lam - V, 0.0)) * area

    vmax = float(np.max(V))
    if grid.boundary == "box" and mu(vmax) < m:
        raise BoxTooSmallError(
            f"target mass {m} not reachable inside the box: mu(max V) = {mu(vmax)}")
    if bracket is None:
        lo = float(np.min(V))
        hi = vmax + m / grid.box_area
    else:
        lo, hi = bracket
    while mu(hi) < m:
        hi += m / grid.box_area
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mu(mid) < m:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16 * max(1.0, abs(hi)):
            break
    lam = 0.5 * (lo + hi)
    if abs(mu(lam) - m) > tol * m:
        raise ConvergenceError("lambda0 bisection stalled", [mu(lam) - m])
    return lam


def tf_profile(V, lambda0):
    """Thomas-Fermi density (lambda0 - V)^+ with its support mask."""
    rho = np.maximum(lambda0 - np.asarray(V, dtype=np.float64), 0.0)
    return rho, rho > 0


def _check_box_margins(V, rho, lambda0, grid):
    if grid.boundary != "box":
        return
    ring = np.zeros_like(rho, dtype=bool)
    ring[0, :] = ring[-1, :] = True
    ring[:, 0] = ring[:, -1] = True
    if np.any(rho[ring] > 0):
        raise BoxTooSmallError("Thomas-Fermi support touches the box boundary")
    # exponential-decay margin: the box must contain {V <= lambda0 + 1}
    if np.any(V[ring] <= lambda0 + 1.0):
        raise BoxTooSmallError(
            "box lacks the decay margin {V <= lambda0 + 1}")


@dataclass
class TrapModel:
    """Trap potential with its Thomas-Fermi data at mass m."""

    grid: Grid2D
    V: np.ndarray
    m: float
    lambda0: float
    rho_tf: np.ndarray
    omega_mask: np.ndarray

    @classmethod
    def build(cls, grid, V, m):
        V = np.asarray(V, dtype=np.float64)
        if V.shape != (grid.nx, grid.ny):
            raise ValueError("potential shape does not match grid")
        lam0 = solve_lambda0(V, m, grid)
        rho, mask = tf_profile(V, lam0)
        _check_box_margins(V, rho, lam0, grid)
        return cls(grid, V, m, lam0, rho, mask)

    def window_mask(self, frac=0.1):
        """Analysis window: bulk of the condensate, rho_TF >= frac * lambda0."""
        return self.rho_tf >= frac * self.lambda0


def lagrange_multiplier(eta, V, eps, m, grid):
    """Multiplier of the mass constraint:

    lambda = (eps^2 int |grad eta|^2 + int (V + eta^2) eta^2) / m.
    """
    gx, gy = fields.grad(eta, grid)
    num = eps**2 * np.sum(gx**2 + gy**2) + np.sum((V + eta**2) * eta**2)
    return float(num * grid.cell_area / m)


@dataclass
class GroundState:
    grid: Grid2D
    eta: np.ndarray
    eps: float
    m: float
    lambda0: float
    lambda_eps: float
    residual: float
    iterations: int
    energy: float

    def as_field(self):
        return ComplexField2D(self.grid, self.eta.astype(np.complex128))


def _energy_real(eta, V, eps, grid, exact=False):
    gx, gy = fields.grad(eta, grid)
    dens = eta * eta
    e = 0.5 * (gx * gx + gy * gy) + (V * dens / 2.0 + dens * dens / 4.0) / eps**2
    if exact:
        # compensated sum: needed when line-search decrements approach
        # the plain-sum noise floor
        import math
        return math.fsum(e.ravel()) * grid.cell_area
    return float(np.sum(e) * grid.cell_area)


def _tail_polish(eta, V, eps, m, grid, rho_tf, tol, grad_E, sweeps=1500):
    """Damped Jacobi on the Euler-Lagrange residual outside the TF support.

    There V - lambda > 0 makes the local problem convex and essentially
    linear (eta is exponentially small), so pointwise Newton-like sweeps
    converge where energy descent cannot resolve the decrease.
    """
    outside = rho_tf <= 0
    area = grid.cell_area
    inv_eps2 = 1.0 / eps**2
    if not np.any(outside):
        G = grad_E(eta)
        lam = eps**2 * float(np.sum(G * eta)) * area / m
        return eta, eps**2 * float(np.max(np.abs(G - lam * inv_eps2 * eta)))
    # diagonal of the wide 4th-order Laplacian stencil
    diag_lap = (130.0 / 144.0) * (1.0 / grid.dx**2 + 1.0 / grid.dy**2)
    residual = np.inf
    for _ in range(sweeps):
        G = grad_E(eta)
        lam = eps**2 * float(np.sum(G * eta)) * area / m
        r = eps**2 * (G - lam * inv_eps2 * eta)
        residual = float(np.max(np.abs(r)))
        if residual <= tol:
            break
        cloc = np.maximum(eps**2 * diag_lap + V + 3.0 * eta**2 - lam,
                          0.25 * lam)
        eta = np.where(outside, np.abs(eta - 0.66 * r / cloc), eta)
        eta = eta * np.sqrt(m / (np.sum(eta**2) * area))
    return eta, residual


def solve_ground_state(trap: TrapModel, eps, init=None, tol=1e-6,
                       max_iter=50000):
    """Minimize the constrained energy; returns a GroundState.

    Stops when the scaled Euler-Lagrange residual
    max |-eps^2 lap eta + (V + eta^2) eta - lambda eta| falls below tol.
    The energy decreases at every accepted step (asserted) and the mass
    is renormalized to m after each update.
    """
    grid, V, m = trap.grid, trap.V, trap.m
    if grid.dx > eps / 2.0 or grid.dy > eps / 2.0:
        raise ResolutionError(
            f"dx = {grid.dx:.4g} exceeds eps/2 = {eps / 2:.4g}")

    if init is None:
        from scipy.ndimage import gaussian_filter
        init = gaussian_filter(np.sqrt(trap.rho_tf + eps), sigma=2.0)
    eta = np.abs(np.asarray(init, dtype=np.float64))
    eta *= np.sqrt(m / (np.sum(eta**2) * grid.cell_area))

    kxm, kym = grid.wavenumbers()
    k2 = kxm**2 + kym**2
    inv_eps2 = 1.0 / eps**2

    def grad_E(e):
        return -fields.laplacian(e, grid) + inv_eps2 * (V + e * e) * e

    energy = _energy_real(eta, V, eps, grid)
    residual = np.inf
    history = []
    area = grid.cell_area
    prev_eta = None
    prev_d = None
    step = 1.0
    polished = False

    it = 0
    while True:
        converged = False
        for it in range(it + 1, max_iter + 1):
            G = grad_E(eta)
            lam = eps**2 * float(np.sum(G * eta)) * area / m
            r = G - (lam * inv_eps2) * eta
            residual = eps**2 * float(np.max(np.abs(r)))
            history.append(residual)
            if residual <= tol:
                converged = True
                break

            # SPD sandwich preconditioner: pointwise potential curvature
            # outside, inverse shifted Laplacian (spectral) in the middle
            mh = np.sqrt((lam + np.maximum(V - lam, 0.0)) * inv_eps2)
            w = np.fft.ifft2(np.fft.fft2(r / mh)
                             / (1.0 + k2 * eps**2 / lam)).real
            d = w / mh
            decrease = float(np.sum(r * d)) * area  # <r, P r> > 0

            # Barzilai-Borwein step on the preconditioned gradient, with
            # a monotone Armijo safeguard (energy must not increase)
            if prev_eta is not None:
                de = eta - prev_eta
                dd = d - prev_d
                denom = float(np.sum(de * dd))
                if denom > 0:
                    step = float(np.sum(de * de)) / denom
                step = min(max(step, 1e-3), 1e3)
            prev_eta, prev_d = eta, d

            accepted = False
            best = None
            s = step
            for _ in range(60):
                trial = np.abs(eta + s * (-d))
                nrm = np.sum(trial**2) * area
                if nrm > 0:
                    trial *= np.sqrt(m / nrm)
                    e_trial = _energy_real(trial, V, eps, grid)
                    if e_trial <= energy - 1e-4 * s * decrease:
                        assert e_trial <= energy  # monotone descent
                        eta, energy = trial, e_trial
                        accepted = True
                        break
                    if best is None or e_trial < best[1]:
                        best = (trial, e_trial)
                s *= 0.5
            if not accepted and best is not None:
                # sufficient decrease unattainable at the plain-sum noise
                # floor; retry the best candidate with compensated sums
                # so a strictly decreasing step keeps the monotonicity
                # contract
                e_ref = _energy_real(eta, V, eps, grid, exact=True)
                e_best = _energy_real(best[0], V, eps, grid, exact=True)
                if e_best < e_ref:
                    eta, energy = best[0], min(best[1], energy)
                    accepted = True
            if not accepted:
                # No acceptable step left. The energy is flat to
                # roundoff, but the sup-norm residual can still sit in
                # far-field cells whose energy weight eta^2 is far below
                # double precision; their equation is linear and convex
                # there, so polish them directly before giving up.
                eta, residual = _tail_polish(eta, V, eps, m, grid,
                                             trap.rho_tf, tol, grad_E)
                history.append(residual)
                if residual <= tol:
                    converged = True
                    break
                raise ConvergenceError("line search stalled", history[-10:])
        if not converged:
            eta, residual = _tail_polish(eta, V, eps, m, grid, trap.rho_tf,
                                         tol, grad_E)
            history.append(residual)
            if residual > tol:
                raise ConvergenceError(
                    f"no convergence in {max_iter} iterations", history[-10:])
        if polished:
            break
        # The sup-norm tolerance is met even when far-field cells idle
        # orders of magnitude above the true exponential tail (their
        # residual scales with eta itself). Polish the tail onto the
        # discrete decaying solution, then let the main loop re-converge
        # the support boundary the polish perturbed.
        eta, _ = _tail_polish(eta, V, eps, m, grid, trap.rho_tf, -1.0,
                              grad_E, sweeps=200)
        polished = True
        prev_eta = prev_d = None
        step = 1.0
        energy = _energy_real(eta, V, eps, grid)
        G = grad_E(eta)
        lam = eps**2 * float(np.sum(G * eta)) * area / m
        residual = eps**2 * float(np.max(np.abs(G - (lam * inv_eps2) * eta)))
        history.append(residual)
        if residual <= tol:
            break

    if not np.all(eta > 0):
        raise ConvergenceError("ground state lost positivity", history[-10:])
    lam = lagrange_multiplier(eta, V, eps, m, grid)
    return GroundState(grid, eta, eps, m, trap.lambda0, lam,
                       residual, it, energy)


# ---------------------------------------------------------------------------
# persistence: binary field plus INI sidecar

def save_ground_state(prefix, gs: GroundState):
    """Write <prefix>.field (binary format) and <prefix>.ini metadata."""
    fields.save_field(str(prefix) + ".field", gs.as_field())
    cp = configparser.ConfigParser()
    cp["ground_state"] = {
        "eps": format(gs.eps, ".17g"),
        "m": format(gs.m, ".17g"),
        "lambda0": format(gs.lambda0, ".17g"),
        "lambda_eps": format(gs.lambda_eps, ".17g"),
        "residual": format(gs.residual, ".17g"),
        "iterations": str(gs.iterations),
        "energy": format(gs.energy, ".17g"),
    }
    with open(str(prefix) + ".ini", "w") as fh:
        cp.write(fh)


def load_ground_state(prefix):
    f = fields.load_field(str(prefix) + ".field")
    cp = configparser.ConfigParser()
    read = cp.read(str(prefix) + ".ini")
    if not read:
        raise IOError(f"missing sidecar {prefix}.ini")
    sec = cp["ground_state"]
    eta = f.values.real
    return GroundState(
        f.grid, eta,
        eps=sec.getfloat("eps"), m=sec.getfloat("m"),
        lambda0=sec.getfloat("lambda0"), lambda_eps=sec.getfloat("lambda_eps"),
        residual=sec.getfloat("residual"), iterations=sec.getint("iterations"),
        energy=sec.getfloat("energy"))
