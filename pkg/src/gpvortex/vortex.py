"""Vortex seeding, detection, and discrepancy/localization functionals.

Positions and degrees live in a VortexSet; detection works on plaquette
phase windings (each an exact multiple of 2 pi), and every distance-type
diagnostic reduces to minimum-cost matchings of point masses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.interpolate import RectBivariateSpline
from scipy.optimize import linear_sum_assignment

from gpvortex import fields
from gpvortex.fields import ComplexField2D, VectorField2D

_EIGHT = np.ones((3, 3), dtype=bool)  # 8-connectivity structuring element


class SeparationError(ValueError):
    pass


class DisjointnessError(ValueError):
    pass


@dataclass
class VortexSet:
    """Point vortices: positions (l, 2) and degrees in {-1, +1}."""

    points: np.ndarray
    degrees: np.ndarray
    cluster_sizes: np.ndarray | None = None
    confidences: np.ndarray | None = None
    anomalies: list = field(default_factory=list)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if self.points.size == 0:
            self.points = self.points.reshape(0, 2)
        self.degrees = np.asarray(self.degrees, dtype=np.int64).ravel()
        if self.points.shape != (self.degrees.size, 2):
            raise ValueError("points/degrees size mismatch")
        if self.degrees.size and not np.all(np.isin(self.degrees, (-1, 1))):
            raise ValueError("degrees must be +1 or -1")

    def __len__(self):
        return self.degrees.size

    def rho_sep(self, boundary_distances=None):
        """min of half pairwise distances, window-boundary distances, and 1."""
        vals = [1.0]
        n = len(self)
        for i in range(n):
            for j in range(i + 1, n):
                vals.append(0.5 * float(np.hypot(*(self.points[i] - self.points[j]))))
        if boundary_distances is not None:
            vals.extend(float(b) for b in np.atleast_1d(boundary_distances))
        return min(vals)

    def csv_rows(self, frame):
        """Rows (frame, index, x, y, degree, cluster_size, confidence)."""
        out = []
        for i in range(len(self)):
            cs = int(self.cluster_sizes[i]) if self.cluster_sizes is not None else 0
            cf = float(self.confidences[i]) if self.confidences is not None else 1.0
            out.append((frame, i, float(self.points[i, 0]),
                        float(self.points[i, 1]), int(self.degrees[i]), cs, cf))
        return out


def window_boundary_distance(grid, mask, points):
    """Distance from each point to the boundary of a boolean window mask."""
    dist = ndimage.distance_transform_edt(mask, sampling=(grid.dx, grid.dy))
    out = []
    for p in np.atleast_2d(points):
        ix = int(np.clip(round((p[0] + grid.lx) / grid.dx - 0.5), 0, grid.nx - 1))
        iy = int(np.clip(round((p[1] + grid.ly) / grid.dy - 0.5), 0, grid.ny - 1))
        out.append(float(dist[ix, iy]))
    return np.array(out)


# ---------------------------------------------------------------------------
# seeding

def seed_vortices(eta, vs: VortexSet, eps, grid):
    """Multiply tanh-core unit-degree factors into a view field.

    v0(z) = prod_i tanh(|z - a_i| / eps) * ((z - a_i)/|z - a_i|)^{d_i},
    degree -1 realized by conjugating the unit factor. Returns
    (u0, v0) with u0 = eta * v0.
    """
    pts = vs.points
    for i in range(len(vs)):
        for j in range(i + 1, len(vs)):
            if np.hypot(*(pts[i] - pts[j])) < 4.0 * eps:
                raise SeparationError(
                    f"vortices {i}, {j} closer than 4 eps = {4 * eps}")
        if (grid.lx - abs(pts[i, 0]) < 4.0 * eps
                or grid.ly - abs(pts[i, 1]) < 4.0 * eps):
            raise SeparationError(f"vortex {i} within 4 eps of the boundary")

    X, Y = grid.mesh()
    v0 = np.ones((grid.nx, grid.ny), dtype=np.complex128)
    for i in range(len(vs)):
        Z = (X - pts[i, 0]) + 1j * (Y - pts[i, 1])
        r = np.abs(Z)
        unit = np.where(r > 0, Z / np.where(r > 0, r, 1.0), 0.0)
        if vs.degrees[i] < 0:
            unit = np.conj(unit)
        v0 = v0 * np.tanh(r / eps) * unit
    eta = np.asarray(eta, dtype=np.float64)
    return (ComplexField2D(grid, eta * v0), ComplexField2D(grid, v0))


# ---------------------------------------------------------------------------
# detection

def _plaquette_window(window, grid):
    """Plaquettes whose four corner samples all lie in the window."""
    if window is None:
        w = np.ones((grid.nx, grid.ny), dtype=bool)
    else:
        w = (window & np.roll(window, -1, axis=0) & np.roll(window, -1, axis=1)
             & np.roll(np.roll(window, -1, axis=0), -1, axis=1))
    if grid.boundary == "box":
        w = w.copy()
        w[-1, :] = False
        w[:, -1] = False
    return w


def _cluster_windings(winding, plaq_window, grid, weights=None):
    """Group adjacent nonzero-winding plaquettes; centroid per cluster.

    Returns list of dicts with keys position, winding, size. weights, if
    given, refine the centroid over the cluster dilated by 2 cells.
    """
    cells = (np.abs(winding) > 1e-6) & plaq_window
    labels, count = ndimage.label(cells, structure=_EIGHT)
    cx, cy = fields.plaquette_centers(grid)
    out = []
    for lab in range(1, count + 1):
        cl = labels == lab
        wsum = float(np.sum(winding[cl]))
        support = cl
        w = None
        if weights is not None:
            support = ndimage.binary_dilation(cl, structure=_EIGHT,
                                              iterations=2) & plaq_window
            w = np.abs(weights)[support]
        if w is None or np.sum(w) <= 0:
            support = cl
            w = np.abs(winding[cl])
        px = float(np.sum(w * cx[support]) / np.sum(w))
        py = float(np.sum(w * cy[support]) / np.sum(w))
        out.append({"position": (px, py), "winding": wsum,
                    "size": int(np.sum(cl))})
    return out


def detect_vortices(v: ComplexField2D, window=None):
    """Locate quantized vortices of a view field.

    Clusters adjacent nonzero-winding plaquettes (8-connectivity); each
    cluster's degree is its total winding / 2 pi and its position the
    smooth-Jacobian-weighted centroid of the cluster dilated by 2 cells.
    Clusters with degree outside {-1, +1} are recorded as anomalies, not
    detections. If |v| <= 0.5 somewhere outside all clusters (in-window),
    every detection is flagged low-confidence (0.5).
    """
    grid = v.grid
    winding = fields.phase_winding(v)
    plaq_window = _plaquette_window(window, grid)
    jpt = fields.pointwise_jacobian(v)
    clusters = _cluster_windings(winding, plaq_window, grid, weights=jpt)

    pts, degs, sizes, anomalies = [], [], [], []
    covered = (np.abs(winding) > 1e-6) & plaq_window
    covered = ndimage.binary_dilation(covered, structure=_EIGHT, iterations=2)
    for c in clusters:
        deg = round(c["winding"] / (2.0 * np.pi))
        if deg in (-1, 1):
            pts.append(c["position"])
            degs.append(deg)
            sizes.append(c["size"])
        else:
            anomalies.append({"position": c["position"], "degree": deg,
                              "size": c["size"]})

    sample_window = (np.ones((grid.nx, grid.ny), dtype=bool)
                     if window is None else window)
    outside = sample_window & ~covered
    low_conf = bool(np.any(np.abs(v.values)[outside] <= 0.5)) if np.any(outside) else False
    conf = np.full(len(pts), 0.5 if low_conf else 1.0)
    return VortexSet(np.array(pts, dtype=np.float64).reshape(len(pts), 2),
                     np.array(degs, dtype=np.int64), np.array(sizes),
                     conf, anomalies)


# ---------------------------------------------------------------------------
# point-mass matching

@dataclass
class W11Result:
    value: float
    matched: bool
    permutation: tuple
    rho_a: float


def w11_point_masses(a: VortexSet, xi: VortexSet, rho_a=None):
    """Minimum-cost matching distance between same-degree point masses.

    When the cost is at most rho_a / 4, it equals the negative-Sobolev
    norm of the normalized point-mass difference and matched is True;
    otherwise the cost is only an upper bound and matched is False.
    """
    if len(a) != len(xi):
        raise ValueError(f"cardinality mismatch: {len(a)} vs {len(xi)}")
    total = 0.0
    perm = np.full(len(a), -1, dtype=np.int64)
    for deg in (-1, 1):
        ia = np.where(a.degrees == deg)[0]
        ix = np.where(xi.degrees == deg)[0]
        if ia.size != ix.size:
            raise ValueError(f"degree multiset mismatch at degree {deg}")
        if ia.size == 0:
            continue
        cost = np.hypot(a.points[ia, None, 0] - xi.points[None, ix, 0],
                        a.points[ia, None, 1] - xi.points[None, ix, 1])
        rows, cols = linear_sum_assignment(cost)
        total += float(cost[rows, cols].sum())
        perm[ia[rows]] = ix[cols]
    if rho_a is None:
        rho_a = a.rho_sep()
    return W11Result(total, total <= rho_a / 4.0, tuple(int(p) for p in perm),
                     float(rho_a))


# ---------------------------------------------------------------------------
# discrepancy r_a

@dataclass
class RaResult:
    value: float
    floor: float
    matched: bool
    detected: VortexSet | None
    permutation: tuple


def detect_from_jacobian(jv, grid, window=None):
    """Cluster a Jacobian density field into vortex detections.

    jv is the plaquette Jacobian (winding / 2 dx dy); positions are
    winding-weighted cluster centroids, coarser than detect_vortices but
    requiring only the Jacobian.
    """
    winding = jv * (2.0 * grid.cell_area)
    plaq_window = _plaquette_window(window, grid)
    clusters = _cluster_windings(winding, plaq_window, grid)
    pts, degs, sizes, anomalies = [], [], [], []
    for c in clusters:
        deg = round(c["winding"] / (2.0 * np.pi))
        if deg in (-1, 1):
            pts.append(c["position"])
            degs.append(deg)
            sizes.append(c["size"])
        else:
            anomalies.append({"position": c["position"], "degree": deg,
                              "size": c["size"]})
    return VortexSet(np.array(pts, dtype=np.float64).reshape(len(pts), 2),
                     np.array(degs, dtype=np.int64), np.array(sizes),
                     None, anomalies)


def discrepancy_ra(jv, grid, reference: VortexSet, window=None):
    """Point-mass surrogate of the vorticity discrepancy:

    r_a = pi * (matched distance sum) + localization floor, with floor
    1.5 * dx * l covering the winding-cell centroid resolution. Returns
    an inf-valued sentinel when detection cardinality mismatches.
    """
    detected = detect_from_jacobian(jv, grid, window)
    floor = 1.5 * grid.dx * max(len(reference), 1)
    if len(detected) != len(reference):
        return RaResult(np.inf, floor, False, detected, ())
    try:
        res = w11_point_masses(reference, detected)
    except ValueError:
        return RaResult(np.inf, floor, False, detected, ())
    return RaResult(np.pi * res.value + floor, floor, res.matched, detected,
                    res.permutation)


# ---------------------------------------------------------------------------
# excess energy, localization radius, reference current

def sigma_excess(v: ComplexField2D, eta, reference: VortexSet, eps,
                 window=None, energy=None):
    """Excess of the weighted energy over the vortex core budget:

    Sigma = E_weighted(v) / |log eps| - pi * sum eta^2(a_i),
    eta^2 evaluated at the reference positions by bicubic interpolation.
    May be negative; callers take the positive part where needed.

    ``energy`` overrides the direct weighted-energy quadrature. Long
    evolved trajectories need this: deep in the trap tail the view is a
    ratio of two fields many orders below the roundoff floor, and the
    direct integral picks up that noise, while the same quantity
    assembled from the conserved total energy (energy_gpv(eta v) -
    energy_gpv(eta) - lambda_eps/(2 eps^2) * mass difference, an exact
    identity for eta solving its Euler-Lagrange equation) stays at the
    conservation error of the stepper.
    """
    L = abs(np.log(eps))
    ew = fields.energy_weighted(v, eta, eps, mask=window) \
        if energy is None else float(energy)
    total = ew / L
    if len(reference):
        grid = v.grid
        spline = RectBivariateSpline(grid.x, grid.y,
                                     np.asarray(eta, dtype=np.float64) ** 2)
        vals = spline(reference.points[:, 0], reference.points[:, 1],
                      grid=False)
        total -= np.pi * float(np.sum(vals))
    return float(total)


def g_func(x, eps):
    """Localization-scale function:

    g(x) = x + |log x|/|log eps| for x > 1/|log eps|,
    else (1 + log|log eps|)/|log eps|. Continuous and nondecreasing.
    """
    if x < 0:
        raise ValueError("g_func needs x >= 0")
    if not 0.0 < eps < 1.0:
        raise ValueError("g_func needs 0 < eps < 1")
    L = abs(np.log(eps))
    if x > 1.0 / L:
        return float(x + abs(np.log(x)) / L)
    return float((1.0 + np.log(L)) / L)


def r_xi_bound(sigma_plus, r_a, C1, eps):
    """Localization radius eps * exp(C1 (Sigma^+ + g(r_a)) |log eps|).

    Diagnostic only; C1 >= 1 is user-supplied. Always >= eps |log eps|.
    """
    if C1 < 1.0:
        raise ValueError("C1 must be >= 1")
    if sigma_plus < 0:
        raise ValueError("sigma_plus must be the positive part")
    L = abs(np.log(eps))
    return float(eps * np.exp(C1 * (sigma_plus + g_func(r_a, eps)) * L))


def reference_field_jstar(xi: VortexSet, r_xi, eps, grid, window=None):
    """Canonical vortex current: d_i (x - xi_i)_perp / max(r_xi, |x - xi_i|)^2
    inside each ball B(xi_i, 1/|log eps|), zero outside all balls.
    """
    L = abs(np.log(eps))
    R = 1.0 / L
    pts = xi.points
    for i in range(len(xi)):
        for j in range(i + 1, len(xi)):
            if np.hypot(*(pts[i] - pts[j])) < 2.0 * R:
                raise DisjointnessError(
                    f"balls around vortices {i}, {j} overlap (radius {R:.4f})")
    if window is not None and len(xi):
        dists = window_boundary_distance(grid, window, pts)
        if np.any(dists < R):
            raise DisjointnessError("vortex ball extends outside the window")
    X, Y = grid.mesh()
    vx = np.zeros((grid.nx, grid.ny))
    vy = np.zeros((grid.nx, grid.ny))
    for i in range(len(xi)):
        dxp = X - pts[i, 0]
        dyp = Y - pts[i, 1]
        r = np.hypot(dxp, dyp)
        ball = r < R
        s2 = np.maximum(r_xi, r) ** 2
        vx[ball] += (xi.degrees[i] * (-dyp) / s2)[ball]
        vy[ball] += (xi.degrees[i] * dxp / s2)[ball]
    return VectorField2D(grid, vx, vy)


def _local_curl(vf: VectorField2D):
    # centered differences without any periodicity/decay assumption:
    # jstar is discontinuous at ball seams, spectral curl would ring
    dvy_dx = np.gradient(vf.vy, vf.grid.dx, axis=0)
    dvx_dy = np.gradient(vf.vx, vf.grid.dy, axis=1)
    return dvy_dx - dvx_dy


@dataclass
class JstarDefect:
    value: float
    w11_surrogate: float
    mask_flagged: bool


def jstar_defect(v: ComplexField2D, eta, xi: VortexSet, r_xi, eps,
                 window=None):
    """Across-the-core defect against the reference current:

    value = E_weighted(|v|) + (1/2) int eta^2 |j(v)/|v| - j*|^2 with a
    2 eps core disk around each vortex excluded; the companion number is
    the matched point-mass distance between the Jacobian clusters of v
    and the curl clusters of j*. mask_flagged reports any vortex ball
    losing over 10% of its area to the exclusions.
    """
    grid = v.grid
    eta = np.asarray(eta, dtype=np.float64)
    jstar = reference_field_jstar(xi, r_xi, eps, grid, window)
    modulus = np.abs(v.values)
    mod_field = ComplexField2D(grid, modulus.astype(np.complex128))
    e_mod = fields.energy_weighted(mod_field, eta, eps, mask=window)

    j = fields.current(v)
    ok = modulus > 1e-8
    jx = np.where(ok, j.vx / np.where(ok, modulus, 1.0), 0.0)
    jy = np.where(ok, j.vy / np.where(ok, modulus, 1.0), 0.0)

    X, Y = grid.mesh()
    core = np.zeros((grid.nx, grid.ny), dtype=bool)
    for i in range(len(xi)):
        core |= np.hypot(X - xi.points[i, 0], Y - xi.points[i, 1]) < 2.0 * eps
    keep = ok & ~core
    if window is not None:
        keep &= window
    integrand = eta**2 * ((jx - jstar.vx) ** 2 + (jy - jstar.vy) ** 2)
    value = e_mod + 0.5 * fields.integrate(integrand, grid, keep)

    mask_flagged = False
    R = 1.0 / abs(np.log(eps))
    for i in range(len(xi)):
        ball = np.hypot(X - xi.points[i, 0], Y - xi.points[i, 1]) < R
        nball = int(np.sum(ball))
        if nball and np.sum(ball & ~keep) > 0.10 * nball:
            mask_flagged = True

    # point-mass surrogate: Jacobian clusters of v vs curl clusters of j*
    detected = detect_from_jacobian(fields.jacobian(v), grid, window)
    curl = _local_curl(jstar)
    pts, degs = [], []
    for i in range(len(xi)):
        r = np.hypot(X - xi.points[i, 0], Y - xi.points[i, 1])
        inner = (r < R - 2.0 * grid.dx)
        w = np.abs(curl[inner])
        if np.sum(w) > 0:
            pts.append((float(np.sum(w * X[inner]) / np.sum(w)),
                        float(np.sum(w * Y[inner]) / np.sum(w))))
            degs.append(int(xi.degrees[i]))
    curls = VortexSet(np.array(pts).reshape(len(pts), 2),
                      np.array(degs, dtype=np.int64))
    if len(detected) == len(curls) and len(curls) > 0:
        surrogate = np.pi * w11_point_masses(curls, detected).value
    elif len(curls) == 0 and len(detected) == 0:
        surrogate = 0.0
    else:
        surrogate = np.inf
    return JstarDefect(float(value), float(surrogate), mask_flagged)


@dataclass
class DiscrepancyReport:
    r_a: float
    sigma: float
    g_of_ra: float
    r_xi: float
    matched: bool
    permutation: tuple


def build_discrepancy_report(v: ComplexField2D, eta, reference: VortexSet,
                             eps, C1=1.0, window=None):
    """Assemble the per-frame discrepancy numbers from one view field."""
    ra = discrepancy_ra(fields.jacobian(v), v.grid, reference, window)
    sigma = sigma_excess(v, eta, reference, eps, window)
    if np.isfinite(ra.value):
        g = g_func(ra.value, eps)
        rxi = r_xi_bound(max(sigma, 0.0), ra.value, C1, eps)
    else:
        g = np.inf
        rxi = np.inf
    return DiscrepancyReport(ra.value, sigma, g, rxi, ra.matched,
                             ra.permutation)
