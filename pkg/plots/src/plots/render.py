"""The four figure kinds.

All rendering is batch-mode (Agg backend, forced at import: this package
is non-interactive by design), read-only over its inputs, and
deterministic: the same spec and the same input bytes produce the same
output bytes, so re-rendering is idempotent.

``render(spec)`` dispatches on ``spec.kind`` and returns a small dict of
the numbers that ended up on the figure (fit constants, annotations),
which is what the tests assert against.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from plots.csvio import read_table  # noqa: E402
from plots.figspec import KINDS  # noqa: E402

_SAVE_METADATA = {"Software": "plots 0.1"}


def _style(spec, key, default, convert):
    raw = spec.style.get(key)
    if raw is None:
        return default
    return convert(raw)


def _new_axes(spec, figsize):
    fig, ax = plt.subplots(figsize=figsize)
    title = spec.style.get("title")
    if title:
        ax.set_title(title)
    return fig, ax


def _save(fig, spec):
    spec.out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(spec.out, dpi=_style(spec, "dpi", 120, int),
                metadata=_SAVE_METADATA)
    plt.close(fig)


def _paths_by_index(table):
    """Group (tau, x, y) rows by the vortex index column, tau-sorted."""
    out = {}
    it = table.columns.index("i")
    tt = table.columns.index("tau")
    xt = table.columns.index("x")
    yt = table.columns.index("y")
    for row in table.rows:
        out.setdefault(int(row[it]), []).append(
            (row[tt], row[xt], row[yt]))
    for path in out.values():
        path.sort()
    return out


def _draw_density(ax, density, levels):
    n = 256
    e = density["extent"]
    xs = np.linspace(-e, e, n)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    r = np.hypot(X, Y) / density["radius"]
    rho = density["lambda0"] * np.maximum(1.0 - r ** density["power"], 0.0)
    vals = np.linspace(0.0, density["lambda0"], levels + 2)[1:-1]
    ax.contour(X, Y, rho, levels=vals, colors="0.75", linewidths=0.6)
    edge = plt.Circle((0.0, 0.0), density["radius"], fill=False,
                      color="0.55", linewidth=0.9)
    ax.add_patch(edge)
    ax.set_xlim(-e, e)
    ax.set_ylim(-e, e)


def _render_trajectory_overlay(spec):
    det = read_table(spec.inputs["vortices"], "vortices")
    pred = read_table(spec.inputs["ode"], "ode")
    fig, ax = _new_axes(spec, (5.5, 5.5))
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")

    if spec.density is not None:
        _draw_density(ax, spec.density, _style(spec, "levels", 8, int))

    dpaths = _paths_by_index(det)
    ppaths = _paths_by_index(pred)
    cycle = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for n, (idx, path) in enumerate(sorted(dpaths.items())):
        arr = np.asarray(path)
        ax.plot(arr[:, 1], arr[:, 2], "-", color=cycle[n % len(cycle)],
                linewidth=1.3, marker=".", markersize=3,
                label="detected" if n == 0 else None)
    for n, (idx, path) in enumerate(sorted(ppaths.items())):
        arr = np.asarray(path)
        ax.plot(arr[:, 1], arr[:, 2], "--", color=cycle[n % len(cycle)],
                linewidth=1.1, label="predicted" if n == 0 else None)
    if dpaths or ppaths:
        ax.legend(loc="upper right", fontsize=8)
    _save(fig, spec)
    return {"n_detected_paths": len(dpaths), "n_predicted_paths": len(ppaths)}


def _envelope_fit(taus, values):
    """Smallest c with value <= value0 + c * (e^(tau - tau0) - 1)."""
    t0, y0 = taus[0], values[0]
    c = 0.0
    for t, y in zip(taus[1:], values[1:]):
        growth = math.expm1(t - t0)
        if growth > 1e-9:
            c = max(c, (y - y0) / growth)
    return max(c, 0.0), t0, y0


def _render_envelope(spec):
    diag = read_table(spec.inputs["diagnostics"], "diagnostics")
    taus = diag.column("tau")
    ras = diag.column("r_a")
    matched = diag.column("matched")
    good = [(t, r) for t, r, m in zip(taus, ras, matched)
            if m == 1.0 and isinstance(r, float) and math.isfinite(r)]
    bad = [(t, r) for t, r, m in zip(taus, ras, matched)
           if not (m == 1.0) and isinstance(r, float) and math.isfinite(r)]
    if not good:
        raise ValueError(f"{spec.inputs['diagnostics']}: no matched frames "
                         "to fit an envelope through")
    gt = [t for t, _ in good]
    gr = [r for _, r in good]
    c, t0, y0 = _envelope_fit(gt, gr)

    fig, ax = _new_axes(spec, (6.0, 4.2))
    ax.plot(gt, gr, "o", color="C0", markersize=4,
            label="aggregate position error")
    if bad:
        ax.plot([t for t, _ in bad], [r for _, r in bad], "o",
                markerfacecolor="none", color="C3", markersize=4,
                label="excluded frames")
    ts = np.linspace(t0, max(gt), 200)
    ax.plot(ts, y0 + c * np.expm1(ts - t0), "--", color="C1",
            label=f"fitted envelope, c = {c:.4g}")
    ax.set_xlabel("rescaled time")
    ax.set_ylabel("r_a")
    ax.legend(fontsize=8)
    _save(fig, spec)
    return {"envelope_constant": c, "n_frames": len(good),
            "n_excluded": len(bad)}


def _render_tf_slope(spec):
    tab = read_table(spec.inputs["table"], "tf_convergence")
    eps = tab.column("eps")
    err = tab.column("l2_error")
    if len(eps) < 2:
        raise ValueError(f"{spec.inputs['table']}: need at least two rows "
                         "for a slope")
    slope = float(np.polyfit(np.log(eps), np.log(err), 1)[0])

    fig, ax = _new_axes(spec, (6.0, 4.2))
    ax.loglog(eps, err, "o", color="C0", label="measured")
    es = np.array([min(eps), max(eps)])
    ref = err[int(np.argmin(eps))] * (es / min(eps)) ** slope
    ax.loglog(es, ref, "--", color="C1", label=f"slope = {slope:.3f}")
    ax.set_xlabel("eps")
    ax.set_ylabel("L2 distance of the squared profile from the limit density")
    ax.legend(fontsize=8)
    ax.annotate(f"slope = {slope:.3f}", xy=(0.05, 0.9),
                xycoords="axes fraction")
    _save(fig, spec)
    return {"slope": slope, "n_points": len(eps)}


def _render_energy_drift(spec):
    diag = read_table(spec.inputs["diagnostics"], "diagnostics")
    taus = np.asarray(diag.column("tau"), dtype=float)
    E = np.asarray(diag.column("E_gpv"), dtype=float)
    drift = np.abs(E - E[0]) / abs(E[0])
    shown = np.where(drift > 0, drift, np.nan)

    fig, ax = _new_axes(spec, (6.0, 4.2))
    ax.semilogy(taus, shown, "o-", color="C0", markersize=3)
    ax.set_xlabel("rescaled time")
    ax.set_ylabel("relative energy drift")
    peak = float(np.nanmax(drift)) if len(drift) else 0.0
    ax.annotate(f"max drift = {peak:.3g}", xy=(0.05, 0.9),
                xycoords="axes fraction")
    _save(fig, spec)
    return {"max_drift": peak, "n_frames": int(len(taus))}


_RENDERERS = {
    "trajectory-overlay": _render_trajectory_overlay,
    "envelope": _render_envelope,
    "tf-slope": _render_tf_slope,
    "energy-drift": _render_energy_drift,
}

assert set(_RENDERERS) == set(KINDS)


def render(spec):
    """Render one figure; returns the dict of plotted summary numbers."""
    return _RENDERERS[spec.kind](spec)
