"""Figure specs: one INI file describes one figure.

Grammar (configparser, ``#`` comments), mirroring the pipeline's config
style::

    [figure]
    kind = trajectory-overlay   # | envelope | tf-slope | energy-drift
    out = figs/orbit.png

    [inputs]                    # keys depend on the kind (see KINDS)
    vortices = runs/demo/eps_0.05/vortices.csv
    ode = runs/demo/eps_0.05/ode.csv

    [density]                   # trajectory-overlay only: background
    kind = harmonic             # harmonic | quartic
    lambda0 = 1.0               # central density
    radius = 0.6366             # support radius of the limit density
    extent = 1.0                # plot half-width (default: 1.5 * radius)

    [style]                     # optional, all have defaults
    dpi = 120
    levels = 8
    title = ...

The limit density drawn behind trajectory overlays is the paraboloid
``lambda0 * (1 - (r/radius)^p)+`` with p = 2 (harmonic) or 4 (quartic),
parameterized directly so this package needs nothing from the
simulation code.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path


class SpecError(Exception):
    """Figure spec file is missing, malformed, or inconsistent."""


# figure kind -> required [inputs] keys and the schema each must carry
KINDS = {
    "trajectory-overlay": {"vortices": "vortices", "ode": "ode"},
    "envelope": {"diagnostics": "diagnostics"},
    "tf-slope": {"table": "tf_convergence"},
    "energy-drift": {"diagnostics": "diagnostics"},
}

DENSITY_KINDS = {"harmonic": 2, "quartic": 4}


@dataclass
class FigureSpec:
    kind: str
    out: Path
    inputs: dict            # input-name -> Path
    density: dict | None    # lambda0, radius, power, extent
    style: dict = field(default_factory=dict)


def _parse_density(cp, path):
    if not cp.has_section("density"):
        return None
    sec = cp["density"]
    kind = sec.get("kind", "harmonic").strip()
    if kind not in DENSITY_KINDS:
        raise SpecError(f"{path}: unknown density kind {kind!r} "
                        f"(have {sorted(DENSITY_KINDS)})")
    try:
        lambda0 = sec.getfloat("lambda0", 1.0)
        radius = sec.getfloat("radius")
        extent = sec.getfloat("extent")
    except ValueError as exc:
        raise SpecError(f"{path}: bad [density] value: {exc}")
    if radius is None or radius <= 0:
        raise SpecError(f"{path}: [density] needs a positive radius")
    if extent is None:
        extent = 1.5 * radius
    return {"lambda0": lambda0, "radius": radius,
            "power": DENSITY_KINDS[kind], "extent": extent}


def load_figure_spec(path):
    """Parse and validate one figure spec file; returns a FigureSpec.

    Checks the kind, the presence of every input the kind requires, and
    that each input file exists. Schema headers are checked at render
    time, when the files are actually read.
    """
    path = Path(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    read = cp.read(path)
    if not read:
        raise SpecError(f"cannot read figure spec {path}")
    if not cp.has_section("figure"):
        raise SpecError(f"{path}: missing [figure] section")
    kind = cp["figure"].get("kind", "").strip()
    if kind not in KINDS:
        raise SpecError(f"{path}: unknown figure kind {kind!r} "
                        f"(have {sorted(KINDS)})")
    out = cp["figure"].get("out", "").strip()
    if not out:
        raise SpecError(f"{path}: [figure] needs an out path")

    inputs = {}
    have = cp["inputs"] if cp.has_section("inputs") else {}
    for name in KINDS[kind]:
        raw = have.get(name, "").strip() if have else ""
        if not raw:
            raise SpecError(f"{path}: kind {kind} needs [inputs] {name}")
        p = Path(raw)
        if not p.is_file():
            raise SpecError(f"{path}: input {name} = {p} does not exist")
        inputs[name] = p

    style = dict(cp["style"]) if cp.has_section("style") else {}
    return FigureSpec(kind=kind, out=Path(out), inputs=inputs,
                      density=_parse_density(cp, path), style=style)
