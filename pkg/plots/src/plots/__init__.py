"""Figure rendering for the vortex-dynamics pipeline's CSV artifacts.

This package reads only the published CSV files (never the simulation
package's internals or binary formats) and renders deterministic figure
files from small INI figure specs. See ``plots.figspec`` for the spec
grammar and ``plots.render`` for the four figure kinds.
"""

from plots.csvio import SchemaMismatch, read_table
from plots.figspec import FigureSpec, SpecError, load_figure_spec
from plots.render import render

__all__ = [
    "FigureSpec",
    "SchemaMismatch",
    "SpecError",
    "load_figure_spec",
    "read_table",
    "render",
]
