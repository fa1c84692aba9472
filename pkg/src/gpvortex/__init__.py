"""Vortex dynamics in the 2D Gross-Pitaevskii equation.

Core package: grids and fields, ground states, split-step evolution,
vortex detection and point-mass metrics, the limiting point-vortex ODE,
and a batch experiment harness with CSV outputs.
"""

from gpvortex.fields import Grid2D, ComplexField2D, VectorField2D

__all__ = ["Grid2D", "ComplexField2D", "VectorField2D"]
__version__ = "0.1.0"
