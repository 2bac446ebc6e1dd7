"""Numerical laboratory for phase-transition critical points on model surfaces.

Builds sharp-interface critical points of the scaled Allen-Cahn energy on a
flat torus, the round sphere (axisymmetric) and the flat unit disc, and checks
the quantitative predictions of the underlying reduction: profile decay,
spectral gaps, energy and multiplier expansions, and nodal-set convergence to
minimal or constant-curvature interfaces.
"""

__version__ = "0.1.0"
