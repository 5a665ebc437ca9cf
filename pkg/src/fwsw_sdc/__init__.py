"""Fast-wave slow-wave spectral deferred corrections (fwsw-SDC).

Collocation quadrature, the IMEX sweep engine, linear analysis tools
(error propagation, stability, dispersion) and the benchmark problems.
"""
from .linalg_core import GmresConfig, LinearOperator, gmres_solve, mat_inverse, spectral_radius
from .quadrature import NodeFamily, QuadratureRule, make_rule
from .sdc_engine import (LinearSplitSystem, SdcConfig, SplitSystem, UpdateMode, integrate,
                         solve_collocation, step, sweep)

__all__ = [
    "GmresConfig", "LinearOperator", "gmres_solve", "mat_inverse", "spectral_radius",
    "NodeFamily", "QuadratureRule", "make_rule",
    "LinearSplitSystem", "SdcConfig", "SplitSystem", "UpdateMode", "integrate",
    "solve_collocation", "step", "sweep",
]

__version__ = "0.1.0"
