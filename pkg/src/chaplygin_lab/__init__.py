"""Reduction, invariant-measure analysis and reconstruction for mechanical
systems whose nonholonomic constraints are the horizontal distribution of a
principal connection (generalized Chaplygin systems)."""

from . import autodiff, catalog, dynamics, expressions, geometry, measure, \
    reconstruction, reduction
from .autodiff import Dual, Dual2, SmoothMap
from .dynamics import (FullSystem, IntegratorConfig, State, Trajectory,
                       compare_full_reduced, integrate, integrate_with_jacobian)
from .measure import MeasureReport, Region, measure_verdict
from .reconstruction import GroupModel, HolonomyReport, LiftedTrajectory
from .reduction import ChaplyginSystem, ReducedGeometryAt, reduced_geometry

__version__ = "0.1.0"

__all__ = [
    "autodiff", "catalog", "dynamics", "expressions", "geometry", "measure",
    "reconstruction", "reduction",
    "Dual", "Dual2", "SmoothMap", "ChaplyginSystem", "ReducedGeometryAt",
    "FullSystem", "IntegratorConfig", "State", "Trajectory", "Region",
    "MeasureReport", "GroupModel", "HolonomyReport", "LiftedTrajectory",
    "reduced_geometry", "integrate", "integrate_with_jacobian",
    "compare_full_reduced", "measure_verdict",
    "__version__",
]
