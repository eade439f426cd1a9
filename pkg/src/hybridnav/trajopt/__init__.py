from .bspline import BSplineTrajectory, basis_matrix, classify_points, deboor, fit_bspline
from .costs import (
    CostReport,
    cost_collision,
    cost_curvature,
    cost_feasibility,
    cost_smoothness,
    curvatures,
    feasibility_terms,
)
from .optimizer import OptimizeInfo, TrajoptParams, free_mask, objective, optimize

__all__ = [
    "BSplineTrajectory",
    "CostReport",
    "OptimizeInfo",
    "TrajoptParams",
    "basis_matrix",
    "classify_points",
    "cost_collision",
    "cost_curvature",
    "cost_feasibility",
    "cost_smoothness",
    "curvatures",
    "deboor",
    "feasibility_terms",
    "fit_bspline",
    "free_mask",
    "objective",
    "optimize",
]
