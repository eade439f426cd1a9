"""Planning and control for a hybrid rolling and flying robot."""

from .common import GRAVITY, Mode, wrap_angle
from .envmap import Esdf, MapSpec, ObstacleSet, OccupancyGrid, compute_esdf, esdf_query, grid_from_obstacles
from .planner import PlanResult, plan
from .search import KinoState, SearchParams, SearchResult, SearchStatus, kinodynamic_search

__version__ = "0.1.0"

__all__ = [
    "GRAVITY", "Mode", "wrap_angle", "Esdf", "MapSpec", "ObstacleSet", "OccupancyGrid", "compute_esdf",
    "esdf_query", "grid_from_obstacles", "PlanResult", "plan", "KinoState", "SearchParams", "SearchResult",
    "SearchStatus", "kinodynamic_search",
]
