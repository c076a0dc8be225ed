"""Partial-Laplacian dynamic compressive sensing (PLAY-CS / PLAY+-CS) and baselines."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    DynamicsModel,
    GaussianBelief,
    LsmPrior,
    MeasurementModel,
    SupportSet,
    estimate_support,
    kf_update,
    predict,
)
from .solver import MapProblem, SolverOptions, SolverReport, solve_map  # noqa: E402
from .trackers import (  # noqa: E402
    TrackerKind,
    TrackerParams,
    TrackerState,
    init_state,
    run_sequence,
)
from .estimators import SparseTracker  # noqa: E402

__all__ = [
    "DynamicsModel", "GaussianBelief", "LsmPrior", "MeasurementModel", "SupportSet",
    "estimate_support", "kf_update", "predict", "MapProblem", "SolverOptions",
    "SolverReport", "solve_map", "TrackerKind", "TrackerParams", "TrackerState",
    "init_state", "run_sequence", "SparseTracker",
]
