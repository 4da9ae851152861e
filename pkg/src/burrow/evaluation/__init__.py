from burrow.evaluation.experiment import (
    CellReport,
    CellSpec,
    ExperimentConfig,
    run_experiment,
    standard_cells,
)
from burrow.evaluation.loops import LoopMetrics, loop_error_samples, loop_metrics
from burrow.evaluation.maps import MapError, map_error
from burrow.evaluation.report import markdown_report, summarize, write_report
from burrow.evaluation.trajectory import align_trajectories, ate, ate_per_robot

__all__ = [
    "CellReport",
    "CellSpec",
    "ExperimentConfig",
    "LoopMetrics",
    "MapError",
    "align_trajectories",
    "ate",
    "ate_per_robot",
    "loop_error_samples",
    "loop_metrics",
    "map_error",
    "markdown_report",
    "run_experiment",
    "standard_cells",
    "summarize",
    "write_report",
]
