from burrow.backend.export import read_trajectory, write_trajectory
from burrow.backend.gnc import GncParams, optimize_gnc
from burrow.backend.icm import IcmParams, IcmPartition, UncertainPose, icm_filter
from burrow.backend.lm import OptimizationResult, optimize_lm
from burrow.backend.mapping import MapAssembly, assemble_map
from burrow.backend.residuals import edge_residual, total_cost
from burrow.backend.robust import optimize_graph

__all__ = [
    "GncParams",
    "IcmParams",
    "IcmPartition",
    "MapAssembly",
    "OptimizationResult",
    "UncertainPose",
    "assemble_map",
    "edge_residual",
    "icm_filter",
    "optimize_gnc",
    "optimize_graph",
    "optimize_lm",
    "read_trajectory",
    "total_cost",
    "write_trajectory",
]
