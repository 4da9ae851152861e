from burrow.registration.alignment import initial_alignment
from burrow.registration.calibration import (
    GateCalibration,
    align_three_points,
    calibrate_from_scan,
)
from burrow.registration.clustering import euclidean_cluster
from burrow.registration.icp import icp_point_to_plane
from burrow.registration.observability import observability_score
from burrow.registration.types import AlignmentParams, RegistrationResult

__all__ = [
    "AlignmentParams",
    "GateCalibration",
    "RegistrationResult",
    "align_three_points",
    "calibrate_from_scan",
    "euclidean_cluster",
    "icp_point_to_plane",
    "initial_alignment",
    "observability_score",
]
