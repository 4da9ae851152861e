"""
Cloud-to-cloud map error: distance from every estimated map point to the
nearest ground-truth map point.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.typing as npt
from scipy.spatial import cKDTree

from burrow.geometry.se3 import as_cloud
from burrow.utils.exceptions import EvaluationError

POINT_ERRORS_HEADER = "x,y,z,distance"


@dataclass(frozen=True)
class MapError:
    points: npt.NDArray[np.float64]
    distances: npt.NDArray[np.float64]
    histogram: npt.NDArray[np.int64]
    bin_edges: npt.NDArray[np.float64]

    @property
    def mean(self) -> float:
        return float(self.distances.mean())

    @property
    def max(self) -> float:
        return float(self.distances.max())

    @property
    def median(self) -> float:
        return float(np.median(self.distances))


def map_error(
    estimated: npt.ArrayLike, ground_truth: npt.ArrayLike, bins: int = 20
) -> MapError:
    """
    Raises:
        EvaluationError: if either cloud is empty.
    """
    est, gt = as_cloud(estimated), as_cloud(ground_truth)
    if not len(est) or not len(gt):
        raise EvaluationError(
            f"map error needs two non-empty clouds, got {len(est)} and {len(gt)} points"
        )
    distances, _ = cKDTree(gt).query(est, k=1)
    distances = np.asarray(distances, dtype=np.float64)
    histogram, edges = np.histogram(distances, bins=bins)
    return MapError(est, distances, histogram.astype(np.int64), edges)


def write_point_errors(path: Path, error: MapError) -> None:
    """Per-point errors as x,y,z,distance, for coloring the map elsewhere."""
    path.parent.mkdir(parents=True, exist_ok=True)
    table = np.column_stack([error.points, error.distances])
    np.savetxt(
        path, table, delimiter=",", header=POINT_ERRORS_HEADER, comments="", fmt="%.6g"
    )
