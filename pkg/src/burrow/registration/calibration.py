"""
Gate calibration: a robot at the course entrance sees three fiducial plates and
recovers its pose in the shared world frame.
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np
import numpy.typing as npt
from scipy.spatial.transform import Rotation

from burrow.geometry.se3 import Pose6, as_cloud
from burrow.registration.clustering import euclidean_cluster
from burrow.utils.exceptions import (
    AmbiguousCorrespondenceError,
    DegenerateTriangleError,
    RegistrationError,
)

MIN_TRIANGLE_AREA = 1e-6
SIDE_MATCH_TOLERANCE = 0.01


@dataclass(frozen=True)
class GateCalibration:
    transform: Pose6  # observed frame -> fiducial (world) frame
    residual_rms: float


def _triangle(points: npt.ArrayLike, name: str) -> npt.NDArray[np.float64]:
    tri = as_cloud(points)
    if tri.shape != (3, 3):
        raise DegenerateTriangleError(f"{name} needs exactly 3 points, got {len(tri)}")
    area = 0.5 * float(np.linalg.norm(np.cross(tri[1] - tri[0], tri[2] - tri[0])))
    if area <= MIN_TRIANGLE_AREA:
        raise DegenerateTriangleError(f"{name} triangle is collinear (area {area:.3g})")
    return tri


def _opposite_sides(tri: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    # side i is the one not touching vertex i
    return np.array(
        [
            np.linalg.norm(tri[1] - tri[2]),
            np.linalg.norm(tri[0] - tri[2]),
            np.linalg.norm(tri[0] - tri[1]),
        ]
    )


def _vertex_order(tri: npt.NDArray[np.float64], name: str) -> npt.NDArray[np.intp]:
    sides = _opposite_sides(tri)
    for a, b in combinations(range(3), 2):
        if abs(sides[a] - sides[b]) < SIDE_MATCH_TOLERANCE:
            raise AmbiguousCorrespondenceError(
                f"{name} triangle has two sides within {SIDE_MATCH_TOLERANCE} m"
            )
    return np.argsort(sides)


def align_three_points(
    observed: npt.ArrayLike, known: npt.ArrayLike
) -> GateCalibration:
    """
    Closed-form rigid transform taking the observed marker triplet onto the
    known one. Vertices are matched through the lengths of their opposite sides.

    Raises:
        DegenerateTriangleError: if either triplet is collinear.
        AmbiguousCorrespondenceError: if side lengths do not identify vertices.
    """
    obs = _triangle(observed, "observed")
    ref = _triangle(known, "known")
    obs = obs[_vertex_order(obs, "observed")]
    ref = ref[_vertex_order(ref, "known")]

    obs_mean, ref_mean = obs.mean(axis=0), ref.mean(axis=0)
    rotation, _ = Rotation.align_vectors(ref - ref_mean, obs - obs_mean)
    matrix = rotation.as_matrix()
    translation = ref_mean - matrix @ obs_mean

    transform = Pose6.from_rt(matrix, translation)
    residual = transform.transform_points(obs) - ref
    rms = float(np.sqrt(np.mean(np.sum(residual**2, axis=1))))
    return GateCalibration(transform, rms)


def calibrate_from_scan(
    cloud: npt.ArrayLike,
    known: npt.ArrayLike,
    tolerance: float = 0.2,
    min_size: int = 5,
) -> GateCalibration:
    """
    Cluster a reflector-only scan, take the three largest clusters' centroids
    and align them to the surveyed marker positions.

    Raises:
        RegistrationError: if fewer than three clusters are found.
    """
    clusters = euclidean_cluster(cloud, tolerance, min_size)
    if len(clusters) < 3:
        raise RegistrationError(f"expected 3 fiducial clusters, found {len(clusters)}")
    centroids = np.array([c.mean(axis=0) for c in clusters[:3]])
    return align_three_points(centroids, known)
