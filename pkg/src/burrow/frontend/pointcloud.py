"""
Point-cloud filters shared by the front-end and map assembly.
"""

import math
from collections.abc import Sequence

import numpy as np
import numpy.typing as npt

from burrow.geometry.se3 import Pose6, as_cloud
from burrow.utils.exceptions import StreamLengthMismatchError

FloatCloud = npt.NDArray[np.float64]

MIN_LEAF = 0.01
MAX_LEAF = 10.0
MAX_BISECTIONS = 32
COUNT_TOLERANCE = 0.05


def voxel_downsample(cloud: npt.ArrayLike, leaf: float) -> FloatCloud:
    """
    One centroid per occupied voxel of edge `leaf`, grid anchored at the cloud
    minimum. Output is sorted by voxel index, so it is deterministic.
    """
    if leaf <= 0:
        raise ValueError(f"leaf must be positive, got {leaf}")
    points = as_cloud(cloud)
    if len(points) == 0:
        return points
    cells = np.floor((points - points.min(axis=0)) / leaf).astype(np.int64)
    _, inverse, counts = np.unique(
        cells, axis=0, return_inverse=True, return_counts=True
    )
    inverse = inverse.reshape(-1)
    sums = np.zeros((len(counts), 3))
    np.add.at(sums, inverse, points)
    return sums / counts[:, None]


def _occupied(points: FloatCloud, leaf: float) -> int:
    cells = np.floor((points - points.min(axis=0)) / leaf).astype(np.int64)
    return len(np.unique(cells, axis=0))


def adaptive_voxelize(cloud: npt.ArrayLike, target_count: int) -> FloatCloud:
    """
    Voxel-downsample to roughly `target_count` points.

    The leaf size is bisected in log space over [0.01 m, 10 m] for at most 32
    steps; the first leaf whose output lies within 5% of the target is used,
    otherwise the closest one seen. Clouds already at or under the target are
    returned unchanged.
    """
    if target_count < 1:
        raise ValueError(f"target_count must be >= 1, got {target_count}")
    points = as_cloud(cloud)
    if len(points) <= target_count:
        return points

    low, high = math.log(MIN_LEAF), math.log(MAX_LEAF)
    best_leaf, best_gap = MAX_LEAF, math.inf
    for _ in range(MAX_BISECTIONS):
        leaf = math.exp(0.5 * (low + high))
        count = _occupied(points, leaf)
        gap = abs(count - target_count)
        if gap < best_gap:
            best_leaf, best_gap = leaf, gap
        if gap <= COUNT_TOLERANCE * target_count:
            break
        if count > target_count:
            low = math.log(leaf)
        else:
            high = math.log(leaf)
    return voxel_downsample(points, best_leaf)


def merge_clouds(
    clouds: Sequence[npt.ArrayLike], extrinsics: Sequence[Pose6]
) -> FloatCloud:
    """
    Transform each lidar cloud into the body frame and concatenate.

    Raises:
        StreamLengthMismatchError: if the two lists differ in length.
    """
    if len(clouds) != len(extrinsics):
        raise StreamLengthMismatchError(
            f"{len(clouds)} clouds but {len(extrinsics)} extrinsics"
        )
    parts = [
        extrinsic.transform_points(as_cloud(c))
        for c, extrinsic in zip(clouds, extrinsics, strict=True)
    ]
    if not parts:
        return np.zeros((0, 3))
    return np.concatenate(parts, axis=0)
