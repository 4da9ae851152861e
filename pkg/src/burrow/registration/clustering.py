import numpy as np
import numpy.typing as npt
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from burrow.geometry.se3 import as_cloud


def euclidean_cluster(
    cloud: npt.ArrayLike, tolerance: float, min_size: int = 1
) -> list[npt.NDArray[np.float64]]:
    """
    Split a cloud into clusters of points chained by steps of at most `tolerance`.

    Clusters smaller than `min_size` are dropped. Largest cluster first; ties
    keep the order of each cluster's first point.
    """
    if tolerance <= 0:
        raise ValueError(f"tolerance must be positive, got {tolerance}")
    points = as_cloud(cloud)
    if len(points) == 0:
        return []
    pairs = cKDTree(points).query_pairs(tolerance, output_type="ndarray")
    adjacency = coo_matrix(
        (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])),
        shape=(len(points), len(points)),
    )
    count, labels = connected_components(adjacency, directed=False)
    clusters = [np.flatnonzero(labels == c) for c in range(count)]
    clusters = [c for c in clusters if len(c) >= min_size]
    clusters.sort(key=lambda c: (-len(c), c[0]))
    return [points[c] for c in clusters]
