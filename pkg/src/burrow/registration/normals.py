import numpy as np
import numpy.typing as npt
from scipy.spatial import cKDTree

FloatArray = npt.NDArray[np.float64]


def estimate_normals(
    points: FloatArray,
    k: int = 10,
    query: FloatArray | None = None,
    viewpoint: FloatArray | None = None,
    tree: cKDTree | None = None,
) -> tuple[FloatArray, npt.NDArray[np.bool_]]:
    """
    PCA normals from the `k` nearest neighbours in `points`.

    Normals are estimated at `query` (default: `points` itself) and flipped to
    face `viewpoint` (default: the sensor origin). The mask marks estimates
    whose neighbourhood spans a plane; degenerate ones are zero vectors.
    """
    query = points if query is None else query
    viewpoint = np.zeros(3) if viewpoint is None else viewpoint
    if len(points) < 3 or len(query) == 0:
        return np.zeros((len(query), 3)), np.zeros(len(query), dtype=bool)

    k = min(k, len(points))
    tree = cKDTree(points) if tree is None else tree
    _, idx = tree.query(query, k=k)
    neighbors = points[idx.reshape(len(query), k)]
    centered = neighbors - neighbors.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    eigvals, eigvecs = np.linalg.eigh(cov)
    normals = eigvecs[:, :, 0]

    # the second eigenvalue must be non-negligible for a plane to be defined
    spread = eigvals[:, 2]
    valid = (eigvals[:, 1] > 1e-6 * np.maximum(spread, 1e-12)) & (spread > 1e-12)

    facing = np.einsum("ni,ni->n", normals, viewpoint - query)
    normals = np.where((facing < 0)[:, None], -normals, normals)
    normals[~valid] = 0.0
    return normals, valid
