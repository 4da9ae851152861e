import numpy as np
import numpy.typing as npt

from burrow.geometry.se3 import as_cloud
from burrow.registration.icp import point_to_plane_system
from burrow.registration.normals import estimate_normals

MIN_POINTS = 50


def observability_hessian(
    cloud: npt.ArrayLike, k: int = 10
) -> npt.NDArray[np.float64] | None:
    """
    Point-to-plane Hessian of a cloud against itself at identity, about its
    centroid, with the rotation columns divided by the RMS radius and the whole
    matrix by the point count. None when normals are degenerate.
    """
    points = as_cloud(cloud)
    if len(points) < MIN_POINTS:
        return None
    normals, valid = estimate_normals(points, k)
    if valid.sum() < MIN_POINTS:
        return None
    centered = points[valid] - points[valid].mean(axis=0)
    radius = float(np.sqrt(np.mean(np.sum(centered**2, axis=1))))
    if radius <= 0:
        return None
    jacobian = point_to_plane_system(centered, normals[valid])
    jacobian[:, :3] /= radius
    return jacobian.T @ jacobian / len(jacobian)


def observability_score(cloud: npt.ArrayLike, k: int = 10) -> float:
    """
    Conditioning of the normalized registration Hessian: smallest over largest
    eigenvalue, in [0, 1]. Planes and featureless tunnels score near 0; clouds
    that pin down all six degrees of freedom score higher. Degenerate input
    scores 0.
    """
    hessian = observability_hessian(cloud, k)
    if hessian is None:
        return 0.0
    eigvals = np.linalg.eigvalsh(hessian)
    if eigvals[-1] <= 0:
        return 0.0
    return float(np.clip(eigvals[0] / eigvals[-1], 0.0, 1.0))
