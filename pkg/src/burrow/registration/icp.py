"""
Point-to-plane ICP refinement.
"""

import numpy as np
import numpy.typing as npt
from scipy.spatial import cKDTree

from burrow.geometry.lie import adjoint
from burrow.geometry.se3 import Pose6, as_cloud, se3_compose, se3_exp
from burrow.registration.normals import estimate_normals
from burrow.registration.types import AlignmentParams, RegistrationResult

MIN_POINTS = 50
MIN_NORMAL_NEIGHBORS = 5
UPDATE_TOLERANCE = 1e-6


def point_to_plane_system(
    points: npt.NDArray[np.float64], normals: npt.NDArray[np.float64]
) -> npt.NDArray[np.float64]:
    """
    Jacobian rows [(p x n)^T, n^T] of point-to-plane residuals under a left
    perturbation (rotation first).
    """
    return np.hstack([np.cross(points, normals), normals])


def _right_information(
    jacobian: npt.NDArray[np.float64], transform: Pose6
) -> npt.NDArray[np.float64]:
    # left perturbation d_l = Ad(T) d_r
    ad = adjoint(transform.rotation_matrix, transform.t)
    info = ad.T @ (jacobian.T @ jacobian) @ ad
    return 0.5 * (info + info.T)


def icp_point_to_plane(
    source: npt.ArrayLike,
    target: npt.ArrayLike,
    init: Pose6 | None = None,
    params: AlignmentParams | None = None,
) -> RegistrationResult:
    """
    Refine `init` (source -> target) by Gauss-Newton on point-to-plane residuals.

    Target points with fewer than `MIN_NORMAL_NEIGHBORS` other points within
    `params.feature_radius` get no normal and never take part in a
    correspondence. Correspondences are re-established every iteration within
    `params.correspondence_distance`. Iteration stops when the update norm drops
    below 1e-6 or after `icp_max_iterations`. `fitness_error` is the mean
    nearest-neighbour distance of all transformed source points to the target;
    the transform with the lowest fitness seen is returned, so it never exceeds
    the fitness at `init`.
    """
    params = params or AlignmentParams()
    transform = init or Pose6.identity()
    src = as_cloud(source)
    tgt = as_cloud(target)
    if len(src) < MIN_POINTS or len(tgt) < MIN_POINTS:
        return RegistrationResult.failed(
            f"too few points ({len(src)} source, {len(tgt)} target)", transform
        )

    tree = cKDTree(tgt)
    normals, valid = estimate_normals(tgt, params.normal_neighbors, tree=tree)
    # the count includes the point itself
    support = tree.query_ball_point(tgt, params.feature_radius, return_length=True)
    valid &= support > MIN_NORMAL_NEIGHBORS
    if not valid.any():
        return RegistrationResult.failed("target normals not estimable", transform)

    best: tuple[float, Pose6, int] | None = None
    iterations = 0
    for iterations in range(1, params.icp_max_iterations + 1):
        moved = transform.transform_points(src)
        distances, idx = tree.query(moved)
        fitness = float(distances.mean())
        mask = (distances <= params.correspondence_distance) & valid[idx]
        inliers = int(mask.sum())
        if best is None or fitness < best[0]:
            best = (fitness, transform, inliers)
        if inliers < params.min_inliers:
            break

        p, n = moved[mask], normals[idx[mask]]
        residual = np.einsum("ni,ni->n", p - tgt[idx[mask]], n)
        jacobian = point_to_plane_system(p, n)
        hessian = jacobian.T @ jacobian
        gradient = jacobian.T @ residual
        # tiny ridge keeps flat directions (tunnel axis) from blowing up
        ridge = 1e-9 * max(float(np.trace(hessian)), 1.0) * np.eye(6)
        delta = -np.linalg.solve(hessian + ridge, gradient)
        transform = se3_compose(se3_exp(delta), transform)
        if float(np.linalg.norm(delta)) < UPDATE_TOLERANCE:
            break

    # score the final update too
    moved = transform.transform_points(src)
    distances, idx = tree.query(moved)
    fitness = float(distances.mean())
    mask = (distances <= params.correspondence_distance) & valid[idx]
    if best is None or fitness < best[0]:
        best = (fitness, transform, int(mask.sum()))

    fitness, transform, inliers = best
    if inliers < params.min_inliers:
        return RegistrationResult(
            transform,
            fitness,
            inliers,
            failure=f"only {inliers} correspondences (need {params.min_inliers})",
            iterations=iterations,
        )

    moved = transform.transform_points(src)
    distances, idx = tree.query(moved)
    mask = (distances <= params.correspondence_distance) & valid[idx]
    jacobian = point_to_plane_system(moved[mask], normals[idx[mask]])
    return RegistrationResult(
        transform,
        fitness,
        inliers,
        information=_right_information(jacobian, transform),
        iterations=iterations,
    )
