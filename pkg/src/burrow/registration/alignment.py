"""
Sample-consensus initial alignment on FPFH correspondences.
"""

import numpy as np
import numpy.typing as npt
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from burrow.frontend.pointcloud import adaptive_voxelize
from burrow.geometry.se3 import Pose6, as_cloud
from burrow.registration.features import compute_fpfh
from burrow.registration.normals import estimate_normals
from burrow.registration.types import AlignmentParams, RegistrationResult

FloatArray = npt.NDArray[np.float64]

MIN_POINTS = 200
HUBER_DELTA = 1.0
SAMPLE_ATTEMPTS = 20


def bounded_huber(distances: FloatArray) -> FloatArray:
    """Huber penalty with a 1 m knee, capped at 1 per correspondence."""
    quadratic = 0.5 * distances**2
    linear = HUBER_DELTA * (distances - 0.5 * HUBER_DELTA)
    return np.minimum(np.where(distances <= HUBER_DELTA, quadratic, linear), 1.0)


def _kabsch(src: FloatArray, dst: FloatArray) -> tuple[FloatArray, FloatArray]:
    src_mean, dst_mean = src.mean(axis=0), dst.mean(axis=0)
    rotation, _ = Rotation.align_vectors(dst - dst_mean, src - src_mean)
    matrix = rotation.as_matrix()
    return matrix, dst_mean - matrix @ src_mean


def _keypoints(
    cloud: FloatArray, params: AlignmentParams
) -> tuple[FloatArray, FloatArray, npt.NDArray[np.bool_]]:
    keypoints = adaptive_voxelize(cloud, params.keypoint_count)
    normals, valid = estimate_normals(cloud, params.normal_neighbors, query=keypoints)
    return keypoints, normals, valid


def _sample(
    rng: np.random.Generator, points: FloatArray, min_distance: float
) -> npt.NDArray[np.intp] | None:
    for _ in range(SAMPLE_ATTEMPTS):
        idx = rng.choice(len(points), size=3, replace=False)
        tri = points[idx]
        gaps = np.linalg.norm(tri[[0, 0, 1]] - tri[[1, 2, 2]], axis=1)
        if gaps.min() >= min_distance:
            return idx
    return None


def _collinear(tri: FloatArray) -> bool:
    return float(np.linalg.norm(np.cross(tri[1] - tri[0], tri[2] - tri[0]))) < 1e-6


def initial_alignment(
    source: npt.ArrayLike,
    target: npt.ArrayLike,
    params: AlignmentParams | None = None,
) -> RegistrationResult:
    """
    Coarse source -> target alignment by sample consensus.

    Keypoints are the clouds voxelized to about `keypoint_count` points with
    FPFH descriptors. Each iteration draws three source keypoints at least
    `min_sample_distance` apart, pairs each with one of its
    `feature_neighbors` nearest target descriptors, fits a rigid transform and
    scores it by the bounded-Huber cumulative error over a fixed evaluation
    subset. The best transform fails if its error exceeds either threshold or
    fewer than `min_inliers` keypoints land within `correspondence_distance`.
    """
    params = params or AlignmentParams()
    src = as_cloud(source)
    tgt = as_cloud(target)
    if len(src) < MIN_POINTS or len(tgt) < MIN_POINTS:
        return RegistrationResult.failed(
            f"too few points ({len(src)} source, {len(tgt)} target)"
        )

    src_kp, src_normals, src_valid = _keypoints(src, params)
    tgt_kp, tgt_normals, tgt_valid = _keypoints(tgt, params)
    if src_valid.sum() < 3 or tgt_valid.sum() < 3:
        return RegistrationResult.failed("normals degenerate, no descriptors")

    src_desc = compute_fpfh(src_kp, src_normals, params.feature_radius, src_valid)
    tgt_desc = compute_fpfh(tgt_kp, tgt_normals, params.feature_radius, tgt_valid)
    src_ok = src_valid & (src_desc.sum(axis=1) > 0)
    tgt_ok = tgt_valid & (tgt_desc.sum(axis=1) > 0)
    if src_ok.sum() < 3 or tgt_ok.sum() < 3:
        return RegistrationResult.failed("no keypoint has a descriptor")

    src_kp, src_desc = src_kp[src_ok], src_desc[src_ok]
    tgt_kp, tgt_desc = tgt_kp[tgt_ok], tgt_desc[tgt_ok]
    k = min(params.feature_neighbors, len(tgt_kp))
    _, matches = cKDTree(tgt_desc).query(src_desc, k=k)
    matches = np.asarray(matches).reshape(len(src_kp), k)

    rng = np.random.default_rng(params.seed)
    eval_count = min(params.sac_error_samples, len(src_kp))
    eval_points = src_kp[rng.permutation(len(src_kp))[:eval_count]]
    tgt_tree = cKDTree(tgt_kp)

    best_error = np.inf
    best: tuple[FloatArray, FloatArray] | None = None
    iterations = 0
    for _ in range(params.sac_max_iterations):
        idx = _sample(rng, src_kp, params.min_sample_distance)
        if idx is None:
            break
        iterations += 1
        picks = matches[idx, rng.integers(0, k, size=3)]
        if _collinear(src_kp[idx]) or _collinear(tgt_kp[picks]):
            continue
        rotation, translation = _kabsch(src_kp[idx], tgt_kp[picks])
        distances, _ = tgt_tree.query(eval_points @ rotation.T + translation)
        error = float(bounded_huber(distances).sum())
        if error < best_error:
            best_error, best = error, (rotation, translation)

    if best is None:
        return RegistrationResult.failed("no valid sample triplet")

    transform = Pose6.from_rt(*best)
    distances, _ = tgt_tree.query(transform.transform_points(src_kp))
    inliers = int((distances <= params.correspondence_distance).sum())
    normalized = best_error / eval_count

    failure = None
    if best_error > params.sac_error_threshold:
        failure = f"cumulative error {best_error:.2f} > {params.sac_error_threshold}"
    elif normalized > params.sac_normalized_threshold:
        failure = (
            f"normalized error {normalized:.3f} > {params.sac_normalized_threshold}"
        )
    elif inliers < params.min_inliers:
        failure = f"only {inliers} inliers (need {params.min_inliers})"
    return RegistrationResult(
        transform,
        best_error,
        inliers,
        failure=failure,
        iterations=iterations,
    )
