"""
Absolute trajectory error over node keys.

Robots share the gate-calibrated world frame, so no alignment is applied
unless asked for.
"""

from collections import defaultdict
from collections.abc import Mapping

import numpy as np
import numpy.typing as npt

from burrow.geometry.se3 import Pose6
from burrow.graph.model import NodeKey
from burrow.utils.exceptions import EmptyIntersectionError, EvaluationError

Trajectory = Mapping[NodeKey, Pose6]


def matched_positions(
    estimated: Trajectory, ground_truth: Trajectory
) -> tuple[list[NodeKey], npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    """
    Keys present in both trajectories with their (N, 3) positions.

    Raises:
        EmptyIntersectionError: if the trajectories share no key.
    """
    keys = sorted(estimated.keys() & ground_truth.keys())
    if not keys:
        raise EmptyIntersectionError(
            f"no common keys among {len(estimated)} estimated "
            f"and {len(ground_truth)} ground-truth poses"
        )
    est = np.array([estimated[k].translation for k in keys])
    gt = np.array([ground_truth[k].translation for k in keys])
    return keys, est, gt


def align_trajectories(estimated: Trajectory, ground_truth: Trajectory) -> Pose6:
    """
    Least-squares rigid transform (no scale) taking estimated positions onto
    ground truth.

    Raises:
        EmptyIntersectionError: if the trajectories share no key.
        EvaluationError: with fewer than three matched positions.
    """
    _, est, gt = matched_positions(estimated, ground_truth)
    if len(est) < 3:
        raise EvaluationError(f"alignment needs 3 matched poses, got {len(est)}")
    mean_est, mean_gt = est.mean(axis=0), gt.mean(axis=0)
    cov = (gt - mean_gt).T @ (est - mean_est)
    u, _, vt = np.linalg.svd(cov)
    s = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s[2, 2] = -1.0
    rotation = u @ s @ vt
    return Pose6.from_rt(rotation, mean_gt - rotation @ mean_est)


def _aligned(estimated: Trajectory, transform: Pose6) -> dict[NodeKey, Pose6]:
    return {key: transform @ pose for key, pose in estimated.items()}


def position_errors(
    estimated: Trajectory, ground_truth: Trajectory, *, align: bool = False
) -> dict[NodeKey, float]:
    if align:
        estimated = _aligned(estimated, align_trajectories(estimated, ground_truth))
    keys, est, gt = matched_positions(estimated, ground_truth)
    return dict(zip(keys, np.linalg.norm(est - gt, axis=1).tolist(), strict=True))


def ate(
    estimated: Trajectory, ground_truth: Trajectory, *, align: bool = False
) -> float:
    """
    Root mean square of the position error over the keys both trajectories hold.

    Raises:
        EmptyIntersectionError: if the trajectories share no key.
    """
    errors = np.array(
        list(position_errors(estimated, ground_truth, align=align).values())
    )
    return float(np.sqrt(np.mean(errors**2)))


def ate_per_robot(
    estimated: Trajectory, ground_truth: Trajectory, *, align: bool = False
) -> dict[int, float]:
    """ATE of each robot with at least one matched key."""
    per_robot: dict[int, list[float]] = defaultdict(list)
    for key, error in position_errors(estimated, ground_truth, align=align).items():
        per_robot[key.robot_id].append(error)
    return {
        robot: float(np.sqrt(np.mean(np.square(errors))))
        for robot, errors in sorted(per_robot.items())
    }


def traveled_distance(trajectory: Trajectory) -> dict[int, float]:
    """Path length of each robot through its nodes in index order."""
    by_robot: dict[int, list[NodeKey]] = defaultdict(list)
    for key in sorted(trajectory):
        by_robot[key.robot_id].append(key)
    out: dict[int, float] = {}
    for robot, keys in by_robot.items():
        t = np.array([trajectory[k].translation for k in keys])
        out[robot] = float(np.linalg.norm(np.diff(t, axis=0), axis=1).sum())
    return out
