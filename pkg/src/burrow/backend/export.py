"""
Trajectory CSV: robot,index,tx,ty,tz,qw,qx,qy,qz,inlier_loop_count
"""

from collections.abc import Mapping
from pathlib import Path

import numpy as np

from burrow.geometry.se3 import Pose6
from burrow.graph.model import NodeKey
from burrow.utils.exceptions import EvaluationError

TRAJECTORY_HEADER = "robot,index,tx,ty,tz,qw,qx,qy,qz,inlier_loop_count"
_FORMAT = ["%d", "%d"] + ["%.17g"] * 7 + ["%d"]


def format_trajectory(
    poses: Mapping[NodeKey, Pose6],
    inlier_counts: Mapping[NodeKey, int] | None = None,
) -> str:
    counts = inlier_counts or {}
    lines = [TRAJECTORY_HEADER]
    for key in sorted(poses):
        values = [key.robot_id, key.index, *poses[key].as_vector(), counts.get(key, 0)]
        lines.append(",".join(fmt % v for fmt, v in zip(_FORMAT, values, strict=True)))
    return "\n".join(lines) + "\n"


def write_trajectory(
    path: Path,
    poses: Mapping[NodeKey, Pose6],
    inlier_counts: Mapping[NodeKey, int] | None = None,
) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_trajectory(poses, inlier_counts))


def parse_trajectory(text: str) -> dict[NodeKey, Pose6]:
    """
    Poses from trajectory text. Ground-truth files share the layout and may
    omit the trailing count column.
    """
    rows = [line for line in text.splitlines()[1:] if line.strip()]
    if not rows:
        return {}
    widths = {len(row.split(",")) for row in rows}
    if len(widths) != 1 or not widths <= {9, 10}:
        raise EvaluationError(
            f"expected 9 or 10 trajectory columns, got {sorted(widths)}"
        )
    try:
        table = np.array([[float(v) for v in row.split(",")] for row in rows])
    except ValueError as exc:
        raise EvaluationError(f"malformed trajectory value: {exc}") from exc
    return {
        NodeKey(int(r[0]), int(r[1])): Pose6(tuple(r[5:9]), tuple(r[2:5]))
        for r in table
    }


def read_trajectory(path: Path) -> dict[NodeKey, Pose6]:
    return parse_trajectory(path.read_text())
