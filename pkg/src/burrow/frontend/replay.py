"""
Replay files for a recorded robot stream.

    <dir>/odometry.csv            t,tx,ty,tz,qw,qx,qy,qz
    <dir>/scans/<t_ns>.kscn       one lidar
    <dir>/scans/<t_ns>_<k>.kscn   lidar k of several
"""

from collections import defaultdict
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from burrow.frontend.pipeline import OdometrySample, ScanFrame
from burrow.geometry.se3 import Pose6
from burrow.graph.model import KeyedScan, NodeKey
from burrow.graph.scans import read_scan, write_scan
from burrow.utils.exceptions import FrontendError

ODOMETRY_HEADER = "t,tx,ty,tz,qw,qx,qy,qz"


def write_odometry_csv(samples: Sequence[OdometrySample], path: Path) -> None:
    rows = np.array(
        [[s.timestamp, *s.pose.as_vector()] for s in samples], dtype=np.float64
    ).reshape(-1, 8)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(
        path, rows, delimiter=",", header=ODOMETRY_HEADER, comments="", fmt="%.17g"
    )


def read_odometry_csv(path: Path) -> list[OdometrySample]:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if rows.size and rows.shape[1] != 8:
        raise FrontendError(f"{path}: expected 8 columns, got {rows.shape[1]}")
    return [
        OdometrySample(float(r[0]), Pose6(tuple(r[4:8]), tuple(r[1:4]))) for r in rows
    ]


def _scan_name(timestamp: float, lidar: int, lidars: int) -> str:
    t_ns = round(timestamp * 1e9)
    return f"{t_ns}.kscn" if lidars == 1 else f"{t_ns}_{lidar}.kscn"


def write_replay(
    directory: Path,
    odometry: Sequence[OdometrySample],
    frames: Sequence[ScanFrame],
    robot_id: int = 0,
) -> None:
    write_odometry_csv(odometry, directory / "odometry.csv")
    for number, frame in enumerate(frames):
        for lidar, cloud in enumerate(frame.clouds):
            write_scan(
                KeyedScan(NodeKey(robot_id, number), cloud),
                directory
                / "scans"
                / _scan_name(frame.timestamp, lidar, len(frame.clouds)),
            )


def read_replay(directory: Path) -> tuple[list[OdometrySample], list[ScanFrame]]:
    """Load a stream written by `write_replay`; scan frames sorted by time."""
    odometry = read_odometry_csv(directory / "odometry.csv")
    grouped: dict[int, dict[int, KeyedScan]] = defaultdict(dict)
    for path in (directory / "scans").glob("*.kscn"):
        stem, _, lidar = path.stem.partition("_")
        try:
            t_ns, k = int(stem), int(lidar or 0)
        except ValueError:
            raise FrontendError(f"unexpected scan file name {path.name}") from None
        grouped[t_ns][k] = read_scan(path)
    frames = [
        ScanFrame(t_ns / 1e9, [group[k].points() for k in sorted(group)])
        for t_ns, group in sorted(grouped.items())
    ]
    return odometry, frames
