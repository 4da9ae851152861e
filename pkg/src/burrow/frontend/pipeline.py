"""
Single-robot front-end: odometry + scan stream -> key nodes, odometry edges and
keyed scans.
"""

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from burrow.frontend.keying import KeyingConfig, should_create_key
from burrow.frontend.pointcloud import adaptive_voxelize, merge_clouds
from burrow.geometry.se3 import Pose6, se3_between, se3_compose, translation_distance
from burrow.graph.model import (
    DEFAULT_ODOMETRY_INFORMATION,
    EdgeKind,
    GraphEdge,
    GraphNode,
    KeyedScan,
    NodeKey,
    PoseGraph,
    make_prior,
)
from burrow.monitoring.loggers import get_logger
from burrow.utils.exceptions import FrontendError

log = get_logger(__name__)


@dataclass(frozen=True)
class OdometrySample:
    timestamp: float
    pose: Pose6


@dataclass(frozen=True)
class ScanFrame:
    """All lidar clouds captured at one instant, each in its own sensor frame."""

    timestamp: float
    clouds: Sequence[npt.NDArray[np.floating]]


@dataclass
class FrontendOutput:
    segment: PoseGraph
    scans: list[KeyedScan]
    key_times: list[float] = field(default_factory=list)
    skipped_scans: int = 0


def _nearest_scan(
    times: npt.NDArray[np.float64], t: float, window: float
) -> int | None:
    if len(times) == 0:
        return None
    pos = int(np.searchsorted(times, t))
    best: int | None = None
    for i in (pos - 1, pos):
        if 0 <= i < len(times) and abs(times[i] - t) <= window:
            if best is None or abs(times[i] - t) < abs(times[best] - t):
                best = i
    return best


def run_frontend(
    odometry: Iterable[OdometrySample],
    scans: Iterable[ScanFrame],
    extrinsics: Sequence[Pose6],
    cfg: KeyingConfig | None = None,
    *,
    robot_id: int = 0,
    calibration: Pose6 | None = None,
    information: npt.NDArray[np.float64] | None = None,
) -> FrontendOutput:
    """
    Build a robot's pose-graph segment and keyed scans.

    A key node is created at the first odometry sample and whenever
    `should_create_key` fires against the last key. Node poses are
    `calibration * odometry pose`; with a calibration the first node also gets a
    prior at that pose. Each key takes the nearest scan frame within
    `cfg.scan_window` seconds; keys without one keep their node but no scan and
    are counted in `skipped_scans`.

    Raises:
        FrontendError: if odometry timestamps are not strictly increasing.
    """
    cfg = cfg or KeyingConfig()
    info = DEFAULT_ODOMETRY_INFORMATION if information is None else information
    frames = sorted(scans, key=lambda f: f.timestamp)
    scan_times = np.array([f.timestamp for f in frames], dtype=np.float64)

    segment = PoseGraph()
    keyed: list[KeyedScan] = []
    output = FrontendOutput(segment, keyed)

    last_sample: OdometrySample | None = None
    last_key: tuple[NodeKey, Pose6] | None = None
    distance = 0.0
    for sample in odometry:
        if last_sample is not None:
            if sample.timestamp <= last_sample.timestamp:
                raise FrontendError(
                    f"odometry timestamps not increasing at t={sample.timestamp}"
                )
            distance += translation_distance(last_sample.pose, sample.pose)
        last_sample = sample

        if last_key is not None and not should_create_key(
            last_key[1], sample.pose, cfg
        ):
            continue

        key = NodeKey(robot_id, 0 if last_key is None else last_key[0].index + 1)
        world = (
            sample.pose
            if calibration is None
            else se3_compose(calibration, sample.pose)
        )
        segment.nodes[key] = GraphNode(key, world, distance)
        if last_key is None:
            if calibration is not None:
                segment.add_edge(make_prior(key, world))
        else:
            measurement = se3_between(last_key[1], sample.pose)
            segment.add_edge(
                GraphEdge(last_key[0], key, EdgeKind.ODOMETRY, measurement, info)
            )
        last_key = (key, sample.pose)
        output.key_times.append(sample.timestamp)

        frame = _nearest_scan(scan_times, sample.timestamp, cfg.scan_window)
        if frame is None:
            output.skipped_scans += 1
            log.warning(
                "no scan within %.3fs of key %s (t=%.3f)",
                cfg.scan_window,
                key,
                sample.timestamp,
            )
            continue
        body = merge_clouds(frames[frame].clouds, extrinsics)
        if len(body) == 0:
            output.skipped_scans += 1
            log.warning("empty scan for key %s", key)
            continue
        keyed.append(KeyedScan(key, adaptive_voxelize(body, cfg.target_point_count)))

    log.info(
        "robot %d: %d key nodes, %d keyed scans, %d skipped",
        robot_id,
        len(segment.nodes),
        len(keyed),
        output.skipped_scans,
    )
    return output
