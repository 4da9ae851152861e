"""
Robots driving through a world: ground truth, noisy odometry, ray-cast scans
and the gate observation that gives each robot its calibration.
"""

import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from burrow.frontend.pipeline import OdometrySample, ScanFrame
from burrow.geometry.se3 import Pose6, se3_between, se3_compose
from burrow.monitoring.loggers import get_logger
from burrow.registration.calibration import align_three_points
from burrow.sim.config import SimConfig
from burrow.sim.world import FloatArray, World
from burrow.utils.exceptions import RouteOutsideWorldError

log = get_logger(__name__)

# routes of robots beyond the preset's own are shifted sideways by this much
ROUTE_SHIFT = 0.3


@dataclass(frozen=True)
class RobotRun:
    """One robot's simulated drive. Ground truth is in the world frame,
    odometry in the robot's own frame starting at identity."""

    robot_id: int
    ground_truth: list[Pose6]
    odometry: list[OdometrySample]
    scans: list[ScanFrame]
    calibration: Pose6

    @property
    def start(self) -> Pose6:
        return self.ground_truth[0]

    @property
    def distance(self) -> float:
        t = np.array([p.translation for p in self.ground_truth])
        return float(np.linalg.norm(np.diff(t, axis=0), axis=1).sum())

    def ground_truth_at(self, timestamp: float) -> Pose6:
        times = np.array([s.timestamp for s in self.odometry])
        return self.ground_truth[int(np.argmin(np.abs(times - timestamp)))]


def robot_route(world: World, robot_id: int) -> FloatArray:
    base = world.routes[robot_id % len(world.routes)]
    shift = ROUTE_SHIFT * (robot_id // len(world.routes))
    return base + np.array([0.0, shift, 0.0])


def route_poses(route: npt.ArrayLike, step: float) -> list[Pose6]:
    """
    Poses every `step` meters along a polyline, heading along the current
    segment. The last waypoint is always included.
    """
    points = np.asarray(route, dtype=np.float64).reshape(-1, 3)
    deltas = np.diff(points, axis=0)
    lengths = np.linalg.norm(deltas, axis=1)
    keep = lengths > 0
    deltas, lengths = deltas[keep], lengths[keep]
    starts = points[:-1][keep]
    if not len(lengths):
        return [Pose6(translation=tuple(points[0]))]
    cumulative = np.concatenate([[0.0], np.cumsum(lengths)])
    total = float(cumulative[-1])
    s = np.arange(0.0, total, step)
    if total - s[-1] > 1e-9:
        s = np.append(s, total)
    segment = np.clip(
        np.searchsorted(cumulative, s, side="right") - 1, 0, len(lengths) - 1
    )
    along = (s - cumulative[segment]) / lengths[segment]
    positions = starts[segment] + along[:, None] * deltas[segment]
    yaw = np.degrees(np.arctan2(deltas[:, 1], deltas[:, 0]))
    return [Pose6.from_yaw(float(yaw[i]), p) for i, p in zip(segment, positions)]


def scan_directions(cfg: SimConfig) -> FloatArray:
    """Unit ray directions of the simulated lidar, body frame."""
    azimuth = np.linspace(0.0, 2.0 * math.pi, cfg.rays_horizontal, endpoint=False)
    half = math.radians(cfg.vertical_fov) / 2.0
    elevation = (
        np.linspace(-half, half, cfg.rays_vertical)
        if cfg.rays_vertical > 1
        else np.zeros(1)
    )
    e, a = np.meshgrid(elevation, azimuth, indexing="ij")
    return np.column_stack(
        [
            (np.cos(e) * np.cos(a)).ravel(),
            (np.cos(e) * np.sin(a)).ravel(),
            np.sin(e).ravel(),
        ]
    )


def render_scan(
    world: World,
    pose: Pose6,
    directions: FloatArray,
    cfg: SimConfig,
    rng: np.random.Generator,
) -> npt.NDArray[np.float32]:
    """Body-frame points where the rays from `pose` hit the walls."""
    ranges = world.raycast(pose.t, directions @ pose.rotation_matrix.T, cfg.max_range)
    noise = rng.normal(0.0, cfg.range_noise, len(ranges))
    hit = np.isfinite(ranges)
    measured = np.maximum(ranges[hit] + noise[hit], 0.0)
    return (directions[hit] * measured[:, None]).astype(np.float32)


def observe_gate(
    world: World, start: Pose6, cfg: SimConfig, rng: np.random.Generator
) -> Pose6:
    """Calibration from noisy body-frame sightings of the three gate markers."""
    seen = start.inverse().transform_points(world.markers)
    seen = seen + rng.normal(0.0, cfg.marker_noise, seen.shape)
    return align_three_points(seen, world.markers).transform


def simulate_robot(
    world: World, route: npt.ArrayLike, cfg: SimConfig, robot_id: int = 0
) -> RobotRun:
    """
    Drive `route` at `cfg.speed`, sampling odometry at `cfg.odometry_rate`
    and a scan every `cfg.scan_stride` samples. Deterministic for a given
    seed and robot id.

    Raises:
        RouteOutsideWorldError: if any sampled pose lies outside the corridors.
    """
    rng = np.random.default_rng([cfg.seed, robot_id])
    step = cfg.speed / cfg.odometry_rate
    truth = route_poses(route, step)
    positions = np.array([p.translation for p in truth])
    outside = ~world.contains(positions)
    if outside.any():
        where = positions[int(np.argmax(outside))]
        raise RouteOutsideWorldError(
            f"robot {robot_id}: route leaves the corridors at {where.round(2).tolist()}"
        )

    calibration = observe_gate(world, truth[0], cfg, rng)
    directions = scan_directions(cfg)
    odometry = [OdometrySample(0.0, Pose6.identity())]
    scans: list[ScanFrame] = []
    for k, pose in enumerate(truth):
        timestamp = k / cfg.odometry_rate
        if k > 0:
            increment = se3_between(truth[k - 1], pose)
            d = float(np.linalg.norm(increment.t))
            rotvec = rng.normal(0.0, cfg.rotation_noise * math.sqrt(d), 3)
            shift = rng.normal(0.0, cfg.translation_noise * math.sqrt(d), 3)
            noisy = se3_compose(increment, Pose6.from_rotvec(rotvec, shift))
            odometry.append(
                OdometrySample(timestamp, se3_compose(odometry[-1].pose, noisy))
            )
        if k % cfg.scan_stride == 0:
            cloud = render_scan(world, pose, directions, cfg, rng)
            scans.append(ScanFrame(timestamp, [cloud]))
    run = RobotRun(robot_id, truth, odometry, scans, calibration)
    log.info(
        "robot %d: %.1f m, %d odometry samples, %d scans",
        robot_id,
        run.distance,
        len(odometry),
        len(scans),
    )
    return run
