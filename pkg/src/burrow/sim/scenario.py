"""
A complete simulated run: world, every robot's streams pushed through the
single-robot front-end, key-node ground truth and injected outlier loops.

On disk:

    <dir>/sim.json                  the SimConfig used
    <dir>/ground_truth.csv          key-node ground truth, trajectory layout
    <dir>/loops.txt                 injected outlier loops, labeled
    <dir>/robot_<i>/odometry.csv    replay stream (see frontend.replay)
    <dir>/robot_<i>/scans/
    <dir>/robot_<i>/calibration.csv gate calibration, tx,ty,tz,qw,qx,qy,qz
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from burrow.backend.export import write_trajectory
from burrow.frontend.keying import KeyingConfig
from burrow.frontend.pipeline import FrontendOutput, run_frontend
from burrow.frontend.replay import write_replay
from burrow.geometry.se3 import Pose6
from burrow.graph.model import NodeKey
from burrow.monitoring.loggers import get_logger
from burrow.sim.config import SimConfig
from burrow.sim.loops import (
    LabeledLoop,
    inject_outlier_loops,
    is_true_loop,
    write_loops,
)
from burrow.sim.robot import RobotRun, robot_route, simulate_robot
from burrow.sim.world import World, generate_world
from burrow.utils.exceptions import SimulationError

log = get_logger(__name__)

CALIBRATION_HEADER = "tx,ty,tz,qw,qx,qy,qz"


@dataclass(frozen=True)
class RobotDataset:
    run: RobotRun
    frontend: FrontendOutput
    ground_truth: dict[NodeKey, Pose6]


@dataclass(frozen=True)
class Scenario:
    config: SimConfig
    world: World
    robots: list[RobotDataset]
    outliers: list[LabeledLoop]

    @property
    def ground_truth(self) -> dict[NodeKey, Pose6]:
        merged: dict[NodeKey, Pose6] = {}
        for robot in self.robots:
            merged.update(robot.ground_truth)
        return merged

    def odometry_estimates(self) -> dict[NodeKey, Pose6]:
        """Calibrated odometry-only node poses, the no-loop-closure baseline."""
        return {
            key: node.pose
            for robot in self.robots
            for key, node in robot.frontend.segment.nodes.items()
        }

    def is_true_loop(self, a: NodeKey, b: NodeKey) -> bool:
        return is_true_loop(self.ground_truth, a, b, self.config.true_loop_radius)


def key_ground_truth(run: RobotRun, output: FrontendOutput) -> dict[NodeKey, Pose6]:
    keys = sorted(output.segment.nodes)
    times = np.array([s.timestamp for s in run.odometry])
    positions = np.searchsorted(times, output.key_times)
    return {
        key: run.ground_truth[int(min(p, len(times) - 1))]
        for key, p in zip(keys, positions, strict=True)
    }


def _simulate(
    world: World, cfg: SimConfig, keying: KeyingConfig, robot_id: int
) -> RobotDataset:
    run = simulate_robot(world, robot_route(world, robot_id), cfg, robot_id)
    output = run_frontend(
        run.odometry,
        run.scans,
        [Pose6.identity()],
        keying,
        robot_id=robot_id,
        calibration=run.calibration,
    )
    return RobotDataset(run, output, key_ground_truth(run, output))


def build_scenario(
    cfg: SimConfig, keying: KeyingConfig | None = None, workers: int = 1
) -> Scenario:
    """Simulate every robot (in parallel with `workers` > 1) and label outliers."""
    world = generate_world(cfg)
    keying = keying or KeyingConfig()
    with ThreadPoolExecutor(max(workers, 1)) as pool:
        robots = list(
            pool.map(lambda i: _simulate(world, cfg, keying, i), range(cfg.robots))
        )
    truth: dict[NodeKey, Pose6] = {}
    for robot in robots:
        truth.update(robot.ground_truth)
    outliers = inject_outlier_loops([], truth, cfg)
    log.info(
        "scenario %s seed %d: %d robots, %d key nodes, %d outlier loops",
        cfg.preset,
        cfg.seed,
        len(robots),
        len(truth),
        len(outliers),
    )
    return Scenario(cfg, world, robots, outliers)


def write_calibration(path: Path, pose: Pose6) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    row = np.array([pose.as_vector()])
    np.savetxt(
        path, row, delimiter=",", header=CALIBRATION_HEADER, comments="", fmt="%.17g"
    )


def read_calibration(path: Path) -> Pose6:
    row = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if row.shape != (1, 7):
        raise SimulationError(f"{path}: expected one row of 7 values")
    values = row[0]
    return Pose6(tuple(values[3:]), tuple(values[:3]))


def write_scenario(scenario: Scenario, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "sim.json").write_text(scenario.config.model_dump_json(indent=2))
    write_trajectory(out_dir / "ground_truth.csv", scenario.ground_truth)
    write_loops(out_dir / "loops.txt", scenario.outliers)
    for robot in scenario.robots:
        robot_dir = out_dir / f"robot_{robot.run.robot_id}"
        write_replay(robot_dir, robot.run.odometry, robot.run.scans, robot.run.robot_id)
        write_calibration(robot_dir / "calibration.csv", robot.run.calibration)
    log.info("scenario written to %s", out_dir)


def read_sim_config(directory: Path) -> SimConfig:
    return SimConfig.model_validate_json((directory / "sim.json").read_text())
