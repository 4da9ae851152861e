"""
Command-line entry points.

    burrow sim generate <preset>       simulate a preset and write replay files
    burrow robot replay <dir>          stream one robot's replay to a station
    burrow station                     run the base station until SIGINT
    burrow eval ate|loops|map ...      score saved results against ground truth
    burrow experiment run <preset>     run configuration cells, write reports

Exit code 0 on success, 2 on invalid input or a burrow error.
"""

import argparse
import asyncio
import re
import signal
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import get_args

import numpy as np
from pydantic import ValidationError

from burrow.backend.export import read_trajectory
from burrow.backend.mapping import assemble_map
from burrow.config import Config, InitializerName, OutlierMode
from burrow.evaluation.experiment import (
    CellSpec,
    ExperimentConfig,
    run_experiment,
    standard_cells,
)
from burrow.evaluation.loops import graph_loop_samples, write_loop_errors
from burrow.evaluation.maps import map_error, write_point_errors
from burrow.evaluation.report import markdown_report, write_report
from burrow.evaluation.trajectory import ate, ate_per_robot
from burrow.frontend.keying import KeyingConfig
from burrow.frontend.pipeline import run_frontend
from burrow.frontend.replay import read_replay
from burrow.geometry.se3 import Pose6
from burrow.graph.io import read_graph
from burrow.graph.model import KeyedScan, NodeKey
from burrow.graph.scans import read_scan
from burrow.monitoring.loggers import get_logger
from burrow.sim.config import Preset, SimConfig
from burrow.sim.scenario import build_scenario, read_calibration, write_scenario
from burrow.station.client import (
    ConnectivitySchedule,
    RobotClient,
    client_session,
    key_updates,
)
from burrow.station.server import StationServer
from burrow.station.state import StationConfig, StationState
from burrow.utils.exceptions import BurrowException, ConfigValidationError

log = get_logger("burrow.cli")

EXIT_INVALID = 2
_ROBOT_DIR = re.compile(r"robot_(\d+)$")


def _blackout(text: str) -> tuple[float, float]:
    start, _, end = text.partition(":")
    try:
        low, high = float(start), float(end)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected START:END seconds, got {text!r}"
        ) from None
    if high <= low:
        raise argparse.ArgumentTypeError(f"empty blackout {text!r}")
    return low, high


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError(f"expected on or off, got {text!r}")
    return text == "on"


# --- sim ---
def cmd_sim_generate(args: argparse.Namespace) -> int:
    cfg = SimConfig(
        preset=args.preset,
        seed=args.seed,
        robots=args.robots,
        outlier_loop_count=args.outlier_loops,
    )
    scenario = build_scenario(cfg, workers=args.workers)
    write_scenario(scenario, args.out)
    print(f"{cfg.preset} seed {cfg.seed}: {len(scenario.ground_truth)} key nodes")
    return 0


# --- robot ---
def _robot_id(directory: Path, given: int | None) -> int:
    if given is not None:
        return given
    match = _ROBOT_DIR.search(directory.resolve().name)
    return int(match.group(1)) if match else 0


def cmd_robot_replay(args: argparse.Namespace) -> int:
    settings = Config()
    directory: Path = args.directory
    robot_id = _robot_id(directory, args.robot_id)
    calibration_path = args.calibration or directory / "calibration.csv"
    calibration = (
        read_calibration(calibration_path) if calibration_path.exists() else None
    )
    odometry, frames = read_replay(directory)
    lidars = len(frames[0].clouds) if frames else 1
    output = run_frontend(
        odometry,
        frames,
        [Pose6.identity()] * lidars,
        KeyingConfig(),
        robot_id=robot_id,
        calibration=calibration,
    )
    messages = client_session(
        key_updates(output),
        ConnectivitySchedule(tuple(args.blackout)),
        robot_id,
        calibration,
    )
    client = RobotClient(
        args.host or settings.STATION_HOST, args.port or settings.STATION_PORT
    )
    resend = asyncio.run(client.run(messages))
    print(f"robot {robot_id}: {resend.acked} batches acknowledged")
    return 0


# --- station ---
async def _serve(server: StationServer) -> None:
    stop = asyncio.Event()
    loop = asyncio.get_running_loop()
    for sig in (signal.SIGINT, signal.SIGTERM):
        loop.add_signal_handler(sig, stop.set)
    await server.start()
    await stop.wait()
    await server.stop()


def cmd_station(args: argparse.Namespace) -> int:
    settings = Config()
    config = StationConfig.from_settings(
        settings,
        alpha=args.alpha,
        budget=args.budget,
        outlier_mode=args.outlier,
        initializer=args.initializer,
    )
    server = StationServer(
        StationState(config),
        host=args.host or settings.STATION_HOST,
        port=settings.STATION_PORT if args.port is None else args.port,
        loop_workers=settings.LOOP_WORKERS,
        out_dir=args.out_dir,
    )
    asyncio.run(_serve(server))
    return 0


# --- eval ---
def cmd_eval_ate(args: argparse.Namespace) -> int:
    estimated = read_trajectory(args.estimated)
    truth = read_trajectory(args.ground_truth)
    print(f"ATE {ate(estimated, truth, align=args.align):.4f} m")
    if args.per_robot:
        for robot, value in ate_per_robot(estimated, truth, align=args.align).items():
            print(f"robot {robot}: {value:.4f} m")
    return 0


def cmd_eval_loops(args: argparse.Namespace) -> int:
    graph = read_graph(args.graph)
    truth = read_trajectory(args.ground_truth)
    samples = graph_loop_samples(graph, truth, args.radius)
    true_loops = [s for s in samples if s.true_loop]
    print(f"{len(samples)} loop closures, {len(true_loops)} true")
    if true_loops:
        translation = np.mean([s.translation_error for s in true_loops])
        rotation = np.mean([s.rotation_error for s in true_loops])
        print(f"mean error {translation:.3f} m / {rotation:.2f} deg")
    if args.out is not None:
        write_loop_errors(args.out, samples)
    return 0


def _saved_scans(station_dir: Path) -> dict[NodeKey, KeyedScan]:
    scans = (read_scan(path) for path in (station_dir / "scans").glob("*.kscn"))
    return {scan.key: scan for scan in scans}


def cmd_eval_map(args: argparse.Namespace) -> int:
    station_dir: Path = args.station_dir
    scans = _saved_scans(station_dir)
    estimated = read_trajectory(station_dir / "trajectory.csv")
    truth = read_trajectory(args.ground_truth)
    built = assemble_map(estimated, scans, args.voxel)
    reference = assemble_map(truth, scans, args.voxel)
    error = map_error(built.cloud, reference.cloud, bins=args.bins)
    print(
        f"map error mean {error.mean:.3f} m, median {error.median:.3f} m, "
        f"max {error.max:.3f} m over {len(error.distances)} points"
    )
    if args.points is not None:
        write_point_errors(args.points, error)
    return 0


# --- experiment ---
def _cells(args: argparse.Namespace) -> list[CellSpec]:
    if args.outlier is None and args.loops is None and args.initializer is None:
        return standard_cells()
    loops = True if args.loops is None else args.loops
    initializer = args.initializer or "sample-consensus"
    outlier = args.outlier or "gnc"
    name = f"{initializer}/{outlier}" if loops else "odom"
    return [
        CellSpec(
            name=name,
            initializer=initializer,
            outlier_mode=outlier if loops else "none",
            loop_closure=loops,
        )
    ]


def cmd_experiment_run(args: argparse.Namespace) -> int:
    settings = Config()
    sim = SimConfig(
        preset=args.preset, robots=args.robots, outlier_loop_count=args.outlier_loops
    )
    cfg = ExperimentConfig(
        sim=sim,
        seeds=tuple(args.seeds),
        alpha=settings.ALPHA,
        budget=settings.TICK_BUDGET,
        blackouts=tuple(args.blackout),
        cells=tuple(_cells(args)),
        align=args.align,
        map_error=args.map_error,
        executor=args.executor,
        workers=args.workers,
    )
    reports = run_experiment(cfg)
    out_dir: Path = args.out_dir or settings.OUT_DIR / f"experiment-{args.preset}"
    write_report(out_dir, reports, title=f"{args.preset} experiment")
    print(markdown_report(reports, title=f"{args.preset} experiment"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="burrow",
        description="Centralized multi-robot lidar SLAM back-end.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    commands = parser.add_subparsers(dest="command", required=True)
    defaults = argparse.ArgumentDefaultsHelpFormatter
    presets = get_args(Preset)
    outlier_modes = get_args(OutlierMode)
    initializers = get_args(InitializerName)

    sim = commands.add_parser("sim", help="simulator")
    sim_commands = sim.add_subparsers(dest="sim_command", required=True)
    generate = sim_commands.add_parser(
        "generate", help="simulate a preset", formatter_class=defaults
    )
    generate.add_argument("preset", choices=presets)
    generate.add_argument("--seed", type=int, default=0)
    generate.add_argument("--robots", type=int, default=2)
    generate.add_argument(
        "--outlier-loops", type=int, default=0, help="outlier loops to inject"
    )
    generate.add_argument("--workers", type=int, default=1)
    generate.add_argument("--out", type=Path, default=Path("./sim"))
    generate.set_defaults(handler=cmd_sim_generate)

    robot = commands.add_parser("robot", help="robot client")
    robot_commands = robot.add_subparsers(dest="robot_command", required=True)
    replay = robot_commands.add_parser(
        "replay",
        help="stream a replay directory to a station",
        formatter_class=defaults,
    )
    replay.add_argument("directory", type=Path)
    replay.add_argument(
        "--robot-id", type=int, default=None, help="default: from robot_<i> dir name"
    )
    replay.add_argument(
        "--calibration",
        type=Path,
        default=None,
        help="gate calibration csv, default <dir>/calibration.csv",
    )
    replay.add_argument("--host", default=None, help="default: BURROW_STATION_HOST")
    replay.add_argument(
        "--port", type=int, default=None, help="default: BURROW_STATION_PORT"
    )
    replay.add_argument(
        "--blackout",
        type=_blackout,
        action="append",
        default=[],
        help="comms blackout START:END in stream seconds, repeatable",
    )
    replay.set_defaults(handler=cmd_robot_replay)

    station = commands.add_parser(
        "station", help="run the base station", formatter_class=defaults
    )
    station.add_argument("--host", default=None, help="default: BURROW_STATION_HOST")
    station.add_argument(
        "--port", type=int, default=None, help="default: BURROW_STATION_PORT"
    )
    station.add_argument(
        "--alpha", type=float, default=None, help="default: BURROW_ALPHA"
    )
    station.add_argument(
        "--budget", type=int, default=None, help="default: BURROW_TICK_BUDGET"
    )
    station.add_argument(
        "--outlier",
        choices=outlier_modes,
        default=None,
        help="default: BURROW_OUTLIER_MODE",
    )
    station.add_argument(
        "--initializer",
        choices=initializers,
        default=None,
        help="default: BURROW_INITIALIZER",
    )
    station.add_argument(
        "--out-dir",
        type=Path,
        default=None,
        help="save graph, trajectory and map here on optimization and shutdown",
    )
    station.set_defaults(handler=cmd_station)

    evaluate = commands.add_parser("eval", help="score results")
    eval_commands = evaluate.add_subparsers(dest="eval_command", required=True)
    ate_cmd = eval_commands.add_parser(
        "ate", help="absolute trajectory error", formatter_class=defaults
    )
    ate_cmd.add_argument("estimated", type=Path)
    ate_cmd.add_argument("ground_truth", type=Path)
    ate_cmd.add_argument("--align", action="store_true", help="rigid-align first")
    ate_cmd.add_argument("--per-robot", action="store_true")
    ate_cmd.set_defaults(handler=cmd_eval_ate)

    loops = eval_commands.add_parser(
        "loops", help="loop-closure errors of a saved graph", formatter_class=defaults
    )
    loops.add_argument("graph", type=Path)
    loops.add_argument("ground_truth", type=Path)
    loops.add_argument("--radius", type=float, default=6.0, help="true-loop radius, m")
    loops.add_argument("--out", type=Path, default=None, help="per-loop error csv")
    loops.set_defaults(handler=cmd_eval_loops)

    map_cmd = eval_commands.add_parser(
        "map", help="cloud-to-cloud map error", formatter_class=defaults
    )
    map_cmd.add_argument("station_dir", type=Path)
    map_cmd.add_argument("ground_truth", type=Path)
    map_cmd.add_argument("--voxel", type=float, default=0.2)
    map_cmd.add_argument("--bins", type=int, default=20)
    map_cmd.add_argument("--points", type=Path, default=None, help="per-point csv")
    map_cmd.set_defaults(handler=cmd_eval_map)

    experiment = commands.add_parser("experiment", help="configuration experiments")
    experiment_commands = experiment.add_subparsers(
        dest="experiment_command", required=True
    )
    run = experiment_commands.add_parser(
        "run",
        help="run cells; all standard cells unless --outlier, --loops or "
        "--initializer narrows to one",
        formatter_class=defaults,
    )
    run.add_argument("preset", choices=presets)
    run.add_argument("--outlier", choices=outlier_modes, default=None)
    run.add_argument("--initializer", choices=initializers, default=None)
    run.add_argument("--loops", type=_on_off, default=None, help="on or off")
    run.add_argument("--seeds", type=int, nargs="+", default=[0])
    run.add_argument("--robots", type=int, default=2)
    run.add_argument("--outlier-loops", type=int, default=0)
    run.add_argument("--blackout", type=_blackout, action="append", default=[])
    run.add_argument(
        "--executor", choices=("serial", "process", "celery"), default="serial"
    )
    run.add_argument("--workers", type=int, default=4)
    run.add_argument("--align", action="store_true")
    run.add_argument("--map-error", action="store_true")
    run.add_argument(
        "--out-dir", type=Path, default=None, help="default: BURROW_OUT_DIR/..."
    )
    run.set_defaults(handler=cmd_experiment_run)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return int(args.handler(args))
    except ValidationError as exc:
        error: BurrowException = ConfigValidationError.from_pydantic(exc)
    except BurrowException as exc:
        error = exc
    log.error("burrow: %s", error)
    return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
