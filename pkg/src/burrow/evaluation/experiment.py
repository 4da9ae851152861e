"""
Desk-scale ablation runs: simulate a preset, stream every robot into an
in-process station, close loops, then optimize each configuration cell and
score it against ground truth.

Cells sharing their loop-closure front-end settings reuse one front-end run;
only the back-end differs between them.
"""

from collections import defaultdict
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from burrow.backend.gnc import GncParams
from burrow.backend.icm import IcmParams
from burrow.backend.mapping import assemble_map
from burrow.backend.robust import optimize_graph
from burrow.config import InitializerName, OutlierMode
from burrow.evaluation.loops import (
    ground_truth_labels,
    ground_truth_transforms,
    loop_error_samples,
    loop_metrics,
)
from burrow.evaluation.maps import map_error
from burrow.evaluation.trajectory import ate, ate_per_robot, traveled_distance
from burrow.frontend.keying import KeyingConfig
from burrow.graph.model import EdgeKind, KeyedScan, NodeKey, PoseGraph
from burrow.loops.computation import LoopEdgeCandidateResult
from burrow.monitoring.decorators import monitor
from burrow.monitoring.loggers import get_logger, log_context
from burrow.registration.types import AlignmentParams
from burrow.sim.config import SimConfig
from burrow.sim.scenario import Scenario, build_scenario
from burrow.station.client import (
    ConnectivitySchedule,
    client_session,
    deliver_local,
    key_updates,
)
from burrow.station.state import StationConfig, StationState

log = get_logger(__name__)

Executor = Literal["serial", "process", "celery"]

OUTLIER_MODES: tuple[OutlierMode, ...] = ("none", "icm", "gnc", "icm+gnc")
INITIALIZERS: tuple[InitializerName, ...] = ("odometric", "sample-consensus")


class CellSpec(BaseModel):
    """One configuration of the loop-closure front-end and robust back-end."""

    model_config = ConfigDict(frozen=True)

    name: str
    initializer: InitializerName = "sample-consensus"
    outlier_mode: OutlierMode = "gnc"
    loop_closure: bool = True
    inter_robot: bool = True
    prioritize: bool = True
    fixed_radius: float | None = Field(default=None, gt=0)

    def frontend_key(self) -> tuple[object, ...]:
        return (
            self.initializer,
            self.loop_closure,
            self.inter_robot,
            self.prioritize,
            self.fixed_radius,
        )


def ablation_cells() -> list[CellSpec]:
    return [
        CellSpec(name=f"{init}/{mode}", initializer=init, outlier_mode=mode)
        for init in INITIALIZERS
        for mode in OUTLIER_MODES
    ]


def standard_cells(legacy_radius: float = 10.0) -> list[CellSpec]:
    """
    The ablation grid plus: the odometry-only baseline, the full pipeline
    without inter-robot loops, and the legacy and current pipelines.
    """
    return [
        CellSpec(name="odom", outlier_mode="none", loop_closure=False),
        *ablation_cells(),
        CellSpec(name="single-robot", inter_robot=False),
        CellSpec(
            name="legacy",
            initializer="odometric",
            outlier_mode="icm",
            prioritize=False,
            fixed_radius=legacy_radius,
        ),
        CellSpec(name="current"),
    ]


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    sim: SimConfig = Field(default_factory=SimConfig)
    seeds: tuple[int, ...] = (0,)
    keying: KeyingConfig = Field(default_factory=KeyingConfig)
    alignment: AlignmentParams = Field(default_factory=AlignmentParams)
    gnc: GncParams = Field(default_factory=GncParams)
    icm: IcmParams = Field(default_factory=IcmParams)
    alpha: float = Field(default=0.2, gt=0)
    budget: int = Field(default=5, ge=1)
    blackouts: tuple[tuple[float, float], ...] = ()
    cells: tuple[CellSpec, ...] = Field(
        default_factory=lambda: tuple(standard_cells())
    )
    align: bool = False
    map_error: bool = False
    map_voxel: float = Field(default=0.2, gt=0)
    executor: Executor = "serial"
    workers: int = Field(default=4, ge=1)


class CellReport(BaseModel):
    """Scores of one cell on one seed; JSON-safe so it can cross process and
    broker boundaries."""

    cell: str
    preset: str
    seed: int
    initializer: str
    outlier_mode: str
    loop_closure: bool
    ate: float
    ate_per_robot: dict[int, float]
    distance_per_robot: dict[int, float]
    recall: float | None
    false_positive_rate: float | None
    mean_translation_error: float | None
    mean_rotation_error: float | None
    generated: int
    verified: int
    inliers: int
    injected_outliers: int
    rejected_outliers: int
    true_loops_verified: int
    true_loops_kept: int
    map_error_mean: float | None = None
    loop_errors: list[tuple[float, float, bool]] = Field(default_factory=list)


@dataclass(frozen=True)
class FrontendRun:
    graph: PoseGraph
    scans: dict[NodeKey, KeyedScan]
    results: list[LoopEdgeCandidateResult]
    generated: int


def run_frontend_cell(
    scenario: Scenario, cell: CellSpec, cfg: ExperimentConfig
) -> FrontendRun:
    """Stream every robot into a fresh station and run one loop tick per node."""
    station = StationConfig(
        alpha=cfg.alpha,
        budget=cfg.budget,
        outlier_mode=cell.outlier_mode,
        initializer=cell.initializer,
        auto_optimize_every=0,
        loop_closure=cell.loop_closure,
        inter_robot=cell.inter_robot,
        prioritize=cell.prioritize,
        fixed_radius=cell.fixed_radius,
        alignment=cfg.alignment,
        gnc=cfg.gnc,
        icm=cfg.icm,
    )
    state = StationState(station)
    schedule = ConnectivitySchedule(cfg.blackouts)
    for robot in scenario.robots:
        messages = client_session(
            key_updates(robot.frontend),
            schedule,
            robot.run.robot_id,
            robot.run.calibration,
        )
        deliver_local(state, messages)
    results = state.process_loops() if cell.loop_closure else []
    graph, scans = state.snapshot()
    return FrontendRun(graph, scans, results, state.frontend.counters["generated"])


@monitor("experiment_cell", log_calls=False)
def evaluate_cell(
    scenario: Scenario, front: FrontendRun, cell: CellSpec, cfg: ExperimentConfig
) -> CellReport:
    """Add the injected outliers, optimize with the cell's back-end and score."""
    truth = scenario.ground_truth
    graph = front.graph
    injected = list(scenario.outliers) if cell.loop_closure else []
    if injected:
        graph = graph.copy()
        graph.edges.extend(loop.edge for loop in injected)

    inlier_pairs: set[tuple[NodeKey, NodeKey]] = set()
    rejected = 0
    if graph.edges_of_kind(EdgeKind.LOOP_CLOSURE):
        result = optimize_graph(graph, cell.outlier_mode, cfg.gnc, cfg.icm)
        estimates = result.apply(graph).poses()
        inlier_pairs = {
            (e.source, e.target)
            for e in result.inlier_edges
            if e.kind is EdgeKind.LOOP_CLOSURE
        }
        outlier_ids = {id(e) for e in result.outlier_edges}
        rejected = sum(1 for loop in injected if id(loop.edge) in outlier_ids)
    else:
        estimates = graph.poses()

    radius = scenario.config.true_loop_radius
    labels = ground_truth_labels(front.results, truth, radius)
    transforms = ground_truth_transforms(front.results, truth)
    metrics = loop_metrics(
        front.results,
        labels,
        transforms,
        inliers=inlier_pairs,
        generated=front.generated,
    )
    samples = loop_error_samples(front.results, labels, transforms, inlier_pairs)
    true_verified = [
        r for r in front.results if r.accepted and labels[r.candidate.pair]
    ]

    map_mean = None
    if cfg.map_error and front.scans:
        built = assemble_map(estimates, front.scans, cfg.map_voxel)
        reference = assemble_map(truth, front.scans, cfg.map_voxel)
        if len(built.cloud) and len(reference.cloud):
            map_mean = map_error(built.cloud, reference.cloud).mean

    report = CellReport(
        cell=cell.name,
        preset=scenario.config.preset,
        seed=scenario.config.seed,
        initializer=cell.initializer,
        outlier_mode=cell.outlier_mode,
        loop_closure=cell.loop_closure,
        ate=ate(estimates, truth, align=cfg.align),
        ate_per_robot=ate_per_robot(estimates, truth, align=cfg.align),
        distance_per_robot=traveled_distance(truth),
        recall=metrics.recall,
        false_positive_rate=metrics.false_positive_rate,
        mean_translation_error=metrics.mean_translation_error,
        mean_rotation_error=metrics.mean_rotation_error,
        generated=metrics.generated,
        verified=metrics.verified,
        inliers=metrics.inliers,
        injected_outliers=len(injected),
        rejected_outliers=rejected,
        true_loops_verified=len(true_verified),
        true_loops_kept=sum(
            1 for r in true_verified if r.candidate.pair in inlier_pairs
        ),
        map_error_mean=map_mean,
        loop_errors=[
            (s.translation_error, s.rotation_error, s.true_loop) for s in samples
        ],
    )
    log.info("cell %s seed %d: ATE %.3f m", cell.name, report.seed, report.ate)
    return report


def run_cell_group(
    cfg: ExperimentConfig, seed: int, cells: Sequence[CellSpec]
) -> list[CellReport]:
    """Simulate one seed, run the shared front-end once, evaluate every cell."""
    sim = cfg.sim.model_copy(update={"seed": seed})
    with log_context(preset=sim.preset, seed=seed, cell=cells[0].name):
        scenario = build_scenario(sim, cfg.keying)
        front = run_frontend_cell(scenario, cells[0], cfg)
        return [evaluate_cell(scenario, front, cell, cfg) for cell in cells]


def group_cells(cells: Sequence[CellSpec]) -> list[list[CellSpec]]:
    groups: dict[tuple[object, ...], list[CellSpec]] = defaultdict(list)
    for cell in cells:
        groups[cell.frontend_key()].append(cell)
    return list(groups.values())


def _run_celery(
    cfg: ExperimentConfig, work: list[tuple[int, list[CellSpec]]]
) -> list[list[CellReport]]:
    from burrow.tasks.jobs import run_cell_task

    payload = cfg.model_dump(mode="json")
    pending = [
        run_cell_task.delay(payload, seed, [c.model_dump(mode="json") for c in cells])
        for seed, cells in work
    ]
    return [
        [CellReport.model_validate(row) for row in task.get()] for task in pending
    ]


def run_experiment(cfg: ExperimentConfig) -> list[CellReport]:
    """
    Every cell on every seed, in a deterministic order (seed, then cell as
    configured). Cell groups run serially, in worker processes, or as Celery
    tasks.
    """
    work = [(seed, group) for seed in cfg.seeds for group in group_cells(cfg.cells)]
    log.info(
        "experiment %s: %d seeds, %d cells, %d front-end runs on %s",
        cfg.sim.preset,
        len(cfg.seeds),
        len(cfg.cells),
        len(work),
        cfg.executor,
    )
    if cfg.executor == "process":
        with ProcessPoolExecutor(cfg.workers) as pool:
            grouped = list(
                pool.map(
                    run_cell_group,
                    [cfg] * len(work),
                    [seed for seed, _ in work],
                    [cells for _, cells in work],
                )
            )
    elif cfg.executor == "celery":
        grouped = _run_celery(cfg, work)
    else:
        grouped = [run_cell_group(cfg, seed, cells) for seed, cells in work]

    order = {cell.name: i for i, cell in enumerate(cfg.cells)}
    reports = [report for group in grouped for report in group]
    return sorted(reports, key=lambda r: (cfg.seeds.index(r.seed), order[r.cell]))
