"""
Base-station state and the message handler that mutates it.

Published graphs are never mutated: every change builds a new `PoseGraph` and
swaps it in, so readers holding a snapshot never see a half-applied batch.
"""

import time
from collections import deque
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field

from burrow.backend.export import format_trajectory, write_trajectory
from burrow.backend.gnc import GncParams
from burrow.backend.icm import IcmParams
from burrow.backend.lm import OptimizationResult
from burrow.backend.mapping import assemble_map
from burrow.backend.robust import optimize_graph
from burrow.config import Config, InitializerName, OutlierMode
from burrow.geometry.se3 import Pose6, se3_compose
from burrow.graph.io import write_graph
from burrow.graph.model import (
    EdgeKind,
    KeyedScan,
    NodeKey,
    PoseGraph,
    make_prior,
    merge_segment,
)
from burrow.graph.scans import MAP_KEY, encode_scan, write_scan
from burrow.loops.candidates import GenerationConfig
from burrow.loops.computation import Initializer, LoopEdgeCandidateResult
from burrow.loops.frontend import LoopFrontend
from burrow.loops.prioritization import ObservabilityScorer, QueueOrderScorer
from burrow.monitoring.decorators import monitor
from burrow.monitoring.loggers import get_logger, log_context
from burrow.monitoring.metrics import GRAPH_NODES, STATION_MESSAGES
from burrow.registration.types import AlignmentParams
from burrow.station.protocol import (
    Ack,
    ClientMessage,
    Error,
    ErrorCode,
    Hello,
    MapReply,
    Message,
    RequestMap,
    RequestTrajectory,
    Segment,
    SegmentBatch,
    TrajectoryReply,
    TriggerOptimize,
)
from burrow.utils.exceptions import (
    GraphError,
    OptimizationError,
    SegmentConflictError,
    SegmentGapError,
)

log = get_logger(__name__)


class StationConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(default=0.2, gt=0)
    budget: int = Field(default=5, ge=1)
    outlier_mode: OutlierMode = "icm+gnc"
    initializer: InitializerName = "sample-consensus"
    auto_optimize_every: int = Field(default=10, ge=0)
    loop_closure: bool = True
    inter_robot: bool = True
    prioritize: bool = True
    fixed_radius: float | None = Field(default=None, gt=0)
    map_voxel: float = Field(default=0.2, gt=0)
    alignment: AlignmentParams = Field(default_factory=AlignmentParams)
    gnc: GncParams = Field(default_factory=GncParams)
    icm: IcmParams = Field(default_factory=IcmParams)

    @classmethod
    def from_settings(cls, settings: Config, **overrides: object) -> "StationConfig":
        values: dict[str, object] = {
            "alpha": settings.ALPHA,
            "budget": settings.TICK_BUDGET,
            "outlier_mode": settings.OUTLIER_MODE,
            "initializer": settings.INITIALIZER,
            "auto_optimize_every": settings.AUTO_OPTIMIZE_EVERY,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.model_validate(values)

    def generation(self) -> GenerationConfig:
        return GenerationConfig(
            alpha=self.alpha,
            inter_robot=self.inter_robot,
            fixed_radius=self.fixed_radius,
        )


@dataclass
class RobotSession:
    robot_id: int
    calibration: Pose6
    last_sequence: int = 0
    last_index: int | None = None
    last_contact: float = field(default_factory=time.monotonic)


class StationState:
    """Merged graph, scan store, loop front-end and latest optimization."""

    def __init__(self, config: StationConfig | None = None) -> None:
        self.config = config or StationConfig()
        self.graph = PoseGraph()
        self.scans: dict[NodeKey, KeyedScan] = {}
        self.sessions: dict[int, RobotSession] = {}
        self.result: OptimizationResult | None = None
        self.new_nodes: deque[NodeKey] = deque()
        self.loop_results: list[LoopEdgeCandidateResult] = []
        self.accepted_since_optimize = 0
        self.frontend = LoopFrontend(
            params=self.config.alignment,
            generation=self.config.generation(),
            initializer=Initializer(self.config.initializer),
            budget=self.config.budget,
            scorer=(
                ObservabilityScorer() if self.config.prioritize else QueueOrderScorer()
            ),
        )

    def snapshot(self) -> tuple[PoseGraph, dict[NodeKey, KeyedScan]]:
        return self.graph, dict(self.scans)

    def estimates(self) -> dict[NodeKey, Pose6]:
        # optimized poses are written back into the graph
        return self.graph.poses()

    def inlier_counts(self) -> dict[NodeKey, int]:
        return self.result.inlier_loop_counts() if self.result is not None else {}

    # --- writes ---
    def apply_batch(self, robot_id: int, segments: Sequence[Segment]) -> list[NodeKey]:
        """
        Merge every segment and store its scans, all or nothing.

        Raises:
            SegmentGapError, SegmentConflictError: from `merge_segment`.
            GraphError: if a segment holds another robot's nodes.
        """
        session = self.sessions[robot_id]
        graph = self.graph
        scans: dict[NodeKey, KeyedScan] = {}
        fresh: list[NodeKey] = []
        for segment in segments:
            if any(k.robot_id != robot_id for k in segment.graph.nodes):
                raise GraphError(f"segment for robot {robot_id} holds foreign nodes")
            incoming = self._anchor(graph, segment.graph, session)
            before = set(graph.nodes)
            graph = merge_segment(graph, incoming)
            fresh.extend(sorted(set(graph.nodes) - before))
            for scan in segment.scans:
                if scan.key in graph.nodes:
                    scans[scan.key] = scan
                else:
                    log.warning("dropping scan %s without a node", scan.key)
        self.graph = graph
        self.scans.update(scans)
        if fresh:
            session.last_index = fresh[-1].index
            if self.config.loop_closure:
                self.new_nodes.extend(fresh)
        GRAPH_NODES.set(len(graph))
        return fresh

    @staticmethod
    def _anchor(
        graph: PoseGraph, segment: PoseGraph, session: RobotSession
    ) -> PoseGraph:
        """
        A robot's first segment must start at index 0; its first node gets a
        prior at calibration * pose when the segment carries none.
        """
        if graph.robot_keys(session.robot_id) or not segment.nodes:
            return segment
        first = min(segment.nodes)
        if first.index != 0:
            raise SegmentGapError(session.robot_id, 0, first.index)
        if any(
            e.kind is EdgeKind.PRIOR and e.source == first for e in segment.edges
        ):
            return segment
        anchored = segment.copy()
        pose = se3_compose(session.calibration, segment.nodes[first].pose)
        anchored.add_edge(make_prior(first, pose))
        return anchored

    def add_loop_results(self, results: Sequence[LoopEdgeCandidateResult]) -> int:
        """Commit accepted loop edges whose endpoints are in the graph."""
        self.loop_results.extend(results)
        edges = [
            r.edge
            for r in results
            if r.accepted
            and r.edge is not None
            and r.edge.source in self.graph.nodes
            and r.edge.target in self.graph.nodes
        ]
        if edges:
            graph = self.graph.copy()
            graph.edges.extend(edges)
            self.graph = graph
            self.accepted_since_optimize += len(edges)
        return len(edges)

    def optimize(self) -> OptimizationResult | None:
        if not self.graph.nodes:
            return None
        result = optimize_graph(
            self.graph, self.config.outlier_mode, self.config.gnc, self.config.icm
        )
        self.result = result
        self.graph = result.apply(self.graph)
        self.accepted_since_optimize = 0
        return result

    def optimize_due(self) -> bool:
        every = self.config.auto_optimize_every
        return every > 0 and self.accepted_since_optimize >= every

    def process_loops(self, limit: int | None = None) -> list[LoopEdgeCandidateResult]:
        """Run one front-end tick per new node, committing results as they come."""
        results: list[LoopEdgeCandidateResult] = []
        while self.new_nodes and (limit is None or len(results) < limit):
            node = self.new_nodes.popleft()
            batch = self.frontend.tick(self.graph, self.scans, node)
            self.add_loop_results(batch)
            results.extend(batch)
            if self.optimize_due():
                self.optimize()
        return results

    # --- persistence ---
    def save(self, out_dir: Path) -> None:
        """graph.g2o, trajectory.csv, map.kscn and scans/<robot>_<index>.kscn."""
        out_dir.mkdir(parents=True, exist_ok=True)
        graph, scans = self.snapshot()
        write_graph(graph, out_dir / "graph.g2o")
        write_trajectory(
            out_dir / "trajectory.csv", self.estimates(), self.inlier_counts()
        )
        assembly = assemble_map(self.estimates(), scans, self.config.map_voxel)
        if len(assembly.cloud):
            write_scan(KeyedScan(MAP_KEY, assembly.cloud), out_dir / "map.kscn")
        for key, scan in scans.items():
            write_scan(scan, out_dir / "scans" / f"{key.robot_id}_{key.index}.kscn")
        log.info("station state saved to %s (%d nodes)", out_dir, len(graph))


def _error(
    code: ErrorCode, text: str, session: RobotSession | None, robot_id: int
) -> Error:
    last = session.last_sequence if session is not None else 0
    return Error(code, text, robot_id, last)


@monitor("handle_message", log_calls=False)
def handle_message(
    state: StationState, message: ClientMessage, now: float | None = None
) -> list[Message]:
    """
    Apply one client message and return the replies.

    Hello must precede everything else from a robot. A SegmentBatch whose
    sequence was already applied is acknowledged without being re-applied.
    Index gaps answer Error(GAP) carrying the last applied sequence, conflicts
    Error(CONFLICT). TriggerOptimize runs the configured outlier handling and
    optimization, answering Error(OPTIMIZE_FAILED) when the solver gives up;
    requests answer from the current snapshot.
    """
    kind = type(message).__name__
    robot_id = message.robot_id
    session = state.sessions.get(robot_id)
    with log_context(robot_id=robot_id, sequence=message.sequence, message_type=kind):
        if isinstance(message, Hello):
            if session is None:
                session = RobotSession(robot_id, message.calibration)
                state.sessions[robot_id] = session
                log.info("robot %d joined", robot_id)
            session.last_contact = now if now is not None else time.monotonic()
            STATION_MESSAGES.labels(message_type=kind, outcome="ok").inc()
            return [Ack(robot_id, session.last_sequence)]

        if session is None:
            STATION_MESSAGES.labels(message_type=kind, outcome="no_hello").inc()
            return [_error(ErrorCode.NO_HELLO, "send Hello first", None, robot_id)]
        session.last_contact = now if now is not None else time.monotonic()

        replies = _dispatch(state, session, message)
        outcome = "error" if any(isinstance(r, Error) for r in replies) else "ok"
        STATION_MESSAGES.labels(message_type=kind, outcome=outcome).inc()
        return replies


def _dispatch(
    state: StationState, session: RobotSession, message: ClientMessage
) -> list[Message]:
    robot_id = session.robot_id
    match message:
        case SegmentBatch(sequence=sequence, segments=segments):
            if sequence <= session.last_sequence:
                log.debug("duplicate batch %d acknowledged", sequence)
                return [Ack(robot_id, sequence)]
            try:
                state.apply_batch(robot_id, segments)
            except SegmentGapError as exc:
                log.warning("gap in batch %d: %s", sequence, exc)
                return [_error(ErrorCode.GAP, str(exc), session, robot_id)]
            except SegmentConflictError as exc:
                log.warning("conflict in batch %d: %s", sequence, exc)
                return [_error(ErrorCode.CONFLICT, str(exc), session, robot_id)]
            except GraphError as exc:
                return [_error(ErrorCode.BAD_REQUEST, str(exc), session, robot_id)]
            session.last_sequence = sequence
            return [Ack(robot_id, sequence)]
        case TriggerOptimize(sequence=sequence):
            try:
                state.optimize()
            except OptimizationError as exc:
                log.error("optimization failed: %s", exc)
                code = ErrorCode.OPTIMIZE_FAILED
                return [_error(code, str(exc), session, robot_id)]
            return [Ack(robot_id, sequence)]
        case RequestTrajectory():
            csv = format_trajectory(state.estimates(), state.inlier_counts())
            return [TrajectoryReply(csv)]
        case RequestMap(voxel=voxel):
            _, scans = state.snapshot()
            assembly = assemble_map(state.estimates(), scans, voxel)
            if not len(assembly.cloud):
                empty = _error(ErrorCode.BAD_REQUEST, "map is empty", session, robot_id)
                return [empty]
            return [MapReply(encode_scan(KeyedScan(MAP_KEY, assembly.cloud)))]
    return [_error(ErrorCode.BAD_REQUEST, f"unexpected {message!r}", session, robot_id)]
