"""
Incremental consistency maximization: cycle checks of loop closures against
odometry and against loops accepted earlier.

Uncertain poses use the right-perturbation convention T = T_hat Exp(e),
e ~ N(0, covariance).
"""

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field

from burrow.backend.gnc import default_barc
from burrow.geometry.lie import adjoint
from burrow.geometry.se3 import Pose6, se3_compose, se3_inverse, se3_log
from burrow.graph.model import EdgeKind, GraphEdge, NodeKey, PoseGraph
from burrow.monitoring.loggers import get_logger
from burrow.utils.exceptions import GimbalBoundaryError

log = get_logger(__name__)

FloatArray = npt.NDArray[np.float64]


class IcmParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    threshold: float = Field(default_factory=default_barc, gt=0)
    pairwise: bool = True


def _adjoint(pose: Pose6) -> FloatArray:
    return adjoint(pose.rotation_matrix, pose.t)


@dataclass(frozen=True)
class UncertainPose:
    pose: Pose6
    covariance: FloatArray = field(default_factory=lambda: np.zeros((6, 6)))

    @classmethod
    def from_edge(cls, edge: GraphEdge) -> "UncertainPose":
        return cls(edge.measurement, np.linalg.inv(edge.information))

    def compose(self, other: "UncertainPose") -> "UncertainPose":
        ad = _adjoint(se3_inverse(other.pose))
        return UncertainPose(
            se3_compose(self.pose, other.pose),
            ad @ self.covariance @ ad.T + other.covariance,
        )

    def inverse(self) -> "UncertainPose":
        ad = _adjoint(self.pose)
        return UncertainPose(se3_inverse(self.pose), ad @ self.covariance @ ad.T)

    def mahalanobis(self) -> float:
        """Distance of this pose from identity under its covariance."""
        r = se3_log(self.pose)
        covariance = 0.5 * (self.covariance + self.covariance.T)
        return float(np.sqrt(max(r @ np.linalg.solve(covariance, r), 0.0)))


class OdometryChains:
    """
    Odometry composition between any two nodes of a robot's unbroken chain.

    Keeps per-node prefix poses P_i and prefix sums of the edge covariances
    mapped through Ad(P_{k+1}), so the covariance of the chain x -> y is
    Ad(P_y^-1) (S_y - S_x) Ad(P_y^-1)^T without walking the chain.
    """

    def __init__(self, graph: PoseGraph) -> None:
        into = {
            e.target: e for e in graph.edges if e.kind is EdgeKind.ODOMETRY
        }
        self._prefix: dict[NodeKey, tuple[int, Pose6, FloatArray]] = {}
        run = -1
        for robot in graph.robots():
            previous: NodeKey | None = None
            for key in graph.robot_keys(robot):
                edge = into.get(key)
                if previous is None or edge is None or edge.source != previous:
                    run += 1
                    self._prefix[key] = (run, Pose6.identity(), np.zeros((6, 6)))
                else:
                    _, pose, total = self._prefix[previous]
                    pose = se3_compose(pose, edge.measurement)
                    ad = _adjoint(pose)
                    covariance = np.linalg.inv(edge.information)
                    self._prefix[key] = (run, pose, total + ad @ covariance @ ad.T)
                previous = key

    def between(self, x: NodeKey, y: NodeKey) -> UncertainPose | None:
        """Odometry from x to y, or None when no unbroken chain joins them."""
        if x not in self._prefix or y not in self._prefix:
            return None
        run_x, pose_x, sum_x = self._prefix[x]
        run_y, pose_y, sum_y = self._prefix[y]
        if run_x != run_y:
            return None
        if x == y:
            return UncertainPose(Pose6.identity())
        if y.index < x.index:
            chain = self.between(y, x)
            return None if chain is None else chain.inverse()
        ad = _adjoint(se3_inverse(pose_y))
        covariance = ad @ (sum_y - sum_x) @ ad.T
        return UncertainPose(
            se3_compose(se3_inverse(pose_x), pose_y), 0.5 * (covariance + covariance.T)
        )


@dataclass
class IcmPartition:
    accepted: list[GraphEdge] = field(default_factory=list)
    rejected: list[GraphEdge] = field(default_factory=list)
    # accepted without any check being defined
    provisional: list[GraphEdge] = field(default_factory=list)


def _cycle_norm(parts: Iterable[UncertainPose]) -> float | None:
    cycle = UncertainPose(Pose6.identity())
    for part in parts:
        cycle = cycle.compose(part)
    try:
        return cycle.mahalanobis()
    except (GimbalBoundaryError, np.linalg.LinAlgError):
        return None


def _oriented(edge: GraphEdge, like: GraphEdge) -> UncertainPose:
    """`edge` as a measurement from the robot of like.source to that of like.target."""
    measurement = UncertainPose.from_edge(edge)
    if edge.source.robot_id == like.source.robot_id:
        return measurement
    return measurement.inverse()


def _flip(edge: GraphEdge, like: GraphEdge) -> tuple[NodeKey, NodeKey]:
    if edge.source.robot_id == like.source.robot_id:
        return edge.source, edge.target
    return edge.target, edge.source


def _robot_pair(edge: GraphEdge) -> frozenset[int]:
    return frozenset((edge.source.robot_id, edge.target.robot_id))


def odometry_consistency(
    chains: OdometryChains, loop: GraphEdge
) -> float | None:
    """Mahalanobis norm of the cycle loop^-1 * odometry(a -> b), if defined."""
    chain = chains.between(loop.source, loop.target)
    if chain is None:
        return None
    return _cycle_norm([UncertainPose.from_edge(loop).inverse(), chain])


def pairwise_consistency(
    chains: OdometryChains, loop: GraphEdge, other: GraphEdge
) -> float | None:
    """
    Mahalanobis norm of loop * odom(b -> d) * other^-1 * odom(c -> a), with
    `other` oriented c -> d along the robots of `loop` (a -> b).
    """
    c, d = _flip(other, loop)
    to_d = chains.between(loop.target, d)
    back = chains.between(c, loop.source)
    if to_d is None or back is None:
        return None
    return _cycle_norm(
        [UncertainPose.from_edge(loop), to_d, _oriented(other, loop).inverse(), back]
    )


def icm_filter(
    graph: PoseGraph,
    candidate_loops: Sequence[GraphEdge],
    params: IcmParams | None = None,
    accepted: Sequence[GraphEdge] = (),
) -> IcmPartition:
    """
    Accept loops one at a time.

    A loop passes when its odometry cycle (where a chain joins its endpoints)
    and its cycles with every already-accepted loop on the same robot pair are
    within `params.threshold`. A loop for which no check is defined is accepted
    provisionally and listed in `provisional`. `accepted` seeds the running set
    and is not repeated in the partition.
    """
    params = params or IcmParams()
    chains = OdometryChains(graph)
    running = list(accepted)
    partition = IcmPartition()
    for loop in candidate_loops:
        checked = False
        consistent = True
        norm = odometry_consistency(chains, loop)
        if norm is not None:
            checked = True
            consistent = norm <= params.threshold
        if consistent and params.pairwise:
            pair = _robot_pair(loop)
            for other in running:
                if _robot_pair(other) != pair:
                    continue
                norm = pairwise_consistency(chains, loop, other)
                if norm is None:
                    continue
                checked = True
                if norm > params.threshold:
                    consistent = False
                    break
        if not consistent:
            partition.rejected.append(loop)
            continue
        running.append(loop)
        partition.accepted.append(loop)
        if not checked:
            partition.provisional.append(loop)
    log.info(
        "icm: %d accepted (%d provisional), %d rejected",
        len(partition.accepted),
        len(partition.provisional),
        len(partition.rejected),
    )
    return partition


def filter_graph(
    graph: PoseGraph, params: IcmParams | None = None
) -> tuple[PoseGraph, IcmPartition]:
    """The graph with ICM-rejected loop edges removed, plus the partition."""
    loops = graph.edges_of_kind(EdgeKind.LOOP_CLOSURE)
    partition = icm_filter(graph, loops, params)
    rejected = {id(e) for e in partition.rejected}
    kept = graph.copy()
    kept.edges = [e for e in graph.edges if id(e) not in rejected]
    return kept, partition
