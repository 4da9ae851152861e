"""
Pose graph value types and segment merging.

A `PoseGraph` holds keyed nodes of every robot plus odometry, loop-closure and
prior edges. Information matrices are 6x6 in rotation-first twist ordering.
"""

from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from enum import StrEnum
from typing import NamedTuple

import numpy as np
import numpy.typing as npt
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from burrow.geometry.se3 import Pose6, se3_compose
from burrow.utils.exceptions import (
    GraphValidationError,
    SegmentConflictError,
    SegmentGapError,
)

# rot 25, trans 100: sigma_rot ~ 0.2 rad, sigma_t ~ 0.1 m
DEFAULT_ODOMETRY_INFORMATION = np.diag([25.0, 25.0, 25.0, 100.0, 100.0, 100.0])
DEFAULT_PRIOR_INFORMATION = np.diag([1e6] * 6)


class NodeKey(NamedTuple):
    robot_id: int
    index: int

    def __str__(self) -> str:
        return f"{self.robot_id}:{self.index}"


class EdgeKind(StrEnum):
    ODOMETRY = "ODOM"
    LOOP_CLOSURE = "LOOP"
    PRIOR = "PRIOR"


def check_information(information: npt.ArrayLike) -> npt.NDArray[np.float64]:
    """
    Validate a 6x6 information matrix.

    Raises:
        GraphValidationError: if it is not symmetric within 1e-9 or not
            positive-definite.
    """
    info = np.asarray(information, dtype=np.float64)
    if info.shape != (6, 6) or not np.all(np.isfinite(info)):
        raise GraphValidationError(f"information must be a finite 6x6 matrix: {info}")
    if not np.allclose(info, info.T, atol=1e-9, rtol=0.0):
        raise GraphValidationError("information matrix is not symmetric")
    try:
        np.linalg.cholesky(info)
    except np.linalg.LinAlgError:
        raise GraphValidationError(
            "information matrix is not positive-definite"
        ) from None
    return info


@dataclass(frozen=True)
class GraphNode:
    key: NodeKey
    pose: Pose6
    odometric_distance: float = 0.0


@dataclass(frozen=True, eq=False)
class GraphEdge:
    """
    A relative-pose measurement from `source` to `target`.

    Prior edges store the absolute pose in `measurement`; `target` is ignored
    and conventionally equal to `source`.
    """

    source: NodeKey
    target: NodeKey
    kind: EdgeKind
    measurement: Pose6
    information: npt.NDArray[np.float64] = field(
        default_factory=lambda: DEFAULT_ODOMETRY_INFORMATION.copy()
    )

    def __post_init__(self) -> None:
        info = np.array(self.information, dtype=np.float64)
        info.setflags(write=False)
        object.__setattr__(self, "information", info)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GraphEdge):
            return NotImplemented
        return (
            self.source == other.source
            and self.target == other.target
            and self.kind == other.kind
            and self.measurement == other.measurement
            and np.array_equal(self.information, other.information)
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def endpoints(self) -> tuple[NodeKey, NodeKey]:
        return self.source, self.target


@dataclass(frozen=True, eq=False)
class KeyedScan:
    """The downsampled cloud of a key node, body frame, stored as float32."""

    key: NodeKey
    cloud: npt.NDArray[np.float32]

    def __post_init__(self) -> None:
        cloud = np.ascontiguousarray(self.cloud, dtype=np.float32).reshape(-1, 3)
        if cloud.shape[0] == 0:
            raise GraphValidationError(f"keyed scan {self.key} has an empty cloud")
        if not np.all(np.isfinite(cloud)):
            raise GraphValidationError(f"keyed scan {self.key} has non-finite points")
        cloud.setflags(write=False)
        object.__setattr__(self, "cloud", cloud)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KeyedScan):
            return NotImplemented
        return self.key == other.key and np.array_equal(self.cloud, other.cloud)

    __hash__ = None  # type: ignore[assignment]

    def points(self) -> npt.NDArray[np.float64]:
        return self.cloud.astype(np.float64)


class PoseGraph:
    """
    Keyed nodes of one or more robots plus their edges.

    Treated as a value: `merge_segment` and the optimizers return new graphs and
    leave their inputs untouched.
    """

    def __init__(
        self,
        nodes: Iterable[GraphNode] = (),
        edges: Iterable[GraphEdge] = (),
    ) -> None:
        self.nodes: dict[NodeKey, GraphNode] = {n.key: n for n in nodes}
        self.edges: list[GraphEdge] = list(edges)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PoseGraph):
            return NotImplemented
        return self.nodes == other.nodes and self.edges == other.edges

    def __repr__(self) -> str:
        return f"PoseGraph(nodes={len(self.nodes)}, edges={len(self.edges)})"

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, key: object) -> bool:
        return key in self.nodes

    def copy(self) -> "PoseGraph":
        clone = PoseGraph()
        clone.nodes = dict(self.nodes)
        clone.edges = list(self.edges)
        return clone

    # --- queries ---
    def robots(self) -> list[int]:
        return sorted({k.robot_id for k in self.nodes})

    def robot_keys(self, robot_id: int) -> list[NodeKey]:
        return sorted(k for k in self.nodes if k.robot_id == robot_id)

    def last_index(self, robot_id: int) -> int | None:
        keys = self.robot_keys(robot_id)
        return keys[-1].index if keys else None

    def edges_of_kind(self, kind: EdgeKind) -> list[GraphEdge]:
        return [e for e in self.edges if e.kind is kind]

    def loop_edges(self) -> list[tuple[int, GraphEdge]]:
        """(position in `edges`, edge) for every loop closure."""
        return [
            (i, e) for i, e in enumerate(self.edges) if e.kind is EdgeKind.LOOP_CLOSURE
        ]

    def odometry_edge_into(self, key: NodeKey) -> GraphEdge | None:
        for edge in self.edges:
            if edge.kind is EdgeKind.ODOMETRY and edge.target == key:
                return edge
        return None

    def poses(self) -> dict[NodeKey, Pose6]:
        return {k: n.pose for k, n in self.nodes.items()}

    def connected_components(self) -> list[set[NodeKey]]:
        """Components over all non-prior edges, sorted by their smallest key."""
        keys = sorted(self.nodes)
        if not keys:
            return []
        index = {k: i for i, k in enumerate(keys)}
        rows, cols = [], []
        for edge in self.edges:
            if edge.kind is EdgeKind.PRIOR:
                continue
            rows.append(index[edge.source])
            cols.append(index[edge.target])
        adjacency = coo_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(len(keys), len(keys))
        )
        count, labels = connected_components(adjacency, directed=False)
        components: list[set[NodeKey]] = [set() for _ in range(count)]
        for key, label in zip(keys, labels, strict=True):
            components[label].add(key)
        return sorted(components, key=min)

    def validate(self) -> None:
        """
        Check the structural invariants.

        Raises:
            GraphValidationError: on dangling endpoints, bad information matrices,
                odometry edges that skip indices or odometric distances that
                decrease along a chain.
        """
        for edge in self.edges:
            if edge.source not in self.nodes:
                raise GraphValidationError(f"edge endpoint {edge.source} not in graph")
            if edge.kind is not EdgeKind.PRIOR and edge.target not in self.nodes:
                raise GraphValidationError(f"edge endpoint {edge.target} not in graph")
            check_information(edge.information)
            if edge.kind is EdgeKind.ODOMETRY and (
                edge.source.robot_id != edge.target.robot_id
                or edge.target.index != edge.source.index + 1
            ):
                raise GraphValidationError(
                    f"odometry edge {edge.source}->{edge.target} is not consecutive"
                )
        for robot in self.robots():
            previous: GraphNode | None = None
            for key in self.robot_keys(robot):
                node = self.nodes[key]
                if (
                    previous is not None
                    and node.odometric_distance < previous.odometric_distance
                ):
                    raise GraphValidationError(
                        f"odometric distance decreases at {key}"
                    )
                previous = node

    def with_poses(self, poses: dict[NodeKey, Pose6]) -> "PoseGraph":
        """Copy of the graph with node estimates replaced where given."""
        clone = self.copy()
        for key, pose in poses.items():
            node = clone.nodes.get(key)
            if node is not None:
                clone.nodes[key] = GraphNode(key, pose, node.odometric_distance)
        return clone

    def add_edge(self, edge: GraphEdge) -> None:
        self.edges.append(edge)

    def __iter__(self) -> Iterator[GraphNode]:
        return iter(self.nodes[k] for k in sorted(self.nodes))


def _same_node(existing: GraphNode, incoming: GraphNode) -> bool:
    return existing.odometric_distance == incoming.odometric_distance


def merge_segment(graph: PoseGraph, segment: PoseGraph) -> PoseGraph:
    """
    Merge a robot's pose-graph segment into `graph`, returning the union.

    The segment's node indices must continue the robot's chain (first new index
    = last existing index + 1, or any start for a fresh robot). Keys already in
    the graph are accepted only if identical and are otherwise ignored. New node
    estimates are chained from the last estimate through the odometry
    measurements; a fresh robot starts at the segment's prior (or its first node
    pose when the segment carries none).

    Raises:
        SegmentGapError: if the new indices do not continue the chain, or an
            odometry edge into a new node starts at a node neither graph has.
        SegmentConflictError: if a duplicate key or edge differs from the stored one.
    """
    merged = graph.copy()
    for robot in segment.robots():
        _merge_robot(merged, segment, robot)
    return merged


def _merge_robot(merged: PoseGraph, segment: PoseGraph, robot: int) -> None:
    incoming = segment.robot_keys(robot)
    last = merged.last_index(robot)
    stored_odometry = {
        e.target: e
        for e in merged.edges
        if e.kind is EdgeKind.ODOMETRY and e.target.robot_id == robot
    }
    odometry = {
        e.target: e
        for e in segment.edges
        if e.kind is EdgeKind.ODOMETRY and e.target.robot_id == robot
    }

    known = [k for k in incoming if k in merged.nodes]
    fresh = [k for k in incoming if k not in merged.nodes]
    for key in known:
        if not _same_node(merged.nodes[key], segment.nodes[key]):
            raise SegmentConflictError(key, "odometric distance differs")
        stored, arriving = stored_odometry.get(key), odometry.get(key)
        if stored is not None and arriving is not None and stored != arriving:
            raise SegmentConflictError(key, "odometry measurement differs")

    if fresh:
        expected = fresh[0].index if last is None else last + 1
        for offset, key in enumerate(fresh):
            if key.index != expected + offset:
                raise SegmentGapError(robot, expected + offset, key.index)
        present = merged.nodes.keys() | set(fresh)
        for key in fresh:
            edge = odometry.get(key)
            if edge is not None and edge.source not in present:
                raise SegmentGapError(robot, edge.source.index, key.index)

    priors = {
        e.source: e
        for e in segment.edges
        if e.kind is EdgeKind.PRIOR and e.source.robot_id == robot
    }
    for key in fresh:
        node = segment.nodes[key]
        previous_key = NodeKey(robot, key.index - 1)
        edge = odometry.get(key)
        if previous_key in merged.nodes and edge is not None:
            pose = se3_compose(merged.nodes[previous_key].pose, edge.measurement)
        elif key in priors:
            pose = priors[key].measurement
        else:
            pose = node.pose
        merged.nodes[key] = GraphNode(key, pose, node.odometric_distance)

    fresh_keys = set(fresh)
    anchored = {e.source for e in merged.edges if e.kind is EdgeKind.PRIOR}
    for edge in segment.edges:
        if edge.source.robot_id != robot:
            continue
        if edge.kind is EdgeKind.PRIOR:
            if edge.source in anchored:
                continue
            anchored.add(edge.source)
        elif edge.target not in fresh_keys:
            # odometry into a known node was checked above
            continue
        merged.edges.append(edge)


def make_prior(
    key: NodeKey, pose: Pose6, information: npt.ArrayLike | None = None
) -> GraphEdge:
    """Prior edge anchoring `key` at the absolute `pose`."""
    info = DEFAULT_PRIOR_INFORMATION if information is None else information
    return GraphEdge(key, key, EdgeKind.PRIOR, pose, np.asarray(info, dtype=np.float64))
