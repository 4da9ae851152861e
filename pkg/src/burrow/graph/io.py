"""
Line-oriented pose-graph text format.

    # BURROW_GRAPH 1
    VERTEX_SE3 <robot> <index> <tx> <ty> <tz> <qw> <qx> <qy> <qz> [<odometric_distance>]
    EDGE_SE3 <ODOM|LOOP> <robot_a> <idx_a> <robot_b> <idx_b> <pose x7> <info x21>
    PRIOR_SE3 <robot> <index> <pose x7> <info x21>

Information matrices are written as the 21 upper-triangular entries, row-major,
with translation first; in memory they are rotation-first. Floats are written
with `repr` so a round trip is exact.
"""  # noqa: E501

from collections.abc import Iterable
from pathlib import Path

import numpy as np
import numpy.typing as npt

from burrow.geometry.se3 import Pose6
from burrow.graph.model import (
    EdgeKind,
    GraphEdge,
    GraphNode,
    NodeKey,
    PoseGraph,
    check_information,
)
from burrow.utils.exceptions import GraphParseError, GraphValidationError

HEADER = "# BURROW_GRAPH 1"

# rotation-first <-> translation-first; the permutation is its own inverse
_SWAP = np.array([3, 4, 5, 0, 1, 2])
_UPPER = np.triu_indices(6)


def _fmt(values: Iterable[float | int]) -> str:
    return " ".join(repr(v) if isinstance(v, float) else str(v) for v in values)


def _info_to_disk(information: npt.NDArray[np.float64]) -> list[float]:
    disk = information[np.ix_(_SWAP, _SWAP)]
    return [float(v) for v in disk[_UPPER]]


def _info_from_disk(values: list[float]) -> npt.NDArray[np.float64]:
    disk = np.zeros((6, 6))
    disk[_UPPER] = values
    disk = disk + np.triu(disk, 1).T
    return disk[np.ix_(_SWAP, _SWAP)]


def _pose_from(values: list[float]) -> Pose6:
    tx, ty, tz, qw, qx, qy, qz = values
    return Pose6((qw, qx, qy, qz), (tx, ty, tz))


def serialize_graph(graph: PoseGraph) -> str:
    """Render `graph` in the text format; nodes sorted by key, edges in order."""
    lines = [HEADER]
    for node in graph:
        lines.append(
            "VERTEX_SE3 "
            + _fmt(
                [
                    node.key.robot_id,
                    node.key.index,
                    *node.pose.as_vector(),
                    float(node.odometric_distance),
                ]
            )
        )
    for edge in graph.edges:
        info = _info_to_disk(edge.information)
        if edge.kind is EdgeKind.PRIOR:
            fields = [*edge.source, *edge.measurement.as_vector(), *info]
            lines.append("PRIOR_SE3 " + _fmt(fields))
        else:
            fields = [
                *edge.source,
                *edge.target,
                *edge.measurement.as_vector(),
                *info,
            ]
            lines.append(f"EDGE_SE3 {edge.kind.value} " + _fmt(fields))
    return "\n".join(lines) + "\n"


def _ints(tokens: list[str], line_number: int) -> list[int]:
    try:
        values = [int(t) for t in tokens]
    except ValueError:
        raise GraphParseError(line_number, f"expected integers, got {tokens}") from None
    if any(v < 0 for v in values):
        raise GraphParseError(line_number, "robot ids and indices must be >= 0")
    return values


def _floats(tokens: list[str], line_number: int) -> list[float]:
    try:
        values = [float(t) for t in tokens]
    except ValueError:
        raise GraphParseError(line_number, f"expected numbers, got {tokens}") from None
    if not all(np.isfinite(values)):
        raise GraphParseError(line_number, "non-finite value")
    return values


def _parse_line(
    tokens: list[str], line_number: int, nodes: list[GraphNode], edges: list[GraphEdge]
) -> None:
    record = tokens[0]
    if record == "VERTEX_SE3":
        if len(tokens) not in (10, 11):
            raise GraphParseError(line_number, f"VERTEX_SE3 has {len(tokens)} fields")
        robot, index = _ints(tokens[1:3], line_number)
        values = _floats(tokens[3:], line_number)
        distance = values[7] if len(values) == 8 else 0.0
        try:
            pose = _pose_from(values[:7])
        except ValueError as exc:
            raise GraphParseError(line_number, str(exc)) from None
        nodes.append(GraphNode(NodeKey(robot, index), pose, distance))
    elif record == "EDGE_SE3":
        if len(tokens) != 34:
            raise GraphParseError(line_number, f"EDGE_SE3 has {len(tokens)} fields")
        try:
            kind = EdgeKind(tokens[1])
        except ValueError:
            raise GraphParseError(
                line_number, f"unknown edge kind {tokens[1]}"
            ) from None
        if kind is EdgeKind.PRIOR:
            raise GraphParseError(line_number, "priors use PRIOR_SE3 records")
        ra, ia, rb, ib = _ints(tokens[2:6], line_number)
        values = _floats(tokens[6:], line_number)
        info = check_information(_info_from_disk(values[7:]))
        try:
            pose = _pose_from(values[:7])
        except ValueError as exc:
            raise GraphParseError(line_number, str(exc)) from None
        edges.append(GraphEdge(NodeKey(ra, ia), NodeKey(rb, ib), kind, pose, info))
    elif record == "PRIOR_SE3":
        if len(tokens) != 31:
            raise GraphParseError(line_number, f"PRIOR_SE3 has {len(tokens)} fields")
        robot, index = _ints(tokens[1:3], line_number)
        values = _floats(tokens[3:], line_number)
        info = check_information(_info_from_disk(values[7:]))
        try:
            pose = _pose_from(values[:7])
        except ValueError as exc:
            raise GraphParseError(line_number, str(exc)) from None
        key = NodeKey(robot, index)
        edges.append(GraphEdge(key, key, EdgeKind.PRIOR, pose, info))
    else:
        raise GraphParseError(line_number, f"unknown record {record!r}")


def parse_graph(text: str, *, validate: bool = True) -> PoseGraph:
    """
    Parse the text format.

    Blank lines and `#` comments are skipped. With `validate` the structural
    invariants are checked; segments on the wire reference the previous batch's
    last node and are parsed with `validate=False`.

    Raises:
        GraphParseError: on a malformed line (with its 1-based number).
        GraphValidationError: on a non-PSD information matrix or, when
            validating, a dangling endpoint or a duplicate vertex.
    """
    nodes: list[GraphNode] = []
    edges: list[GraphEdge] = []
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        _parse_line(line.split(), line_number, nodes, edges)

    graph = PoseGraph(nodes, edges)
    if len(graph.nodes) != len(nodes):
        raise GraphValidationError("duplicate VERTEX_SE3 keys")
    if validate:
        graph.validate()
    return graph


def write_graph(graph: PoseGraph, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize_graph(graph), encoding="utf-8")


def read_graph(path: Path) -> PoseGraph:
    return parse_graph(path.read_text(encoding="utf-8"))
