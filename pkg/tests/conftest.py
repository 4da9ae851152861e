import numpy as np
import numpy.typing as npt
import pytest
from prometheus_client import CollectorRegistry

from burrow.geometry.se3 import Pose6, se3_between
from burrow.graph.model import (
    DEFAULT_ODOMETRY_INFORMATION,
    EdgeKind,
    GraphEdge,
    GraphNode,
    NodeKey,
    PoseGraph,
    make_prior,
)


@pytest.fixture
def fresh_registry() -> CollectorRegistry:
    """
    Provide a fresh Prometheus CollectorRegistry for each test.

    Metrics registered in one test would otherwise collide with the same names
    in another, since Prometheus disallows duplicates in one registry.
    """
    return CollectorRegistry()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(7)


def room_points(
    rng: np.random.Generator, count: int = 3000
) -> npt.NDArray[np.float64]:
    """
    Points on the walls, floor and ceiling of an asymmetric 12 x 7 x 3 m room
    with a pillar and a step, so every rigid motion is observable.
    """
    faces = [
        # (fixed axis, value, (low, high) of the two free axes)
        (0, -5.0, (-3.0, 4.0), (0.0, 3.0)),
        (0, 7.0, (-3.0, 4.0), (0.0, 3.0)),
        (1, -3.0, (-5.0, 7.0), (0.0, 3.0)),
        (1, 4.0, (-5.0, 7.0), (0.0, 3.0)),
        (2, 0.0, (-5.0, 7.0), (-3.0, 4.0)),
        (2, 3.0, (-5.0, 7.0), (-3.0, 4.0)),
        # pillar
        (0, 1.0, (0.5, 1.5), (0.0, 3.0)),
        (1, 0.5, (1.0, 2.0), (0.0, 3.0)),
        # step along one wall
        (2, 0.6, (3.0, 7.0), (-3.0, -1.5)),
        (1, -1.5, (3.0, 7.0), (0.0, 0.6)),
    ]
    per_face = count // len(faces)
    parts = []
    for axis, value, (a_low, a_high), (b_low, b_high) in faces:
        free = [i for i in range(3) if i != axis]
        pts = np.empty((per_face, 3))
        pts[:, axis] = value
        pts[:, free[0]] = rng.uniform(a_low, a_high, per_face)
        pts[:, free[1]] = rng.uniform(b_low, b_high, per_face)
        parts.append(pts)
    return np.concatenate(parts)


@pytest.fixture
def room(rng: np.random.Generator) -> npt.NDArray[np.float64]:
    return room_points(rng)


def chain_graph(
    poses: list[Pose6],
    robot_id: int = 0,
    *,
    prior: bool = True,
    information: npt.NDArray[np.float64] = DEFAULT_ODOMETRY_INFORMATION,
) -> PoseGraph:
    """Odometry chain through `poses` with exact measurements and a first-node prior."""
    graph = PoseGraph()
    distance = 0.0
    for index, pose in enumerate(poses):
        key = NodeKey(robot_id, index)
        if index:
            distance += float(np.linalg.norm(pose.t - poses[index - 1].t))
            graph.add_edge(
                GraphEdge(
                    NodeKey(robot_id, index - 1),
                    key,
                    EdgeKind.ODOMETRY,
                    se3_between(poses[index - 1], pose),
                    information,
                )
            )
        graph.nodes[key] = GraphNode(key, pose, distance)
    if prior and poses:
        graph.add_edge(make_prior(NodeKey(robot_id, 0), poses[0]))
    return graph


def straight_line(count: int, step: float = 1.0, y: float = 0.0) -> list[Pose6]:
    return [Pose6(translation=(i * step, y, 0.0)) for i in range(count)]


def square_loop(side: int = 4, step: float = 1.0) -> list[Pose6]:
    """Poses around a square, turning 90 degrees at each corner."""
    poses: list[Pose6] = []
    position = np.zeros(3)
    heading = 0.0
    for _ in range(4):
        direction = np.array(
            [np.cos(np.radians(heading)), np.sin(np.radians(heading)), 0.0]
        )
        for _ in range(side):
            poses.append(Pose6.from_yaw(heading, position.copy()))
            position = position + step * direction
        heading += 90.0
    return poses
