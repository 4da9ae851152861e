"""
Labeled loop closures: ground-truth loops and injected outliers.

Loop file, one edge per line:

    LOOP <robot:index> <robot:index> tx ty tz qw qx qy qz <inlier|outlier>
"""

import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from burrow.geometry.se3 import Pose6, se3_between, se3_compose
from burrow.graph.model import EdgeKind, GraphEdge, NodeKey
from burrow.loops.computation import loop_information
from burrow.sim.config import SimConfig
from burrow.utils.exceptions import SimulationError

# what a confident registration would report; used for injected and reloaded edges
LOOP_FILE_INFORMATION = loop_information(np.eye(6))
# injected rotation errors stay clear of the log singularity at pi
MAX_OUTLIER_ROTATION = 170.0


@dataclass(frozen=True)
class LabeledLoop:
    edge: GraphEdge
    outlier: bool = False


def ground_truth_loops(
    ground_truth: Mapping[NodeKey, Pose6],
    pairs: Iterable[tuple[NodeKey, NodeKey]],
) -> list[GraphEdge]:
    """Loop edges measuring exactly the ground-truth relative pose."""
    return [
        GraphEdge(
            a,
            b,
            EdgeKind.LOOP_CLOSURE,
            se3_between(ground_truth[a], ground_truth[b]),
            LOOP_FILE_INFORMATION,
        )
        for a, b in pairs
    ]


def is_true_loop(
    ground_truth: Mapping[NodeKey, Pose6], a: NodeKey, b: NodeKey, radius: float
) -> bool:
    """A loop is true when its nodes were within `radius` meters of each other."""
    return bool(np.linalg.norm(ground_truth[a].t - ground_truth[b].t) <= radius)


def _perturbation(cfg: SimConfig, rng: np.random.Generator) -> Pose6:
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    low = cfg.outlier_rotation
    angle = math.radians(rng.uniform(low, max(low, MAX_OUTLIER_ROTATION)))
    magnitude = cfg.outlier_translation * (1.0 + rng.uniform(0.0, 1.0))
    return Pose6.from_rotvec(axis * angle, direction * magnitude)


def inject_outlier_loops(
    true_loops: Sequence[GraphEdge],
    ground_truth: Mapping[NodeKey, Pose6],
    cfg: SimConfig,
    seed: int | None = None,
) -> list[LabeledLoop]:
    """
    The true loops labeled inliers, followed by `cfg.outlier_loop_count`
    outliers between random node pairs. Each outlier measures the
    ground-truth relative pose composed with a perturbation of at least
    `cfg.outlier_translation` meters and `cfg.outlier_rotation` degrees.

    Raises:
        SimulationError: if outliers are requested with fewer than three nodes.
    """
    labeled = [LabeledLoop(edge, outlier=False) for edge in true_loops]
    if cfg.outlier_loop_count == 0:
        return labeled
    keys = sorted(ground_truth)
    if len(keys) < 3:
        raise SimulationError("need at least three nodes to inject outlier loops")
    rng = np.random.default_rng([cfg.seed if seed is None else seed, 0x10])
    while len(labeled) < len(true_loops) + cfg.outlier_loop_count:
        i, j = rng.choice(len(keys), size=2, replace=False)
        a, b = keys[min(i, j)], keys[max(i, j)]
        if a.robot_id == b.robot_id and b.index - a.index < 2:
            continue
        truth = se3_between(ground_truth[a], ground_truth[b])
        measured = se3_compose(truth, _perturbation(cfg, rng))
        edge = GraphEdge(a, b, EdgeKind.LOOP_CLOSURE, measured, LOOP_FILE_INFORMATION)
        labeled.append(LabeledLoop(edge, outlier=True))
    return labeled


def format_loops(loops: Sequence[LabeledLoop]) -> str:
    lines = []
    for loop in loops:
        e = loop.edge
        pose = " ".join(f"{v:.17g}" for v in e.measurement.as_vector())
        label = "outlier" if loop.outlier else "inlier"
        lines.append(f"LOOP {e.source} {e.target} {pose} {label}")
    return "\n".join(lines) + ("\n" if lines else "")


def _key(token: str, line_number: int) -> NodeKey:
    robot, sep, index = token.partition(":")
    if not sep:
        raise SimulationError(f"line {line_number}: bad node key {token!r}")
    return NodeKey(int(robot), int(index))


def parse_loops(text: str) -> list[LabeledLoop]:
    """
    Raises:
        SimulationError: on a malformed line.
    """
    loops: list[LabeledLoop] = []
    for number, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens or tokens[0].startswith("#"):
            continue
        if tokens[0] != "LOOP" or len(tokens) != 11:
            raise SimulationError(f"line {number}: expected a LOOP record")
        if tokens[10] not in ("inlier", "outlier"):
            raise SimulationError(f"line {number}: bad label {tokens[10]!r}")
        try:
            values = [float(v) for v in tokens[3:10]]
            a, b = _key(tokens[1], number), _key(tokens[2], number)
        except ValueError as exc:
            raise SimulationError(f"line {number}: {exc}") from None
        pose = Pose6(tuple(values[3:]), tuple(values[:3]))
        edge = GraphEdge(a, b, EdgeKind.LOOP_CLOSURE, pose, LOOP_FILE_INFORMATION)
        loops.append(LabeledLoop(edge, outlier=tokens[10] == "outlier"))
    return loops


def write_loops(path: Path, loops: Sequence[LabeledLoop]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_loops(loops))


def read_loops(path: Path) -> list[LabeledLoop]:
    return parse_loops(path.read_text())
