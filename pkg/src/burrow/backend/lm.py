"""
Levenberg-Marquardt over node poses with exp-map retraction.

Normal equations are assembled from per-edge 6x6 blocks into a sparse COO
matrix, damped by lambda * diag(H), and solved with a fill-reducing sparse LU
(dense solve below DENSE_NODE_LIMIT nodes). A step is kept only if it lowers
the cost; lambda is divided by 10 after a kept step and multiplied by 10
otherwise.
"""

from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
import scipy.linalg
from scipy.sparse import coo_matrix, diags
from scipy.sparse.linalg import splu

from burrow.backend.residuals import (
    EdgeArrays,
    batch_costs,
    batch_jacobians,
    batch_residuals,
)
from burrow.geometry.lie import se3_exp_rt
from burrow.geometry.se3 import Pose6
from burrow.graph.model import EdgeKind, GraphEdge, NodeKey, PoseGraph
from burrow.monitoring.decorators import monitor
from burrow.monitoring.loggers import get_logger
from burrow.monitoring.metrics import OPTIMIZATION_RUNS
from burrow.utils.exceptions import OptimizationError, UnderconstrainedGraphError

log = get_logger(__name__)

FloatArray = npt.NDArray[np.float64]

DENSE_NODE_LIMIT = 300
MAX_ITERATIONS = 200
RELATIVE_COST_TOLERANCE = 1e-8
STEP_TOLERANCE = 1e-8
INITIAL_LAMBDA = 1e-3
LAMBDA_RANGE = (1e-7, 1e7)


@dataclass(frozen=True)
class OptimizationResult:
    """
    Optimized poses plus the loop-edge classification.

    `loop_weights` maps the position of each loop edge in `graph.edges` to its
    final weight (edges themselves are unhashable).
    """

    poses: dict[NodeKey, Pose6]
    loop_weights: dict[int, float]
    inlier_edges: list[GraphEdge]
    outlier_edges: list[GraphEdge]
    final_cost: float
    initial_cost: float
    iterations: int
    mode: str = "lm"
    provisional_edges: list[GraphEdge] = field(default_factory=list)

    def apply(self, graph: PoseGraph) -> PoseGraph:
        return graph.with_poses(self.poses)

    def inlier_loop_counts(self) -> dict[NodeKey, int]:
        """Number of inlier loop edges touching each node."""
        counts = {key: 0 for key in self.poses}
        for edge in self.inlier_edges:
            for key in {edge.source, edge.target}:
                counts[key] = counts.get(key, 0) + 1
        return counts


class PoseProblem:
    """A graph packed into arrays: node rotations/translations and edge blocks."""

    def __init__(self, graph: PoseGraph) -> None:
        check_constrained(graph)
        self.keys = sorted(graph.nodes)
        index = {k: i for i, k in enumerate(self.keys)}
        self.edges = graph.edges
        self.arrays = EdgeArrays.pack(graph.edges, index)
        poses = [graph.nodes[k].pose for k in self.keys]
        self._initial = poses
        self.updated = False
        self.rot = np.array([p.rotation_matrix for p in poses]).reshape(-1, 3, 3)
        self.trans = np.array([p.t for p in poses]).reshape(-1, 3)
        self.loop_mask = np.array(
            [e.kind is EdgeKind.LOOP_CLOSURE for e in graph.edges], dtype=bool
        )

    @property
    def dim(self) -> int:
        return 6 * len(self.keys)

    def residuals(
        self, rot: FloatArray | None = None, trans: FloatArray | None = None
    ) -> FloatArray:
        rot = self.rot if rot is None else rot
        trans = self.trans if trans is None else trans
        if len(self.arrays) == 0:
            return np.zeros((0, 6))
        return batch_residuals(self.arrays, rot, trans)[0]

    def edge_costs(
        self, rot: FloatArray | None = None, trans: FloatArray | None = None
    ) -> FloatArray:
        """Unweighted Mahalanobis cost of every edge."""
        return batch_costs(self.arrays, self.residuals(rot, trans))

    def cost(
        self,
        weights: FloatArray,
        rot: FloatArray | None = None,
        trans: FloatArray | None = None,
    ) -> float:
        return float(weights @ self.edge_costs(rot, trans))

    def linearize(self, weights: FloatArray) -> tuple[coo_matrix, FloatArray]:
        """Gauss-Newton system H d = -g at the current estimate."""
        arrays = self.arrays
        residuals, rel_rot, rel_trans = batch_residuals(arrays, self.rot, self.trans)
        j_src, j_tgt = batch_jacobians(residuals, rel_rot, rel_trans, arrays.is_prior)
        omega = weights[:, None, None] * arrays.information

        # prior target blocks are zero; point them at the source so indexing works
        tgt = np.where(arrays.is_prior, arrays.source, arrays.target)
        jacobians = (j_src, j_tgt)
        nodes = (arrays.source, tgt)

        grad = np.zeros(self.dim)
        rows, cols, vals = [], [], []
        offsets = np.arange(6)
        for a in range(2):
            ja_t_omega = np.swapaxes(jacobians[a], 1, 2) @ omega
            np.add.at(
                grad.reshape(-1, 6),
                nodes[a],
                (ja_t_omega @ residuals[..., None])[..., 0],
            )
            for b in range(2):
                block = ja_t_omega @ jacobians[b]
                r = 6 * nodes[a][:, None, None] + offsets[None, :, None]
                c = 6 * nodes[b][:, None, None] + offsets[None, None, :]
                rows.append(np.broadcast_to(r, block.shape).ravel())
                cols.append(np.broadcast_to(c, block.shape).ravel())
                vals.append(block.ravel())
        hessian = coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.dim, self.dim),
        )
        return hessian, grad

    def retract(self, delta: FloatArray) -> tuple[FloatArray, FloatArray]:
        """X <- X Exp(delta) for every node."""
        d_rot, d_trans = se3_exp_rt(delta.reshape(-1, 6))
        rot = self.rot @ d_rot
        trans = self.trans + (self.rot @ d_trans[..., None])[..., 0]
        return rot, trans

    def poses(self) -> dict[NodeKey, Pose6]:
        if not self.updated:
            return dict(zip(self.keys, self._initial, strict=True))
        return {
            k: Pose6.from_rt(r, t)
            for k, r, t in zip(self.keys, self.rot, self.trans, strict=True)
        }


def check_constrained(graph: PoseGraph) -> None:
    """
    Raises:
        UnderconstrainedGraphError: for the first connected component that holds
            no prior.
    """
    anchored = {e.source for e in graph.edges if e.kind is EdgeKind.PRIOR}
    for component in graph.connected_components():
        if not component & anchored:
            raise UnderconstrainedGraphError(component)


def _solve(hessian: coo_matrix, grad: FloatArray, damping: float) -> FloatArray:
    diagonal = hessian.diagonal()
    if hessian.shape[0] < 6 * DENSE_NODE_LIMIT:
        dense = hessian.toarray()
        dense[np.diag_indices_from(dense)] += damping * diagonal
        try:
            return scipy.linalg.solve(dense, -grad, assume_a="sym")
        except scipy.linalg.LinAlgError as exc:
            raise OptimizationError(f"normal equations are singular: {exc}") from exc
    damped = (hessian.tocsc() + diags(damping * diagonal, format="csc")).tocsc()
    try:
        return splu(damped, permc_spec="COLAMD").solve(-grad)
    except RuntimeError as exc:
        raise OptimizationError(f"normal equations are singular: {exc}") from exc


def run_lm(
    problem: PoseProblem,
    weights: FloatArray,
    max_iterations: int = MAX_ITERATIONS,
) -> tuple[float, float, int]:
    """
    Optimize `problem` in place with fixed edge weights.

    Returns (initial cost, final cost, iterations).
    """
    cost = initial = problem.cost(weights)
    damping = INITIAL_LAMBDA
    iterations = 0
    while iterations < max_iterations and len(problem.arrays):
        iterations += 1
        hessian, grad = problem.linearize(weights)
        delta = _solve(hessian, grad, damping)
        if not np.all(np.isfinite(delta)):
            raise OptimizationError("solver produced a non-finite update")
        if np.linalg.norm(delta) < STEP_TOLERANCE:
            break
        rot, trans = problem.retract(delta)
        new_cost = problem.cost(weights, rot, trans)
        if new_cost < cost:
            problem.rot, problem.trans = rot, trans
            problem.updated = True
            improvement = (cost - new_cost) / max(cost, np.finfo(float).tiny)
            cost = new_cost
            damping = max(damping / 10.0, LAMBDA_RANGE[0])
            if improvement < RELATIVE_COST_TOLERANCE:
                break
        else:
            if damping >= LAMBDA_RANGE[1]:
                log.debug("lm stopped: damping saturated at cost %.6g", cost)
                break
            damping = min(damping * 10.0, LAMBDA_RANGE[1])
    return initial, cost, iterations


def loop_weight_vector(
    problem: PoseProblem, weights: Mapping[int, float] | None
) -> FloatArray:
    vector = np.ones(len(problem.edges))
    for position, weight in (weights or {}).items():
        if not problem.loop_mask[position]:
            raise OptimizationError(f"edge {position} is not a loop closure")
        if not 0.0 <= weight <= 1.0:
            raise OptimizationError(f"loop weight {weight} outside [0, 1]")
        vector[position] = weight
    return vector


def classify(
    problem: PoseProblem, weights: FloatArray, cutoff: float
) -> tuple[dict[int, float], list[GraphEdge], list[GraphEdge]]:
    loop_weights: dict[int, float] = {}
    inliers: list[GraphEdge] = []
    outliers: list[GraphEdge] = []
    for position in np.flatnonzero(problem.loop_mask):
        weight = float(weights[position])
        loop_weights[int(position)] = weight
        edge = problem.edges[position]
        (inliers if weight >= cutoff else outliers).append(edge)
    return loop_weights, inliers, outliers


@monitor("optimize_lm", log_calls=False)
def optimize_lm(
    graph: PoseGraph, weights: Mapping[int, float] | None = None
) -> OptimizationResult:
    """
    Weighted nonlinear least squares over all node poses.

    `weights` maps loop-edge positions in `graph.edges` to weights in [0, 1]
    (default 1); odometry and prior edges always weigh 1.

    Raises:
        UnderconstrainedGraphError: if a connected component has no prior.
        OptimizationError: if the normal equations cannot be solved.
    """
    problem = PoseProblem(graph)
    vector = loop_weight_vector(problem, weights)
    initial, final, iterations = run_lm(problem, vector)
    OPTIMIZATION_RUNS.labels(mode="lm").inc()
    loop_weights, inliers, outliers = classify(problem, vector, 0.5)
    log.debug("lm: cost %.6g -> %.6g in %d iterations", initial, final, iterations)
    return OptimizationResult(
        problem.poses(), loop_weights, inliers, outliers, final, initial, iterations
    )
