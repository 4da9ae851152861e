"""
Edge residuals and their Jacobians under right perturbation X <- X Exp(d).

Between edges:  r = Log(Z^-1 Xi^-1 Xj)
                dr/ddj = Jr^-1(r),  dr/ddi = -Jr^-1(r) Ad(Xj^-1 Xi)
Prior edges:    r = Log(Z^-1 X),  dr/dd = Jr^-1(r)
"""

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from burrow.geometry.lie import (
    adjoint,
    relative_rt,
    se3_log_rt,
    se3_right_jacobian_inv,
)
from burrow.geometry.se3 import Pose6, Twist6, se3_between, se3_compose, se3_log
from burrow.graph.model import EdgeKind, GraphEdge, NodeKey

FloatArray = npt.NDArray[np.float64]


def edge_residual(
    poses: Mapping[NodeKey, Pose6], edge: GraphEdge
) -> tuple[Twist6, float]:
    """Residual twist of one edge and its cost r^T information r."""
    if edge.kind is EdgeKind.PRIOR:
        relative = poses[edge.source]
    else:
        relative = se3_between(poses[edge.source], poses[edge.target])
    r = se3_log(se3_compose(edge.measurement.inverse(), relative))
    return r, float(r @ edge.information @ r)


def total_cost(
    poses: Mapping[NodeKey, Pose6],
    edges: Sequence[GraphEdge],
    weights: Sequence[float] | None = None,
) -> float:
    weights = weights if weights is not None else [1.0] * len(edges)
    return sum(
        w * edge_residual(poses, e)[1] for w, e in zip(weights, edges, strict=True)
    )


@dataclass
class EdgeArrays:
    """Edges of a graph packed for batched evaluation; priors have target -1."""

    source: npt.NDArray[np.intp]
    target: npt.NDArray[np.intp]
    meas_rot: FloatArray
    meas_trans: FloatArray
    information: FloatArray

    @classmethod
    def pack(
        cls, edges: Sequence[GraphEdge], index: Mapping[NodeKey, int]
    ) -> "EdgeArrays":
        n = len(edges)
        source = np.fromiter((index[e.source] for e in edges), np.intp, n)
        target = np.fromiter(
            (-1 if e.kind is EdgeKind.PRIOR else index[e.target] for e in edges),
            np.intp,
            n,
        )
        meas_rot = np.array([e.measurement.rotation_matrix for e in edges]).reshape(
            n, 3, 3
        )
        meas_trans = np.array([e.measurement.t for e in edges]).reshape(n, 3)
        information = np.array([e.information for e in edges]).reshape(n, 6, 6)
        return cls(source, target, meas_rot, meas_trans, information)

    def __len__(self) -> int:
        return len(self.source)

    @property
    def is_prior(self) -> npt.NDArray[np.bool_]:
        return self.target < 0


def batch_residuals(
    edges: EdgeArrays, rot: FloatArray, trans: FloatArray
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """
    Residuals (E, 6) plus the relative rotation and translation Xi^-1 Xj
    (X for priors) they were computed from.
    """
    prior = edges.is_prior
    rel_rot = rot[edges.source].copy()
    rel_trans = trans[edges.source].copy()
    between = ~prior
    if between.any():
        rel_rot[between], rel_trans[between] = relative_rt(
            rot[edges.source[between]],
            trans[edges.source[between]],
            rot[edges.target[between]],
            trans[edges.target[between]],
        )
    err_rot, err_trans = relative_rt(
        edges.meas_rot, edges.meas_trans, rel_rot, rel_trans
    )
    return se3_log_rt(err_rot, err_trans), rel_rot, rel_trans


def batch_costs(edges: EdgeArrays, residuals: FloatArray) -> FloatArray:
    """Per-edge Mahalanobis cost r^T information r."""
    return np.einsum("ei,eij,ej->e", residuals, edges.information, residuals)


def batch_jacobians(
    residuals: FloatArray,
    rel_rot: FloatArray,
    rel_trans: FloatArray,
    prior: npt.NDArray[np.bool_],
) -> tuple[FloatArray, FloatArray]:
    """
    Jacobians (E, 6, 6) with respect to the source and target perturbations.
    The target Jacobian of a prior edge is zero.
    """
    jr_inv = se3_right_jacobian_inv(residuals)
    # Xj^-1 Xi is the inverse of the relative pose
    inv_rot = np.swapaxes(rel_rot, -1, -2)
    inv_trans = -(inv_rot @ rel_trans[..., None])[..., 0]
    j_source = -jr_inv @ adjoint(inv_rot, inv_trans)
    j_target = jr_inv.copy()
    j_source[prior] = jr_inv[prior]
    j_target[prior] = 0.0
    return j_source, j_target
