"""
Adaptive-radius loop-closure candidate generation.

Intra-robot pairs are kept when their estimated gap is within
alpha * |n_curr - n_cand|; inter-robot pairs when it is within alpha * n_curr.
The radius grows with the traversal that separates the two nodes, tracking
the drift odometry can have accumulated over it.
"""

from dataclasses import dataclass
from enum import StrEnum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from burrow.graph.model import NodeKey, PoseGraph


class LoopKind(StrEnum):
    INTRA_ROBOT = "intra"
    INTER_ROBOT = "inter"


@dataclass(frozen=True)
class LoopCandidate:
    key_a: NodeKey  # the new node
    key_b: NodeKey
    kind: LoopKind
    euclidean_gap: float
    priority: float = 0.0

    @property
    def pair(self) -> tuple[NodeKey, NodeKey]:
        return self.key_a, self.key_b


class GenerationConfig(BaseModel):
    """
    `fixed_radius` switches to the legacy rule d_max = fixed_radius for every
    pair; `inter_robot=False` restricts generation to a robot's own nodes.
    """

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(default=0.2, gt=0)
    min_index_separation: int = Field(default=20, ge=1)
    inter_robot: bool = True
    fixed_radius: float | None = Field(default=None, gt=0)


def generate_candidates(
    graph: PoseGraph, new_node: NodeKey, cfg: GenerationConfig | None = None
) -> list[LoopCandidate]:
    """Candidates pairing `new_node` with every admissible node, ordered by key."""
    cfg = cfg or GenerationConfig()
    if new_node not in graph.nodes:
        raise KeyError(f"node {new_node} not in graph")
    others = [k for k in sorted(graph.nodes) if k != new_node]
    if not others:
        return []

    here = graph.nodes[new_node].pose.t
    robots = np.array([k.robot_id for k in others])
    indices = np.array([k.index for k in others])
    positions = np.array([graph.nodes[k].pose.translation for k in others])
    gaps = np.linalg.norm(positions - here, axis=1)

    same = robots == new_node.robot_id
    separation = np.abs(indices - new_node.index)
    if cfg.fixed_radius is not None:
        radius = np.full(len(others), cfg.fixed_radius)
    else:
        radius = np.where(
            same, cfg.alpha * separation, cfg.alpha * float(new_node.index)
        )
    keep = gaps <= radius
    keep &= ~same | (separation >= cfg.min_index_separation)
    if not cfg.inter_robot:
        keep &= same

    return [
        LoopCandidate(
            new_node,
            others[i],
            LoopKind.INTRA_ROBOT if same[i] else LoopKind.INTER_ROBOT,
            float(gaps[i]),
        )
        for i in np.flatnonzero(keep)
    ]
