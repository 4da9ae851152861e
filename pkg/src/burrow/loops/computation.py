"""
Two-stage loop-closure computation: an initial alignment followed by
point-to-plane refinement.
"""

from collections.abc import Mapping
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
import numpy.typing as npt

from burrow.geometry.se3 import se3_between
from burrow.graph.model import EdgeKind, GraphEdge, KeyedScan, NodeKey, PoseGraph
from burrow.loops.candidates import LoopCandidate
from burrow.monitoring.decorators import monitor
from burrow.monitoring.loggers import get_logger
from burrow.monitoring.metrics import LOOP_CLOSURE_STAGE
from burrow.registration.alignment import MIN_POINTS, initial_alignment
from burrow.registration.icp import icp_point_to_plane
from burrow.registration.types import AlignmentParams, RegistrationResult

log = get_logger(__name__)

# largest eigenvalue of an accepted loop's information
LOOP_INFORMATION_SCALE = 100.0
LOOP_INFORMATION_RIDGE = 1e-3


class Initializer(StrEnum):
    ODOMETRIC = "odometric"
    SAMPLE_CONSENSUS = "sample-consensus"


@dataclass(frozen=True)
class LoopEdgeCandidateResult:
    candidate: LoopCandidate
    stage1: RegistrationResult | None
    stage2: RegistrationResult | None
    accepted: bool
    edge: GraphEdge | None = None
    failure_reason: str | None = None


def loop_information(raw: npt.ArrayLike) -> npt.NDArray[np.float64]:
    """
    Symmetrized registration Hessian scaled so its largest eigenvalue is 100,
    plus a small ridge to keep it positive-definite. Falls back to the ridge
    alone when the Hessian is zero.
    """
    info = np.asarray(raw, dtype=np.float64)
    info = 0.5 * (info + info.T)
    top = float(np.linalg.eigvalsh(info)[-1])
    if top > 0:
        info = info * (LOOP_INFORMATION_SCALE / top)
    else:
        info = np.zeros((6, 6))
    return info + LOOP_INFORMATION_RIDGE * LOOP_INFORMATION_SCALE * np.eye(6)


def _rejected(
    candidate: LoopCandidate,
    reason: str,
    stage1: RegistrationResult | None = None,
    stage2: RegistrationResult | None = None,
) -> LoopEdgeCandidateResult:
    log.debug("loop %s-%s rejected: %s", candidate.key_a, candidate.key_b, reason)
    return LoopEdgeCandidateResult(
        candidate, stage1, stage2, accepted=False, failure_reason=reason
    )


@monitor("compute_loop_closure", log_calls=False)
def compute_loop_closure(
    candidate: LoopCandidate,
    graph: PoseGraph,
    scans: Mapping[NodeKey, KeyedScan],
    params: AlignmentParams | None = None,
    initializer: Initializer = Initializer.SAMPLE_CONSENSUS,
) -> LoopEdgeCandidateResult:
    """
    Register the scan of `key_b` (source) onto the scan of `key_a` (target).

    The odometric initializer starts refinement from the current estimates'
    relative pose and skips stage one. A candidate is accepted when stage one
    (if run) succeeded and the refined fitness is within `icp_error_threshold`;
    the accepted edge runs from `key_a` to `key_b`. Registration failures are
    reported on the result, never raised.
    """
    params = params or AlignmentParams()
    a, b = candidate.key_a, candidate.key_b
    if a not in scans or b not in scans:
        return _rejected(candidate, "keyed scan missing")
    target, source = scans[a].points(), scans[b].points()
    if len(target) < MIN_POINTS or len(source) < MIN_POINTS:
        LOOP_CLOSURE_STAGE.labels(stage="too_few_points").inc()
        return _rejected(
            candidate, f"too few points ({len(source)} source, {len(target)} target)"
        )

    stage1: RegistrationResult | None = None
    if initializer is Initializer.ODOMETRIC:
        init = se3_between(graph.nodes[a].pose, graph.nodes[b].pose)
    else:
        stage1 = initial_alignment(source, target, params)
        if not stage1.ok:
            LOOP_CLOSURE_STAGE.labels(stage="stage1_rejected").inc()
            return _rejected(candidate, f"stage 1: {stage1.failure}", stage1)
        init = stage1.transform

    stage2 = icp_point_to_plane(source, target, init, params)
    if not stage2.ok:
        LOOP_CLOSURE_STAGE.labels(stage="stage2_rejected").inc()
        return _rejected(candidate, f"stage 2: {stage2.failure}", stage1, stage2)
    if stage2.fitness_error > params.icp_error_threshold:
        LOOP_CLOSURE_STAGE.labels(stage="stage2_rejected").inc()
        return _rejected(
            candidate,
            f"stage 2 fitness {stage2.fitness_error:.3f} > "
            f"{params.icp_error_threshold}",
            stage1,
            stage2,
        )

    LOOP_CLOSURE_STAGE.labels(stage="accepted").inc()
    edge = GraphEdge(
        a,
        b,
        EdgeKind.LOOP_CLOSURE,
        stage2.transform,
        loop_information(stage2.information),
    )
    return LoopEdgeCandidateResult(candidate, stage1, stage2, True, edge)

