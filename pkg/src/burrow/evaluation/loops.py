"""
Loop-closure quality against ground truth: recall, false-positive rate, pose
errors of accepted true loops and the per-stage counts.
"""

from collections.abc import Collection, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from burrow.geometry.se3 import (
    Pose6,
    rotation_geodesic_deg,
    se3_between,
    translation_distance,
)
from burrow.graph.model import EdgeKind, NodeKey, PoseGraph
from burrow.loops.computation import LoopEdgeCandidateResult

Pair = tuple[NodeKey, NodeKey]

LOOP_ERRORS_HEADER = "source,target,translation_error,rotation_error_deg,true_loop"


@dataclass(frozen=True)
class LoopMetrics:
    """Percentages and means are None when their denominator is zero."""

    recall: float | None
    false_positive_rate: float | None
    mean_translation_error: float | None
    mean_rotation_error: float | None
    generated: int
    verified: int
    inliers: int

    def as_row(self) -> dict[str, float | int | None]:
        return {
            "recall": self.recall,
            "false_positive_rate": self.false_positive_rate,
            "mean_translation_error": self.mean_translation_error,
            "mean_rotation_error": self.mean_rotation_error,
            "generated": self.generated,
            "verified": self.verified,
            "inliers": self.inliers,
        }


@dataclass(frozen=True)
class LoopErrorSample:
    pair: Pair
    translation_error: float
    rotation_error: float
    true_loop: bool


def ground_truth_labels(
    results: Sequence[LoopEdgeCandidateResult],
    ground_truth: Mapping[NodeKey, Pose6],
    radius: float,
) -> dict[Pair, bool]:
    """True for candidates whose nodes were within `radius` meters."""
    return {
        r.candidate.pair: bool(
            np.linalg.norm(
                ground_truth[r.candidate.key_a].t - ground_truth[r.candidate.key_b].t
            )
            <= radius
        )
        for r in results
    }


def ground_truth_transforms(
    results: Sequence[LoopEdgeCandidateResult], ground_truth: Mapping[NodeKey, Pose6]
) -> dict[Pair, Pose6]:
    return {
        r.candidate.pair: se3_between(
            ground_truth[r.candidate.key_a], ground_truth[r.candidate.key_b]
        )
        for r in results
    }


def _passed(result: LoopEdgeCandidateResult, inliers: Collection[Pair] | None) -> bool:
    if not result.accepted or result.edge is None:
        return False
    return inliers is None or result.candidate.pair in inliers


def loop_error_samples(
    results: Sequence[LoopEdgeCandidateResult],
    labels: Mapping[Pair, bool],
    gt_transforms: Mapping[Pair, Pose6],
    inliers: Collection[Pair] | None = None,
) -> list[LoopErrorSample]:
    """Measured-vs-true error of every loop that passed."""
    samples: list[LoopErrorSample] = []
    for result in results:
        if not _passed(result, inliers):
            continue
        assert result.edge is not None
        pair = result.candidate.pair
        truth = gt_transforms[pair]
        samples.append(
            LoopErrorSample(
                pair,
                translation_distance(result.edge.measurement, truth),
                rotation_geodesic_deg(result.edge.measurement, truth),
                labels[pair],
            )
        )
    return samples


def _percent(numerator: int, denominator: int) -> float | None:
    return 100.0 * numerator / denominator if denominator else None


def loop_metrics(
    results: Sequence[LoopEdgeCandidateResult],
    labels: Mapping[Pair, bool],
    gt_transforms: Mapping[Pair, Pose6],
    *,
    inliers: Collection[Pair] | None = None,
    generated: int | None = None,
) -> LoopMetrics:
    """
    Score the loop pipeline. A loop passed when registration accepted it and,
    if `inliers` is given, the back-end kept it.

    Recall is passed true loops over all true loops, the false-positive rate
    passed false loops over all false loops; both in percent. Mean errors
    cover passed true loops only. `generated` defaults to the number of
    results.
    """
    passed = [r for r in results if _passed(r, inliers)]
    total_true = sum(1 for r in results if labels[r.candidate.pair])
    total_false = len(results) - total_true
    passed_true = sum(1 for r in passed if labels[r.candidate.pair])
    passed_false = len(passed) - passed_true

    errors = [
        s
        for s in loop_error_samples(results, labels, gt_transforms, inliers)
        if s.true_loop
    ]
    verified = sum(1 for r in results if r.accepted)
    return LoopMetrics(
        recall=_percent(passed_true, total_true),
        false_positive_rate=_percent(passed_false, total_false),
        mean_translation_error=(
            float(np.mean([s.translation_error for s in errors])) if errors else None
        ),
        mean_rotation_error=(
            float(np.mean([s.rotation_error for s in errors])) if errors else None
        ),
        generated=len(results) if generated is None else generated,
        verified=verified,
        inliers=len(passed),
    )


def write_loop_errors(path: Path, samples: Sequence[LoopErrorSample]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [LOOP_ERRORS_HEADER]
    for s in samples:
        a, b = s.pair
        errors = f"{s.translation_error:.6g},{s.rotation_error:.6g}"
        lines.append(f"{a},{b},{errors},{int(s.true_loop)}")
    path.write_text("\n".join(lines) + "\n")


def graph_loop_samples(
    graph: PoseGraph, ground_truth: Mapping[NodeKey, Pose6], radius: float
) -> list[LoopErrorSample]:
    """
    Error of every loop-closure edge stored in a graph, labeled against ground
    truth. Edges touching a node without ground truth are skipped.
    """
    samples: list[LoopErrorSample] = []
    for edge in graph.edges_of_kind(EdgeKind.LOOP_CLOSURE):
        if edge.source not in ground_truth or edge.target not in ground_truth:
            continue
        a, b = ground_truth[edge.source], ground_truth[edge.target]
        truth = se3_between(a, b)
        samples.append(
            LoopErrorSample(
                (edge.source, edge.target),
                translation_distance(edge.measurement, truth),
                rotation_geodesic_deg(edge.measurement, truth),
                translation_distance(a, b) <= radius,
            )
        )
    return samples
