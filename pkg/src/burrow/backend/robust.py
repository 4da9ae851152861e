from dataclasses import replace

from burrow.backend.gnc import GncParams, optimize_gnc
from burrow.backend.icm import IcmParams, filter_graph
from burrow.backend.lm import OptimizationResult, optimize_lm
from burrow.config import OutlierMode
from burrow.graph.model import EdgeKind, PoseGraph


def optimize_graph(
    graph: PoseGraph,
    mode: OutlierMode = "icm+gnc",
    gnc: GncParams | None = None,
    icm: IcmParams | None = None,
) -> OptimizationResult:
    """
    Optimize with the chosen outlier handling: none (plain LM), icm (filter
    then LM), gnc, or icm+gnc (GNC over the loops ICM kept).

    Loop weights and inlier/outlier lists refer to `graph`; loops rejected by
    ICM get weight 0 and are reported as outliers.
    """
    if mode == "none":
        return optimize_lm(graph)
    if mode == "gnc":
        return optimize_gnc(graph, gnc)

    kept, partition = filter_graph(graph, icm)
    result = optimize_gnc(kept, gnc) if mode == "icm+gnc" else optimize_lm(kept)

    # positions in `kept` back to positions in `graph`
    rejected = {id(e) for e in partition.rejected}
    kept_positions = [
        i for i, e in enumerate(graph.edges) if id(e) not in rejected
    ]
    weights = {kept_positions[i]: w for i, w in result.loop_weights.items()}
    for position, edge in enumerate(graph.edges):
        if edge.kind is EdgeKind.LOOP_CLOSURE and id(edge) in rejected:
            weights[position] = 0.0
    return replace(
        result,
        loop_weights=dict(sorted(weights.items())),
        outlier_edges=result.outlier_edges + partition.rejected,
        provisional_edges=partition.provisional,
        mode=mode,
    )
