"""
Graduated non-convexity with the Geman-McClure surrogate, wrapped around LM.

Only loop-closure edges are re-weighted; odometry and priors keep weight 1.
"""

import math

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import chi2

from burrow.backend.lm import OptimizationResult, PoseProblem, classify, run_lm
from burrow.graph.model import PoseGraph
from burrow.monitoring.decorators import monitor
from burrow.monitoring.loggers import get_logger
from burrow.monitoring.metrics import OPTIMIZATION_RUNS

log = get_logger(__name__)

FloatArray = npt.NDArray[np.float64]


def default_barc() -> float:
    """sqrt of the 0.997 chi-square quantile for 6 degrees of freedom (~4.42)."""
    return math.sqrt(float(chi2.ppf(0.997, 6)))


class GncParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    barc: float = Field(default_factory=default_barc, gt=0)
    mu_update_factor: float = Field(default=1.4, gt=1)
    max_outer_iterations: int = Field(default=100, ge=1)
    weight_inlier_cutoff: float = Field(default=0.5, gt=0, lt=1)
    weight_tolerance: float = Field(default=1e-6, gt=0)


def gm_weights(squared_residuals: FloatArray, mu: float, barc: float) -> FloatArray:
    """Geman-McClure GNC weights (mu c^2 / (r^2 + mu c^2))^2, in (0, 1]."""
    scaled = mu * barc * barc
    return (scaled / (squared_residuals + scaled)) ** 2


@monitor("optimize_gnc", log_calls=False)
def optimize_gnc(
    graph: PoseGraph, params: GncParams | None = None
) -> OptimizationResult:
    """
    Robust pose-graph optimization.

    Solves with unit weights, sets mu = 2 r_max^2 / barc^2 from the loop
    Mahalanobis residuals, then alternates weight updates, LM with fixed
    weights and mu <- mu / mu_update_factor until mu <= 1 or no weight moves
    by more than `weight_tolerance`. Loops whose final weight reaches
    `weight_inlier_cutoff` are inliers. Without loop edges the result is that
    of plain LM.

    Raises:
        UnderconstrainedGraphError: if a connected component has no prior.
    """
    params = params or GncParams()
    problem = PoseProblem(graph)
    weights = np.ones(len(problem.edges))
    initial, final, iterations = run_lm(problem, weights)
    loops = problem.loop_mask

    outer = 0
    if loops.any():
        squared = problem.edge_costs()[loops]
        mu = 2.0 * float(squared.max()) / params.barc**2
        while mu > 1.0 and outer < params.max_outer_iterations:
            outer += 1
            updated = gm_weights(squared, mu, params.barc)
            change = float(np.abs(updated - weights[loops]).max())
            weights[loops] = updated
            _, final, steps = run_lm(problem, weights)
            iterations += steps
            squared = problem.edge_costs()[loops]
            mu /= params.mu_update_factor
            if change < params.weight_tolerance:
                break

    OPTIMIZATION_RUNS.labels(mode="gnc").inc()
    loop_weights, inliers, outliers = classify(
        problem, weights, params.weight_inlier_cutoff
    )
    log.info(
        "gnc: %d inlier / %d outlier loops after %d outer iterations",
        len(inliers),
        len(outliers),
        outer,
    )
    return OptimizationResult(
        problem.poses(),
        loop_weights,
        inliers,
        outliers,
        final,
        initial,
        iterations,
        mode="gnc",
    )
