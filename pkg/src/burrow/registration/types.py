from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field

from burrow.geometry.se3 import Pose6


class AlignmentParams(BaseModel):
    """
    Thresholds and sizes for the two registration stages.

    `sac_error_threshold` bounds the cumulative error summed over at most
    `sac_error_samples` keypoints, each term a Huber penalty (1 m) capped at 1.
    `sac_normalized_threshold` bounds the same sum divided by the number of
    evaluated keypoints, so sparse clouds are judged on the same scale.
    """

    model_config = ConfigDict(frozen=True)

    sac_error_threshold: float = Field(default=32.0, gt=0)
    sac_normalized_threshold: float = Field(default=0.32, gt=0)
    sac_error_samples: int = Field(default=100, ge=3)
    sac_max_iterations: int = Field(default=500, ge=1)
    icp_error_threshold: float = Field(default=0.9, gt=0)
    icp_max_iterations: int = Field(default=200, ge=1)
    correspondence_distance: float = Field(default=1.5, gt=0)
    feature_radius: float = Field(default=2.5, gt=0)
    normal_neighbors: int = Field(default=10, ge=3)
    keypoint_count: int = Field(default=600, ge=3)
    feature_neighbors: int = Field(default=3, ge=1)
    min_sample_distance: float = Field(default=1.0, gt=0)
    min_inliers: int = Field(default=30, ge=3)
    seed: int = 0


@dataclass(frozen=True)
class RegistrationResult:
    """
    Outcome of one registration stage.

    `transform` maps source points into the target frame. `information` is the
    point-to-plane Hessian for a right perturbation of `transform` (zeros for
    stages that do not produce one). A set `failure` means the result must not
    be used; registration reports problems this way instead of raising.
    """

    transform: Pose6
    fitness_error: float
    inlier_count: int
    information: npt.NDArray[np.float64] = field(
        default_factory=lambda: np.zeros((6, 6))
    )
    failure: str | None = None
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.failure is None

    @classmethod
    def failed(
        cls, reason: str, transform: Pose6 | None = None
    ) -> "RegistrationResult":
        return cls(
            transform=transform or Pose6.identity(),
            fitness_error=float("inf"),
            inlier_count=0,
            failure=reason,
        )
