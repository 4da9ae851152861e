from pydantic import BaseModel, ConfigDict, Field

from burrow.geometry.se3 import Pose6, rotation_geodesic_deg, translation_distance

# pose composition round-off must not hide an exactly reached threshold
THRESHOLD_TOLERANCE = 1e-9


class KeyingConfig(BaseModel):
    """Motion thresholds for key-node creation and the keyed-scan size."""

    model_config = ConfigDict(frozen=True)

    translation_threshold: float = Field(default=2.0, gt=0)
    rotation_threshold: float = Field(default=30.0, gt=0)
    target_point_count: int = Field(default=5000, ge=1)
    scan_window: float = Field(default=0.1, gt=0)


def should_create_key(last_key_pose: Pose6, current: Pose6, cfg: KeyingConfig) -> bool:
    """
    True once the robot moved `translation_threshold` meters or turned
    `rotation_threshold` degrees since the last key.
    """
    moved = translation_distance(last_key_pose, current)
    turned = rotation_geodesic_deg(last_key_pose, current)
    return (
        moved >= cfg.translation_threshold - THRESHOLD_TOLERANCE
        or turned >= cfg.rotation_threshold - THRESHOLD_TOLERANCE
    )
