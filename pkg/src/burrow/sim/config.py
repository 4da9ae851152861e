from typing import Literal, TypeAlias

from pydantic import BaseModel, ConfigDict, Field

Preset: TypeAlias = Literal["tunnel", "ku", "urban-like", "aliasing-stress"]


class SimConfig(BaseModel):
    """
    Simulator parameters. Odometry noise is a random walk: per meter
    traveled, each translation axis gains `translation_noise` meters and each
    rotation axis `rotation_noise` radians of standard deviation (scaled by
    the square root of the distance).
    """

    model_config = ConfigDict(frozen=True)

    preset: Preset = "tunnel"
    seed: int = Field(default=0, ge=0)
    robots: int = Field(default=2, ge=1, le=16)

    translation_noise: float = Field(default=0.01, ge=0)
    rotation_noise: float = Field(default=0.0005, ge=0)
    range_noise: float = Field(default=0.05, ge=0)
    marker_noise: float = Field(default=0.01, ge=0)

    rays_horizontal: int = Field(default=180, ge=8)
    rays_vertical: int = Field(default=8, ge=1)
    # full span in degrees, centered on the horizontal plane
    vertical_fov: float = Field(default=30.0, gt=0, le=90)
    max_range: float = Field(default=40.0, gt=0)

    speed: float = Field(default=1.0, gt=0)
    odometry_rate: float = Field(default=5.0, gt=0)
    scan_stride: int = Field(default=1, ge=1)

    outlier_loop_count: int = Field(default=0, ge=0)
    outlier_translation: float = Field(default=10.0, ge=0)
    outlier_rotation: float = Field(default=90.0, ge=0, lt=180)
    true_loop_radius: float = Field(default=6.0, gt=0)
