from burrow.frontend.keying import KeyingConfig, should_create_key
from burrow.frontend.pipeline import (
    FrontendOutput,
    OdometrySample,
    ScanFrame,
    run_frontend,
)
from burrow.frontend.pointcloud import adaptive_voxelize, merge_clouds, voxel_downsample

__all__ = [
    "FrontendOutput",
    "KeyingConfig",
    "OdometrySample",
    "ScanFrame",
    "adaptive_voxelize",
    "merge_clouds",
    "run_frontend",
    "should_create_key",
    "voxel_downsample",
]
