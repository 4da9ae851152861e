from burrow.geometry.se3 import (
    PointCloud,
    Pose6,
    Twist6,
    as_cloud,
    rotation_geodesic_deg,
    se3_between,
    se3_compose,
    se3_exp,
    se3_inverse,
    se3_log,
    translation_distance,
)

__all__ = [
    "PointCloud",
    "Pose6",
    "Twist6",
    "as_cloud",
    "rotation_geodesic_deg",
    "se3_between",
    "se3_compose",
    "se3_exp",
    "se3_inverse",
    "se3_log",
    "translation_distance",
]
