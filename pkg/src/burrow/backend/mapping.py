from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from burrow.frontend.pointcloud import voxel_downsample
from burrow.geometry.se3 import Pose6
from burrow.graph.model import KeyedScan, NodeKey
from burrow.monitoring.loggers import get_logger

log = get_logger(__name__)


@dataclass(frozen=True)
class MapAssembly:
    cloud: npt.NDArray[np.float64]
    scans_used: int
    scans_skipped: int


def assemble_map(
    poses: Mapping[NodeKey, Pose6],
    scans: Mapping[NodeKey, KeyedScan],
    voxel: float = 0.2,
) -> MapAssembly:
    """
    Union of the keyed scans moved by their optimized poses, voxel-downsampled
    with a fixed leaf. Scans without a pose are skipped and counted.
    """
    clouds = []
    skipped = 0
    for key in sorted(scans):
        pose = poses.get(key)
        if pose is None:
            skipped += 1
            continue
        clouds.append(pose.transform_points(scans[key].points()))
    if skipped:
        log.warning("map assembly skipped %d scans without an optimized pose", skipped)
    if not clouds:
        return MapAssembly(np.zeros((0, 3)), 0, skipped)
    cloud = voxel_downsample(np.vstack(clouds), voxel)
    return MapAssembly(cloud, len(clouds), skipped)
