"""
Fast point-feature histograms: 33 bins, three 11-bin histograms over the
Darboux-frame angles between a point's normal and its neighbours' normals.
"""

import numpy as np
import numpy.typing as npt
from scipy.spatial import cKDTree

FloatArray = npt.NDArray[np.float64]

BINS_PER_FEATURE = 11
DESCRIPTOR_SIZE = 3 * BINS_PER_FEATURE


def _pairs(tree: cKDTree, points: FloatArray, radius: float) -> tuple[
    npt.NDArray[np.intp], npt.NDArray[np.intp]
]:
    neighborhoods = tree.query_ball_point(points, radius)
    sources = np.repeat(np.arange(len(points)), [len(n) for n in neighborhoods])
    targets = np.fromiter(
        (j for n in neighborhoods for j in n), dtype=np.intp, count=len(sources)
    )
    keep = sources != targets
    return sources[keep], targets[keep]


def _darboux_features(
    ps: FloatArray, ns: FloatArray, pt: FloatArray, nt: FloatArray
) -> tuple[FloatArray, FloatArray, FloatArray]:
    d = pt - ps
    dist = np.linalg.norm(d, axis=1)
    dist = np.where(dist > 0, dist, 1.0)
    d_unit = d / dist[:, None]

    # the end whose normal makes the smaller angle with the line is the source
    cos_s = np.abs(np.einsum("ni,ni->n", ns, d_unit))
    cos_t = np.abs(np.einsum("ni,ni->n", nt, d_unit))
    swap = cos_s < cos_t
    u = np.where(swap[:, None], nt, ns)
    other = np.where(swap[:, None], ns, nt)
    d_unit = np.where(swap[:, None], -d_unit, d_unit)

    v = np.cross(d_unit, u)
    v_norm = np.linalg.norm(v, axis=1)
    v = v / np.where(v_norm > 0, v_norm, 1.0)[:, None]
    w = np.cross(u, v)

    alpha = np.einsum("ni,ni->n", v, other)
    phi = np.einsum("ni,ni->n", u, d_unit)
    theta = np.arctan2(
        np.einsum("ni,ni->n", w, other), np.einsum("ni,ni->n", u, other)
    )
    return alpha, phi, theta


def _bin(values: FloatArray, low: float, high: float) -> npt.NDArray[np.intp]:
    scaled = (values - low) / (high - low) * BINS_PER_FEATURE
    return np.clip(np.floor(scaled), 0, BINS_PER_FEATURE - 1).astype(np.intp)


def compute_fpfh(
    points: FloatArray,
    normals: FloatArray,
    radius: float,
    valid: npt.NDArray[np.bool_] | None = None,
) -> FloatArray:
    """
    FPFH descriptors (N, 33) for `points` with unit `normals`.

    Points flagged invalid neither receive nor contribute pair features; their
    descriptor rows are zero. Each 11-bin block of a simplified histogram is
    normalized to sum 100 before neighbour weighting.
    """
    n = len(points)
    valid = np.ones(n, dtype=bool) if valid is None else valid
    spfh = np.zeros((n, DESCRIPTOR_SIZE))
    if n < 2:
        return spfh

    tree = cKDTree(points)
    src, dst = _pairs(tree, points, radius)
    keep = valid[src] & valid[dst]
    src, dst = src[keep], dst[keep]
    if len(src) == 0:
        return spfh

    alpha, phi, theta = _darboux_features(
        points[src], normals[src], points[dst], normals[dst]
    )
    for block, (values, low, high) in enumerate(
        ((alpha, -1.0, 1.0), (phi, -1.0, 1.0), (theta, -np.pi, np.pi))
    ):
        np.add.at(spfh, (src, block * BINS_PER_FEATURE + _bin(values, low, high)), 1.0)

    counts = np.bincount(src, minlength=n).astype(np.float64)
    has = counts > 0
    spfh[has] *= 100.0 / counts[has, None]

    # weighted neighbour sum, weights 1 / distance
    dist = np.linalg.norm(points[dst] - points[src], axis=1)
    weights = 1.0 / np.maximum(dist, 1e-6)
    neighbor_sum = np.zeros_like(spfh)
    np.add.at(neighbor_sum, src, weights[:, None] * spfh[dst])
    fpfh = spfh.copy()
    fpfh[has] += neighbor_sum[has] / counts[has, None]
    return fpfh
