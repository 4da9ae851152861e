"""
Synthetic underground worlds: free space is a union of axis-aligned boxes,
walls are its boundary. Floors sit at z = 0.
"""

from dataclasses import dataclass, field
from typing import TypeAlias

import numpy as np
import numpy.typing as npt
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from burrow.geometry.se3 import as_cloud
from burrow.sim.config import Preset, SimConfig
from burrow.utils.exceptions import SimulationError

FloatArray: TypeAlias = npt.NDArray[np.float64]

# a ray leaving one box continues through any box it is still inside
_STEP = 1e-6
SENSOR_HEIGHT = 1.0
MIN_MARKER_AREA = 0.5

# fiducial plates on the entrance walls, relative to the gate position
_GATE_MARKERS = np.array(
    [[1.5, 1.8, 2.6], [3.0, -1.8, 0.4], [4.5, 1.6, 0.9]], dtype=np.float64
)


@dataclass(frozen=True)
class Box:
    low: tuple[float, float, float]
    high: tuple[float, float, float]

    def __post_init__(self) -> None:
        if any(h <= lo for lo, h in zip(self.low, self.high, strict=True)):
            raise SimulationError(f"box {self.low}..{self.high} has no volume")


@dataclass(frozen=True, eq=False)
class World:
    """
    Corridor boxes, robot routes (x, y waypoints at sensor height) and the
    three surveyed gate markers. `repeated` marks stretches built to look
    like another part of the world.
    """

    name: str
    boxes: tuple[Box, ...]
    routes: tuple[FloatArray, ...]
    markers: FloatArray
    repeated: tuple[Box, ...] = ()
    lows: FloatArray = field(init=False, repr=False)
    highs: FloatArray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "lows", np.array([b.low for b in self.boxes]))
        object.__setattr__(self, "highs", np.array([b.high for b in self.boxes]))
        object.__setattr__(self, "markers", as_cloud(self.markers))
        self.check()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, World):
            return NotImplemented
        return (
            self.name == other.name
            and self.boxes == other.boxes
            and len(self.routes) == len(other.routes)
            and all(np.array_equal(a, b) for a, b in zip(self.routes, other.routes))
            and np.array_equal(self.markers, other.markers)
            and self.repeated == other.repeated
        )

    __hash__ = None  # type: ignore[assignment]

    def check(self) -> None:
        """
        Raises:
            SimulationError: if the boxes do not form one connected space or
                the markers are collinear.
        """
        if not self.boxes:
            raise SimulationError("world has no corridors")
        touching = np.all(
            (self.lows[:, None, :] <= self.highs[None, :, :])
            & (self.lows[None, :, :] <= self.highs[:, None, :]),
            axis=2,
        )
        rows, cols = np.nonzero(touching)
        n = len(self.boxes)
        adjacency = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        count, _ = connected_components(adjacency, directed=False)
        if count != 1:
            raise SimulationError(f"corridors form {count} disconnected parts")
        if self.markers.shape != (3, 3):
            raise SimulationError("a gate needs exactly three markers")
        m = self.markers
        area = 0.5 * float(np.linalg.norm(np.cross(m[1] - m[0], m[2] - m[0])))
        if area < MIN_MARKER_AREA:
            raise SimulationError(f"gate markers nearly collinear (area {area:.3g})")

    def contains(self, points: npt.ArrayLike) -> npt.NDArray[np.bool_]:
        pts = as_cloud(points)
        inside = (self.lows[None] <= pts[:, None]) & (pts[:, None] <= self.highs[None])
        return np.asarray(inside.all(axis=2).any(axis=1))

    def in_repeated(self, points: npt.ArrayLike) -> npt.NDArray[np.bool_]:
        pts = as_cloud(points)
        if not self.repeated:
            return np.zeros(len(pts), dtype=bool)
        lows = np.array([b.low for b in self.repeated])
        highs = np.array([b.high for b in self.repeated])
        inside = (lows[None] <= pts[:, None]) & (pts[:, None] <= highs[None])
        return np.asarray(inside.all(axis=2).any(axis=1))

    def raycast(
        self, origin: npt.ArrayLike, directions: npt.ArrayLike, max_range: float
    ) -> FloatArray:
        """
        Distance along each unit direction from `origin` to the first wall,
        or inf when the wall is beyond `max_range` or the origin is outside.
        """
        o = np.asarray(origin, dtype=np.float64).reshape(3)
        d = as_cloud(directions)
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (self.lows[:, None, :] - o) / d[None]
            t2 = (self.highs[:, None, :] - o) / d[None]
        near = np.minimum(t1, t2)
        far = np.maximum(t1, t2)
        parallel = np.broadcast_to(d[None] == 0.0, near.shape)
        slab = ((self.lows <= o) & (o <= self.highs))[:, None, :]
        slab = np.broadcast_to(slab, near.shape)
        near = np.where(parallel, np.where(slab, -np.inf, np.inf), near)
        far = np.where(parallel, np.where(slab, np.inf, -np.inf), far)
        enter = near.max(axis=2)
        leave = far.min(axis=2)

        t = np.zeros(len(d))
        for _ in range(len(self.boxes) + 1):
            covering = (enter <= t + _STEP) & (leave > t + _STEP)
            reach = np.where(covering, leave, -np.inf).max(axis=0)
            advance = reach > t + _STEP
            if not advance.any():
                break
            t = np.where(advance, reach, t)
        return np.where((t > 0) & (t <= max_range), t, np.inf)


def _corridor(
    a: tuple[float, float], b: tuple[float, float], width: float, height: float
) -> Box:
    """Box around the axis-aligned centerline a-b, extended by half a width."""
    half = width / 2.0
    (x0, x1), (y0, y1) = sorted((a[0], b[0])), sorted((a[1], b[1]))
    return Box((x0 - half, y0 - half, 0.0), (x1 + half, y1 + half, height))


def _alcoves(
    corridor: Box, count: int, rng: np.random.Generator, *, along_x: bool
) -> list[Box]:
    """Side niches breaking up otherwise featureless walls."""
    niches: list[Box] = []
    lo, hi = np.array(corridor.low), np.array(corridor.high)
    axis, side_axis = (0, 1) if along_x else (1, 0)
    for _ in range(count):
        length = rng.uniform(1.5, 3.0)
        depth = rng.uniform(0.8, 2.0)
        start = rng.uniform(lo[axis] + 4.0, hi[axis] - 4.0 - length)
        n_lo, n_hi = lo.copy(), hi.copy()
        n_lo[axis], n_hi[axis] = start, start + length
        if rng.random() < 0.5:
            n_lo[side_axis] = hi[side_axis] - 0.1
            n_hi[side_axis] = hi[side_axis] + depth
        else:
            n_lo[side_axis] = lo[side_axis] - depth
            n_hi[side_axis] = lo[side_axis] + 0.1
        n_hi[2] = hi[2] * rng.uniform(0.6, 1.0)
        niches.append(Box(tuple(n_lo), tuple(n_hi)))  # type: ignore[arg-type]
    return niches


def _loop_world(
    length: float,
    depth: float,
    width: float,
    height: float,
    rng: np.random.Generator,
    alcoves_per_side: int,
) -> tuple[list[Box], tuple[FloatArray, ...], FloatArray]:
    """A rectangular loop with an entrance stub to the west of (0, 0)."""
    bottom = _corridor((0.0, 0.0), (length, 0.0), width, height)
    top = _corridor((0.0, depth), (length, depth), width, height)
    left = _corridor((0.0, 0.0), (0.0, depth), width, height)
    right = _corridor((length, 0.0), (length, depth), width, height)
    gate = _corridor((-12.0, 0.0), (0.0, 0.0), max(width, 4.0), height)
    boxes = [gate, bottom, top, left, right]
    for box, along_x in ((bottom, True), (top, True), (left, False), (right, False)):
        boxes.extend(_alcoves(box, alcoves_per_side, rng, along_x=along_x))
    z = SENSOR_HEIGHT
    forward = np.array(
        [(-10.0, -0.3), (0.0, -0.3), (length, -0.3), (length, depth),
         (0.0, depth), (0.0, 0.0), (length / 3.0, 0.0)]
    )
    reverse = np.array(
        [(-9.0, 0.3), (0.0, 0.3), (0.0, depth), (length, depth),
         (length, 0.0), (0.0, 0.0), (0.0, depth * 2.0 / 3.0)]
    )
    routes = tuple(np.column_stack([r, np.full(len(r), z)]) for r in (forward, reverse))
    markers = _GATE_MARKERS + np.array([-12.0, 0.0, 0.0])
    return boxes, routes, markers


def _tunnel(rng: np.random.Generator) -> World:
    boxes, routes, markers = _loop_world(60.0, 30.0, 3.0, 3.0, rng, 3)
    return World("tunnel", tuple(boxes), routes, markers)


def _urban(rng: np.random.Generator) -> World:
    boxes, routes, markers = _loop_world(40.0, 24.0, 4.0, 3.5, rng, 2)
    # rooms hanging off the loop
    for cx, cy in ((20.0, 0.0), (40.0, 12.0), (10.0, 24.0)):
        size = rng.uniform(8.0, 12.0)
        half = size / 2.0
        boxes.append(Box((cx - half, cy - half, 0.0), (cx + half, cy + half, 5.0)))
    return World("urban-like", tuple(boxes), routes, markers)


def _ku(rng: np.random.Generator) -> World:
    width, height = 15.0, 8.0
    xs, ys = (0.0, 60.0, 120.0), (0.0, 60.0)
    boxes = [_corridor((-25.0, 0.0), (0.0, 0.0), width, height)]
    for y in ys:
        boxes.append(_corridor((xs[0], y), (xs[-1], y), width, height))
    for x in xs:
        boxes.append(_corridor((x, ys[0]), (x, ys[-1]), width, height))
    for box in boxes[1:]:
        along_x = (box.high[0] - box.low[0]) > (box.high[1] - box.low[1])
        boxes.extend(_alcoves(box, 3, rng, along_x=along_x))
    z = SENSOR_HEIGHT
    first = np.array(
        [(-20.0, -2.0), (60.0, -2.0), (60.0, 60.0), (0.0, 60.0), (0.0, 0.0)]
        + [(30.0, 0.0)]
    )
    second = np.array(
        [(-20.0, 2.0), (120.0, 2.0), (120.0, 60.0), (60.0, 60.0), (60.0, 3.0)]
        + [(90.0, 3.0)]
    )
    routes = tuple(np.column_stack([r, np.full(len(r), z)]) for r in (first, second))
    markers = _GATE_MARKERS * np.array([1.0, 4.0, 1.0]) + np.array([-25.0, 0.0, 0.0])
    return World("ku", tuple(boxes), routes, markers)


def _aliasing(rng: np.random.Generator) -> World:
    """
    Loop whose bottom corridor holds the same niche pattern twice, 60 m apart.
    Every other corridor gets niches of its own, so only the two repeated
    sections look alike.
    """
    length, depth, width, height = 120.0, 30.0, 4.0, 3.0
    bottom = _corridor((0.0, 0.0), (length, 0.0), width, height)
    top = _corridor((0.0, depth), (length, depth), width, height)
    left = _corridor((0.0, 0.0), (0.0, depth), width, height)
    right = _corridor((length, 0.0), (length, depth), width, height)
    template = Box((0.0, bottom.low[1], 0.0), (20.0, bottom.high[1], height))
    pattern = _alcoves(template, 4, rng, along_x=True)
    boxes = [
        _corridor((-12.0, 0.0), (0.0, 0.0), width, height),
        bottom,
        top,
        left,
        right,
    ]
    repeated: list[Box] = []
    for offset in (20.0, 80.0):
        repeated.append(
            Box(
                (template.low[0] + offset, template.low[1], 0.0),
                (template.high[0] + offset, template.high[1], height),
            )
        )
        for niche in pattern:
            boxes.append(
                Box(
                    (niche.low[0] + offset, niche.low[1], niche.low[2]),
                    (niche.high[0] + offset, niche.high[1], niche.high[2]),
                )
            )
    middle = Box((44.0, bottom.low[1], 0.0), (76.0, bottom.high[1], height))
    unique = ((middle, True), (top, True), (left, False), (right, False))
    for corridor, along_x in unique:
        boxes.extend(_alcoves(corridor, 3, rng, along_x=along_x))
    z = SENSOR_HEIGHT
    forward = np.array(
        [(-10.0, -0.3), (0.0, -0.3), (length, -0.3), (length, depth),
         (0.0, depth), (0.0, 0.0), (50.0, 0.0)]
    )
    reverse = np.array(
        [(-9.0, 0.3), (0.0, 0.3), (0.0, depth), (length, depth),
         (length, 0.0), (0.0, 0.0), (0.0, 20.0)]
    )
    routes = tuple(np.column_stack([r, np.full(len(r), z)]) for r in (forward, reverse))
    markers = _GATE_MARKERS + np.array([-12.0, 0.0, 0.0])
    return World(
        "aliasing-stress", tuple(boxes), routes, markers, repeated=tuple(repeated)
    )


_PRESETS = {
    "tunnel": _tunnel,
    "ku": _ku,
    "urban-like": _urban,
    "aliasing-stress": _aliasing,
}


def build_world(preset: Preset, seed: int) -> World:
    """Deterministic world for `preset`; the seed only moves niches and rooms."""
    try:
        factory = _PRESETS[preset]
    except KeyError:
        raise SimulationError(f"unknown world preset {preset!r}") from None
    return factory(np.random.default_rng(seed))


def generate_world(cfg: SimConfig) -> World:
    return build_world(cfg.preset, cfg.seed)
