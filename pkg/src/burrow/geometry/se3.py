"""
SE(3) poses and the operations every other module builds on.

`Pose6` is an immutable value: a unit quaternion (w, x, y, z) with w >= 0 and a
translation in meters. Twists are numpy vectors ordered (rx, ry, rz, tx, ty, tz).
"""

import math
from dataclasses import dataclass, field
from typing import TypeAlias

import numpy as np
import numpy.typing as npt
from scipy.spatial.transform import Rotation

from burrow.geometry.lie import so3_left_jacobian, so3_left_jacobian_inv
from burrow.utils.exceptions import GimbalBoundaryError

Twist6: TypeAlias = npt.NDArray[np.float64]
PointCloud: TypeAlias = npt.NDArray[np.floating]

# se3_log refuses rotations this close to pi
LOG_BOUNDARY = 1e-6


def _canonical(q: npt.ArrayLike) -> tuple[float, float, float, float]:
    arr = np.asarray(q, dtype=np.float64)
    norm = float(np.linalg.norm(arr))
    if not math.isfinite(norm) or norm == 0.0:
        raise ValueError(f"invalid quaternion {arr!r}")
    # leave unit quaternions bit-identical so text round trips are exact
    if abs(norm - 1.0) > 1e-12:
        arr = arr / norm
    # resolve the double cover
    if arr[0] < 0.0:
        arr = -arr
    return (float(arr[0]), float(arr[1]), float(arr[2]), float(arr[3]))


def _hamilton(
    a: tuple[float, float, float, float], b: tuple[float, float, float, float]
) -> tuple[float, float, float, float]:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


@dataclass(frozen=True)
class Pose6:
    """
    Rigid transform in SE(3).

    Args:
        rotation: unit quaternion (w, x, y, z); renormalized and forced to w >= 0.
        translation: (x, y, z) in meters.
    """

    rotation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    translation: tuple[float, float, float] = field(default=(0.0, 0.0, 0.0))

    def __post_init__(self) -> None:
        object.__setattr__(self, "rotation", _canonical(self.rotation))
        t = tuple(float(v) for v in self.translation)
        if len(t) != 3 or not all(math.isfinite(v) for v in t):
            raise ValueError(f"invalid translation {self.translation!r}")
        object.__setattr__(self, "translation", t)

    # --- constructors ---
    @classmethod
    def identity(cls) -> "Pose6":
        return cls()

    @classmethod
    def from_rt(cls, rotation: npt.ArrayLike, translation: npt.ArrayLike) -> "Pose6":
        """Build from a 3x3 rotation matrix and a translation vector."""
        matrix = np.asarray(rotation, dtype=np.float64)
        x, y, z, w = Rotation.from_matrix(matrix).as_quat()
        return cls((w, x, y, z), tuple(np.asarray(translation, dtype=np.float64)))

    @classmethod
    def from_matrix(cls, matrix: npt.ArrayLike) -> "Pose6":
        m = np.asarray(matrix, dtype=np.float64)
        return cls.from_rt(m[:3, :3], m[:3, 3])

    @classmethod
    def from_rotvec(
        cls, rotvec: npt.ArrayLike, translation: npt.ArrayLike = (0.0, 0.0, 0.0)
    ) -> "Pose6":
        vec = np.asarray(rotvec, dtype=np.float64)
        x, y, z, w = Rotation.from_rotvec(vec).as_quat()
        return cls((w, x, y, z), tuple(np.asarray(translation, dtype=np.float64)))

    @classmethod
    def from_yaw(
        cls, yaw_deg: float, translation: npt.ArrayLike = (0.0, 0.0, 0.0)
    ) -> "Pose6":
        half = math.radians(yaw_deg) / 2.0
        t = np.asarray(translation, dtype=np.float64)
        return cls((math.cos(half), 0.0, 0.0, math.sin(half)), (t[0], t[1], t[2]))

    # --- views ---
    @property
    def rotation_matrix(self) -> npt.NDArray[np.float64]:
        w, x, y, z = self.rotation
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    @property
    def t(self) -> npt.NDArray[np.float64]:
        return np.asarray(self.translation, dtype=np.float64)

    @property
    def matrix(self) -> npt.NDArray[np.float64]:
        out = np.eye(4)
        out[:3, :3] = self.rotation_matrix
        out[:3, 3] = self.translation
        return out

    @property
    def yaw_deg(self) -> float:
        w, x, y, z = self.rotation
        return math.degrees(math.atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z)))

    # --- algebra ---
    def inverse(self) -> "Pose6":
        return se3_inverse(self)

    def __matmul__(self, other: "Pose6") -> "Pose6":
        return se3_compose(self, other)

    def transform_points(self, points: npt.ArrayLike) -> npt.NDArray[np.float64]:
        """Apply this transform to an (N, 3) array."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return pts @ self.rotation_matrix.T + self.t

    def as_vector(self) -> list[float]:
        """(tx, ty, tz, qw, qx, qy, qz), the on-disk ordering."""
        return [*self.translation, *self.rotation]


def se3_compose(a: Pose6, b: Pose6) -> Pose6:
    """a * b; the quaternion is renormalized."""
    q = _hamilton(a.rotation, b.rotation)
    t = a.transform_points(b.t)[0]
    return Pose6(q, tuple(t))


def se3_inverse(p: Pose6) -> Pose6:
    w, x, y, z = p.rotation
    q_inv = (w, -x, -y, -z)
    r_inv = p.rotation_matrix.T
    return Pose6(q_inv, tuple(-(r_inv @ p.t)))


def se3_between(a: Pose6, b: Pose6) -> Pose6:
    """inverse(a) * b: pose of b expressed in the frame of a."""
    return se3_compose(se3_inverse(a), b)


def se3_exp(v: npt.ArrayLike) -> Pose6:
    """Exponential map of a rotation-first twist."""
    xi = np.asarray(v, dtype=np.float64).reshape(6)
    omega, rho = xi[:3], xi[3:]
    x, y, z, w = Rotation.from_rotvec(omega).as_quat()
    t = so3_left_jacobian(omega) @ rho
    return Pose6((w, x, y, z), tuple(t))


def se3_log(p: Pose6) -> Twist6:
    """
    Logarithm map as a rotation-first twist.

    Raises:
        GimbalBoundaryError: if the rotation angle is within 1e-6 of pi.
    """
    w, x, y, z = p.rotation
    vec = np.array([x, y, z])
    s = float(np.linalg.norm(vec))
    theta = 2.0 * math.atan2(s, w)
    if theta > math.pi - LOG_BOUNDARY:
        raise GimbalBoundaryError(
            f"rotation angle {theta:.9f} rad is at the log-map boundary"
        )
    omega = np.zeros(3) if s == 0.0 else vec * (theta / s)
    rho = so3_left_jacobian_inv(omega) @ p.t
    return np.concatenate([omega, rho])


def rotation_angle_rad(a: Pose6, b: Pose6) -> float:
    """Geodesic angle between the rotations of a and b, in [0, pi]."""
    aw, ax, ay, az = a.rotation
    w, x, y, z = _hamilton((aw, -ax, -ay, -az), b.rotation)
    return 2.0 * math.atan2(math.sqrt(x * x + y * y + z * z), abs(w))


def rotation_geodesic_deg(a: Pose6, b: Pose6) -> float:
    """Geodesic angle between the rotations of a and b, in degrees [0, 180]."""
    return math.degrees(rotation_angle_rad(a, b))


def translation_distance(a: Pose6, b: Pose6) -> float:
    return float(np.linalg.norm(a.t - b.t))


def as_cloud(points: npt.ArrayLike) -> npt.NDArray[np.float64]:
    """Validate and return an (N, 3) float64 cloud with finite coordinates."""
    cloud = np.asarray(points, dtype=np.float64)
    if cloud.size == 0:
        return cloud.reshape(0, 3)
    if cloud.ndim != 2 or cloud.shape[1] != 3:
        raise ValueError(f"expected an (N, 3) cloud, got shape {cloud.shape}")
    if not np.all(np.isfinite(cloud)):
        raise ValueError("cloud contains non-finite coordinates")
    return cloud
