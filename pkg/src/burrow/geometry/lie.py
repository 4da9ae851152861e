"""
Vectorized SO(3)/SE(3) helpers used by the optimizer, registration and ICM.

Twists are ordered rotation-first: (rx, ry, rz, tx, ty, tz). All functions
accept a single vector/matrix or a leading batch dimension.
"""

from collections.abc import Callable

import numpy as np
import numpy.typing as npt
from scipy.spatial.transform import Rotation

FloatArray = npt.NDArray[np.float64]

# below this angle the closed forms lose digits; use Taylor series instead
_SERIES_ANGLE = 0.05


def skew(v: npt.ArrayLike) -> FloatArray:
    """Return the (..., 3, 3) cross-product matrix of (..., 3) vectors."""
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _coefficient(
    theta: FloatArray,
    exact: Callable[[FloatArray], FloatArray],
    series: tuple[float, float, float],
) -> FloatArray:
    small = theta < _SERIES_ANGLE
    safe = np.where(small, 1.0, theta)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = exact(safe)
    t2 = theta * theta
    approx = series[0] + series[1] * t2 + series[2] * t2 * t2
    return np.where(small, approx, value)


def _b(theta: FloatArray) -> FloatArray:
    # (1 - cos t) / t^2
    return _coefficient(
        theta, lambda t: (1.0 - np.cos(t)) / t**2, (1 / 2, -1 / 24, 1 / 720)
    )


def _c(theta: FloatArray) -> FloatArray:
    # (t - sin t) / t^3
    return _coefficient(
        theta, lambda t: (t - np.sin(t)) / t**3, (1 / 6, -1 / 120, 1 / 5040)
    )


def _d(theta: FloatArray) -> FloatArray:
    # 1/t^2 - (1 + cos t) / (2 t sin t), written with cot(t/2) to stay finite at pi
    return _coefficient(
        theta,
        lambda t: 1.0 / t**2 - 1.0 / (2.0 * t * np.tan(t / 2.0)),
        (1 / 12, 1 / 720, 1 / 30240),
    )


def _e(theta: FloatArray) -> FloatArray:
    # (t^2 + 2 cos t - 2) / (2 t^4)
    return _coefficient(
        theta,
        lambda t: (t**2 + 2.0 * np.cos(t) - 2.0) / (2.0 * t**4),
        (1 / 24, -1 / 720, 1 / 40320),
    )


def _f(theta: FloatArray) -> FloatArray:
    # (2t - 3 sin t + t cos t) / (2 t^5)
    return _coefficient(
        theta,
        lambda t: (2.0 * t - 3.0 * np.sin(t) + t * np.cos(t)) / (2.0 * t**5),
        (1 / 120, -1 / 2520, 1 / 120960),
    )


def so3_exp(omega: npt.ArrayLike) -> FloatArray:
    """Rotation matrices from rotation vectors."""
    omega = np.asarray(omega, dtype=np.float64)
    return Rotation.from_rotvec(omega.reshape(-1, 3)).as_matrix().reshape(
        omega.shape[:-1] + (3, 3)
    )


def so3_log(rotation: npt.ArrayLike) -> FloatArray:
    """Rotation vectors (angle in [0, pi]) from rotation matrices."""
    rotation = np.asarray(rotation, dtype=np.float64)
    return Rotation.from_matrix(rotation.reshape(-1, 3, 3)).as_rotvec().reshape(
        rotation.shape[:-2] + (3,)
    )


def so3_left_jacobian(omega: npt.ArrayLike) -> FloatArray:
    """J_l(w) = I + B W + C W^2; also the SE(3) 'V' matrix."""
    omega = np.asarray(omega, dtype=np.float64)
    theta = np.linalg.norm(omega, axis=-1)[..., None, None]
    w = skew(omega)
    return np.eye(3) + _b(theta) * w + _c(theta) * (w @ w)


def so3_left_jacobian_inv(omega: npt.ArrayLike) -> FloatArray:
    """J_l(w)^-1 = I - W/2 + D W^2."""
    omega = np.asarray(omega, dtype=np.float64)
    theta = np.linalg.norm(omega, axis=-1)[..., None, None]
    w = skew(omega)
    return np.eye(3) - 0.5 * w + _d(theta) * (w @ w)


def _q_matrix(phi: FloatArray, rho: FloatArray) -> FloatArray:
    theta = np.linalg.norm(phi, axis=-1)[..., None, None]
    p = skew(phi)
    r = skew(rho)
    pr = p @ r
    rp = r @ p
    prp = pr @ p
    pp = p @ p
    return (
        0.5 * r
        + _c(theta) * (pr + rp + prp)
        + _e(theta) * (pp @ r + rp @ p - 3.0 * prp)
        + _f(theta) * (prp @ p + pp @ r @ p)
    )


def se3_right_jacobian_inv(xi: npt.ArrayLike) -> FloatArray:
    """
    Inverse right Jacobian of SE(3) for rotation-first twists, shape (..., 6, 6).

    Satisfies Log(Exp(xi) Exp(d)) = xi + Jr^-1(xi) d + O(|d|^2).
    """
    xi = np.asarray(xi, dtype=np.float64)
    phi = -xi[..., :3]
    rho = -xi[..., 3:]
    j_inv = so3_left_jacobian_inv(phi)
    q = _q_matrix(phi, rho)
    out = np.zeros(xi.shape[:-1] + (6, 6))
    out[..., :3, :3] = j_inv
    out[..., 3:, 3:] = j_inv
    out[..., 3:, :3] = -j_inv @ q @ j_inv
    return out


def adjoint(rotation: npt.ArrayLike, translation: npt.ArrayLike) -> FloatArray:
    """Adjoint of (R, t) acting on rotation-first twists: [[R, 0], [t^ R, R]]."""
    rotation = np.asarray(rotation, dtype=np.float64)
    translation = np.asarray(translation, dtype=np.float64)
    out = np.zeros(rotation.shape[:-2] + (6, 6))
    out[..., :3, :3] = rotation
    out[..., 3:, 3:] = rotation
    out[..., 3:, :3] = skew(translation) @ rotation
    return out


def se3_exp_rt(xi: npt.ArrayLike) -> tuple[FloatArray, FloatArray]:
    """Exp of rotation-first twists as (R, t) arrays."""
    xi = np.asarray(xi, dtype=np.float64)
    rotation = so3_exp(xi[..., :3])
    translation = (so3_left_jacobian(xi[..., :3]) @ xi[..., 3:, None])[..., 0]
    return rotation, translation


def se3_log_rt(rotation: npt.ArrayLike, translation: npt.ArrayLike) -> FloatArray:
    """Log of (R, t) as rotation-first twists (no boundary check)."""
    omega = so3_log(rotation)
    rho = (so3_left_jacobian_inv(omega) @ np.asarray(translation)[..., None])[..., 0]
    return np.concatenate([omega, rho], axis=-1)


def relative_rt(
    rot_a: FloatArray, t_a: FloatArray, rot_b: FloatArray, t_b: FloatArray
) -> tuple[FloatArray, FloatArray]:
    """inverse(a) * b for batched (R, t) pairs."""
    rot_at = np.swapaxes(rot_a, -1, -2)
    return rot_at @ rot_b, (rot_at @ (t_b - t_a)[..., None])[..., 0]
