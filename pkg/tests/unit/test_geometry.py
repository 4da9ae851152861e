import math

import numpy as np
import pytest

from burrow.geometry.lie import (
    adjoint,
    se3_exp_rt,
    se3_log_rt,
    se3_right_jacobian_inv,
    skew,
    so3_left_jacobian,
    so3_left_jacobian_inv,
)
from burrow.geometry.se3 import (
    Pose6,
    as_cloud,
    rotation_geodesic_deg,
    se3_between,
    se3_compose,
    se3_exp,
    se3_inverse,
    se3_log,
    translation_distance,
)
from burrow.utils.exceptions import GimbalBoundaryError


def _close(a: Pose6, b: Pose6, tol: float = 1e-9) -> bool:
    return bool(np.allclose(a.matrix, b.matrix, atol=tol))


def _random_pose(rng: np.random.Generator, max_angle: float = 2.5) -> Pose6:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return Pose6.from_rotvec(
        axis * rng.uniform(0.0, max_angle), rng.uniform(-10.0, 10.0, 3)
    )


class TestPose6:
    def test_quaternion_is_canonical(self):
        pose = Pose6((-2.0, 0.0, 0.0, 0.0), (1.0, 2.0, 3.0))

        assert pose.rotation == (1.0, 0.0, 0.0, 0.0)

    def test_negated_quaternion_is_the_same_pose(self):
        q = (0.5, 0.5, -0.5, 0.5)
        assert Pose6(q) == Pose6(tuple(-v for v in q))  # type: ignore[arg-type]

    def test_rejects_non_finite_translation(self):
        with pytest.raises(ValueError):
            Pose6(translation=(0.0, math.nan, 0.0))

    def test_from_matrix_round_trip(self, rng: np.random.Generator):
        pose = _random_pose(rng)
        assert _close(Pose6.from_matrix(pose.matrix), pose)

    def test_from_yaw(self):
        pose = Pose6.from_yaw(90.0, (1.0, 0.0, 0.0))

        assert pose.yaw_deg == pytest.approx(90.0)
        np.testing.assert_allclose(
            pose.transform_points([[1.0, 0.0, 0.0]]), [[1.0, 1.0, 0.0]], atol=1e-12
        )

    def test_as_vector_ordering(self):
        pose = Pose6((1.0, 0.0, 0.0, 0.0), (1.0, 2.0, 3.0))
        assert pose.as_vector() == [1.0, 2.0, 3.0, 1.0, 0.0, 0.0, 0.0]


class TestGroupLaws:
    def test_identity(self, rng: np.random.Generator):
        pose = _random_pose(rng)
        identity = Pose6.identity()

        assert _close(se3_compose(identity, pose), pose)
        assert _close(se3_compose(pose, identity), pose)

    def test_inverse(self, rng: np.random.Generator):
        for _ in range(20):
            pose = _random_pose(rng)
            assert _close(se3_compose(pose, se3_inverse(pose)), Pose6.identity())
            assert _close(se3_compose(se3_inverse(pose), pose), Pose6.identity())

    def test_associativity(self, rng: np.random.Generator):
        for _ in range(20):
            a, b, c = (_random_pose(rng) for _ in range(3))
            assert _close((a @ b) @ c, a @ (b @ c))

    def test_between(self, rng: np.random.Generator):
        a, b = _random_pose(rng), _random_pose(rng)
        assert _close(a @ se3_between(a, b), b)

    def test_compose_matches_matrices(self, rng: np.random.Generator):
        a, b = _random_pose(rng), _random_pose(rng)
        np.testing.assert_allclose((a @ b).matrix, a.matrix @ b.matrix, atol=1e-9)


class TestExpLog:
    def test_round_trip(self, rng: np.random.Generator):
        for _ in range(50):
            pose = _random_pose(rng, max_angle=math.pi - 1e-3)
            assert _close(se3_exp(se3_log(pose)), pose, tol=1e-8)

    def test_small_angles_use_series(self):
        twist = np.array([1e-9, -2e-9, 3e-9, 0.5, -0.25, 1.0])
        np.testing.assert_allclose(se3_log(se3_exp(twist)), twist, atol=1e-12)

    def test_pure_translation(self):
        pose = Pose6(translation=(1.0, 2.0, 3.0))
        np.testing.assert_allclose(se3_log(pose), [0, 0, 0, 1, 2, 3], atol=1e-12)

    def test_gimbal_boundary(self):
        at_pi = Pose6.from_rotvec([0.0, 0.0, math.pi], (1.0, 0.0, 0.0))
        with pytest.raises(GimbalBoundaryError):
            se3_log(at_pi)

    def test_just_inside_boundary_is_fine(self):
        pose = Pose6.from_rotvec([0.0, math.pi - 1e-4, 0.0])
        assert np.linalg.norm(se3_log(pose)[:3]) == pytest.approx(math.pi - 1e-4)

    def test_batched_exp_log(self, rng: np.random.Generator):
        twists = rng.normal(scale=0.5, size=(10, 6))
        rotation, translation = se3_exp_rt(twists)

        np.testing.assert_allclose(se3_log_rt(rotation, translation), twists, atol=1e-9)


class TestJacobians:
    def test_skew_is_cross_product(self, rng: np.random.Generator):
        a, b = rng.normal(size=3), rng.normal(size=3)
        np.testing.assert_allclose(skew(a) @ b, np.cross(a, b))

    def test_left_jacobian_inverse(self, rng: np.random.Generator):
        for omega in [rng.normal(size=3), np.array([1e-4, 0.0, 0.0])]:
            np.testing.assert_allclose(
                so3_left_jacobian(omega) @ so3_left_jacobian_inv(omega),
                np.eye(3),
                atol=1e-9,
            )

    def test_right_jacobian_inverse_first_order(self, rng: np.random.Generator):
        xi = rng.normal(scale=0.7, size=6)
        delta = rng.normal(scale=1e-6, size=6)
        pose = se3_exp(xi)

        perturbed = se3_log(pose @ se3_exp(delta))

        np.testing.assert_allclose(
            perturbed, xi + se3_right_jacobian_inv(xi) @ delta, atol=1e-9
        )

    def test_adjoint_moves_twists_between_frames(self, rng: np.random.Generator):
        pose = _random_pose(rng)
        xi = rng.normal(scale=0.1, size=6)
        moved = se3_exp(adjoint(pose.rotation_matrix, pose.t) @ xi)

        assert _close(moved, pose @ se3_exp(xi) @ pose.inverse(), tol=1e-9)


class TestDistances:
    def test_geodesic_and_translation(self):
        a = Pose6.identity()
        b = Pose6.from_yaw(45.0, (3.0, 4.0, 0.0))

        assert rotation_geodesic_deg(a, b) == pytest.approx(45.0)
        assert translation_distance(a, b) == pytest.approx(5.0)

    def test_geodesic_is_symmetric_and_bounded(self, rng: np.random.Generator):
        a, b = _random_pose(rng, 3.1), _random_pose(rng, 3.1)
        angle = rotation_geodesic_deg(a, b)

        assert angle == pytest.approx(rotation_geodesic_deg(b, a))
        assert 0.0 <= angle <= 180.0

    def test_as_cloud(self):
        assert as_cloud([]).shape == (0, 3)
        with pytest.raises(ValueError):
            as_cloud([[0.0, 1.0]])
        with pytest.raises(ValueError):
            as_cloud([[0.0, np.inf, 1.0]])
