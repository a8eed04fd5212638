import math

import numpy as np
import pytest

from scenelift.geom import Plane, gravity_align, yaw_matrix
from scenelift.orient import (
    MIN_EXTENT,
    OrientedBox,
    estimate_orientation,
    fit_obb,
    pose_pair,
)

from conftest import box_cloud

BOX_SIZE = (1.8, 0.9, 0.8)


def angle_diff_mod_pi(a, b):
    d = (a - b) % math.pi
    return min(d, math.pi - d)


class TestOrientedBox:
    def test_y_extents(self):
        box = OrientedBox(center=[1.0, 0.5, -2.0], size=[1.0, 2.0, 3.0], theta=0.1)
        assert box.y_min == pytest.approx(-0.5)
        assert box.y_max == pytest.approx(1.5)

    def test_rejects_non_positive_size(self):
        with pytest.raises(ValueError):
            OrientedBox(center=np.zeros(3), size=[1.0, 0.0, 1.0], theta=0.0)


class TestEstimateOrientation:
    @pytest.mark.parametrize("deg", [0, 15, 45, 90, 130, 165])
    def test_recovers_planted_yaw(self, rng, deg):
        want = math.radians(deg)
        cloud = box_cloud(rng, BOX_SIZE, theta=want)
        got = estimate_orientation(cloud, Plane.horizontal(0.0))
        assert angle_diff_mod_pi(got, want) < math.radians(2.0)

    def test_tolerates_centimeter_noise(self, rng):
        want = math.radians(75.0)
        cloud = box_cloud(rng, BOX_SIZE, theta=want, noise=0.01)
        got = estimate_orientation(cloud, Plane.horizontal(0.0))
        assert angle_diff_mod_pi(got, want) < math.radians(5.0)

    def test_result_in_half_turn_range(self, rng):
        cloud = box_cloud(rng, BOX_SIZE, theta=math.radians(250.0))
        got = estimate_orientation(cloud, Plane.horizontal(0.0))
        assert 0.0 <= got < math.pi

    def test_tilted_ground(self, rng):
        # Build the cloud in a tilted frame; the estimate must undo the tilt.
        want = math.radians(40.0)
        upright = box_cloud(rng, BOX_SIZE, theta=want)
        normal = np.array([0.2, 1.0, -0.1])
        normal /= np.linalg.norm(normal)
        ground = Plane(normal, 0.0)
        tilt = gravity_align(ground).inverse()
        got = estimate_orientation(tilt.apply(upright), ground)
        assert angle_diff_mod_pi(got, want) < math.radians(2.0)


class TestFitObb:
    def test_recovers_size_and_center(self, rng):
        theta = math.radians(25.0)
        center = (0.7, 0.45, -1.2)
        cloud = box_cloud(rng, BOX_SIZE, center=center, theta=theta, n=20000)
        box = fit_obb(cloud, theta, Plane.horizontal(0.0))
        for got, want in zip(box.size, BOX_SIZE):
            assert abs(got - want) / want < 0.03
        assert np.linalg.norm(box.center - np.asarray(center)) < 0.05
        assert box.theta == pytest.approx(theta, abs=1e-12)

    def test_theta_stored_mod_pi(self, rng):
        theta = math.radians(200.0)
        cloud = box_cloud(rng, BOX_SIZE, theta=theta)
        box = fit_obb(cloud, theta, Plane.horizontal(0.0))
        assert box.theta == pytest.approx(theta % math.pi, abs=1e-12)

    def test_trimming_ignores_outlier_tail(self, rng):
        cloud = box_cloud(rng, BOX_SIZE, n=20000)
        k = cloud.shape[0] // 200  # 0.5% wild points
        spikes = rng.uniform(20.0, 40.0, size=(k, 3))
        box = fit_obb(np.vstack([cloud, spikes]), 0.0, Plane.horizontal(0.0))
        for got, want in zip(box.size, BOX_SIZE):
            assert abs(got - want) / want < 0.03

    def test_quantile_span_on_known_grid(self):
        # 101 evenly spaced points on [0, 1]: the 1%..99% span is exactly 0.98.
        line = np.zeros((101, 3))
        line[:, 0] = np.linspace(0.0, 1.0, 101)
        line[:, 1] = np.linspace(0.0, 1.0, 101)
        line[:, 2] = np.linspace(0.0, 1.0, 101)
        box = fit_obb(line, 0.0, Plane.horizontal(0.0))
        assert np.allclose(box.size, 0.98, atol=1e-12)
        assert np.allclose(box.center, [0.5, 0.5, 0.5], atol=1e-12)

    def test_flat_cloud_floors_extent(self, rng):
        flat = np.column_stack(
            [rng.uniform(-1, 1, 500), np.zeros(500), rng.uniform(-1, 1, 500)]
        )
        with pytest.warns(UserWarning):
            box = fit_obb(flat, 0.0, Plane.horizontal(0.0))
        assert box.size[1] == MIN_EXTENT
        assert box.size[0] > 1.0

    def test_tilted_ground_same_size(self, rng):
        theta = math.radians(60.0)
        upright = box_cloud(rng, BOX_SIZE, theta=theta, n=20000)
        normal = np.array([0.15, 1.0, 0.2])
        normal /= np.linalg.norm(normal)
        ground = Plane(normal, 0.0)
        tilted = gravity_align(ground).inverse().apply(upright)
        box = fit_obb(tilted, theta, ground)
        for got, want in zip(box.size, BOX_SIZE):
            assert abs(got - want) / want < 0.03


class TestPosePair:
    def test_hypotheses_differ_by_half_turn(self):
        box = OrientedBox(center=[1.0, 0.5, 2.0], size=[1.0, 1.0, 1.0], theta=0.8)
        pair = pose_pair(box)
        assert np.allclose(pair.primary.translation, box.center)
        assert np.allclose(pair.flipped.translation, box.center)
        assert np.allclose(
            pair.primary.rotation, yaw_matrix(0.8), atol=1e-12
        )
        assert np.allclose(
            pair.flipped.rotation, yaw_matrix(0.8 + math.pi), atol=1e-12
        )
        # Flipped = primary composed with a half turn.
        rel = pair.primary.rotation.T @ pair.flipped.rotation
        assert np.allclose(rel, yaw_matrix(math.pi), atol=1e-12)
