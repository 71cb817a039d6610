from __future__ import annotations

import numpy as np
import pytest

from stepkit.errors import RegistrationFailedError, TooFewPointsError
from stepkit.geometry import (
    PointCloud,
    RegistrationParams,
    RigidTransform,
    center_align,
    fpfh_features,
    icp_refine,
    icp_refine_full,
    ransac_register,
    sample_points,
    scale_factor,
)
from stepkit.geometry.registration import best_fit_transform, nn_rms

from _meshes import lbracket_mesh, pyramid_mesh


def rot_z(degrees: float) -> np.ndarray:
    a = np.radians(degrees)
    return np.array([[np.cos(a), -np.sin(a), 0.0],
                     [np.sin(a), np.cos(a), 0.0],
                     [0.0, 0.0, 1.0]])


def rotation_angle_deg(r: np.ndarray) -> float:
    c = (np.trace(r) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


class TestCenterAlign:
    def test_already_centered_is_identity(self):
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(50, 3))
        pts -= pts.mean(axis=0)
        t = center_align(PointCloud(pts), PointCloud(pts.copy()))
        assert np.allclose(t.rotation, np.eye(3))
        assert np.allclose(t.translation, 0.0, atol=1e-12)

    def test_shift_recovered(self):
        rng = np.random.default_rng(1)
        q = rng.normal(size=(40, 3))
        p = q + np.array([1.0, 2.0, 3.0])
        t = center_align(PointCloud(p), PointCloud(q))
        assert np.allclose(t.translation, [-1.0, -2.0, -3.0], atol=1e-12)

    def test_centroids_coincide_after_applying(self):
        rng = np.random.default_rng(2)
        p = rng.normal(size=(30, 3)) * 4 + 7
        q = rng.normal(size=(60, 3)) - 3
        t = center_align(PointCloud(p), PointCloud(q))
        moved = t.apply(p)
        assert np.linalg.norm(moved.mean(axis=0) - q.mean(axis=0)) < 1e-12


class TestFpfh:
    def test_flat_patch_interior_histograms_identical(self):
        xs, ys = np.meshgrid(np.arange(20.0), np.arange(20.0))
        pts = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(400)])
        feats = fpfh_features(PointCloud(pts), radius=2.5)
        interior = (xs.ravel() > 3) & (xs.ravel() < 16) & \
                   (ys.ravel() > 3) & (ys.ravel() < 16)
        rows = feats[interior]
        base = rows[0]
        l1 = np.abs(rows - base).sum(axis=1)
        assert l1.max() < 0.05  # under 5% of unit histogram mass

    def test_histograms_nonnegative_unit_mass(self):
        cloud = sample_points(lbracket_mesh(), 400, seed=9)
        feats = fpfh_features(cloud, radius=0.25 * scale_factor(cloud))
        assert (feats >= 0).all()
        mass = feats.sum(axis=1)
        assert np.allclose(mass[mass > 0], 1.0, atol=1e-9)

    def test_rotation_invariance(self):
        cloud = sample_points(pyramid_mesh(), 512, seed=21)
        r = rot_z(137.0)
        rotated = PointCloud(cloud.points @ r.T)
        radius = 0.3 * scale_factor(cloud)
        f0 = fpfh_features(cloud, radius)
        f1 = fpfh_features(rotated, radius)
        assert np.abs(f0 - f1).max() < 1e-6

    def test_too_few_points(self):
        with pytest.raises(TooFewPointsError):
            fpfh_features(PointCloud(np.zeros((5, 3))), radius=1.0)


class TestBestFit:
    def test_recovers_known_transform(self):
        rng = np.random.default_rng(5)
        src = rng.normal(size=(20, 3))
        r = rot_z(33.0)
        t = np.array([0.4, -0.8, 1.6])
        dst = src @ r.T + t
        est = best_fit_transform(src, dst)
        assert np.allclose(est.rotation, r, atol=1e-10)
        assert np.allclose(est.translation, t, atol=1e-10)


class TestRansac:
    def test_rotation_recovered_within_5_degrees(self):
        cloud = sample_points(lbracket_mesh(), 512, seed=3)
        r = rot_z(30.0)
        t = np.array([0.7, -0.2, 0.4])
        target = PointCloud(cloud.points @ r.T + t)
        radius = 0.25 * scale_factor(cloud)
        fp = fpfh_features(cloud, radius)
        fq = fpfh_features(target, radius)
        params = RegistrationParams(inlier_threshold=0.05 * scale_factor(cloud), seed=4)
        est = ransac_register(cloud, target, fp, fq, params)
        err = rotation_angle_deg(est.rotation.T @ r)
        assert err < 5.0
        diameter = np.ptp(cloud.points, axis=0).max()
        assert np.linalg.norm(est.translation - t) < 0.02 * diameter

    def test_identity_clouds_near_identity(self):
        cloud = sample_points(lbracket_mesh(), 400, seed=6)
        radius = 0.25 * scale_factor(cloud)
        feats = fpfh_features(cloud, radius)
        params = RegistrationParams(inlier_threshold=0.05 * scale_factor(cloud), seed=1)
        est = ransac_register(cloud, cloud, feats, feats, params)
        assert rotation_angle_deg(est.rotation) < 0.1
        assert np.linalg.norm(est.translation) < 1e-3 * scale_factor(cloud) * 10

    def test_deterministic_under_seed(self):
        cloud = sample_points(pyramid_mesh(), 300, seed=8)
        target = PointCloud(cloud.points @ rot_z(45.0).T)
        radius = 0.3 * scale_factor(cloud)
        fp = fpfh_features(cloud, radius)
        fq = fpfh_features(target, radius)
        params = RegistrationParams(inlier_threshold=0.1, seed=77)
        a = ransac_register(cloud, target, fp, fq, params)
        b = ransac_register(cloud, target, fp, fq, params)
        assert np.array_equal(a.rotation, b.rotation)
        assert np.array_equal(a.translation, b.translation)

    def test_registration_failure_raises(self):
        # a cloud of 3 identical points cannot produce a valid 3-point sample
        pts = np.zeros((12, 3))
        feats = np.ones((12, 33))
        with pytest.raises(RegistrationFailedError):
            ransac_register(PointCloud(pts), PointCloud(pts + 5.0), feats, feats,
                            RegistrationParams(max_iterations=50, seed=0))


class TestIcp:
    def test_exact_init_kept(self):
        cloud = sample_points(lbracket_mesh(), 300, seed=2)
        r = rot_z(25.0)
        t = np.array([0.3, 0.1, -0.2])
        target = PointCloud(cloud.points @ r.T + t)
        exact = RigidTransform(r, t)
        est, iterations, rms = icp_refine_full(cloud, target, exact)
        assert iterations <= 1
        assert np.allclose(est.rotation, r, atol=1e-9)
        assert rms < 1e-12

    def test_perturbed_init_converges(self):
        cloud = sample_points(lbracket_mesh(), 500, seed=14)
        r = rot_z(20.0)
        t = np.array([0.2, -0.4, 0.1])
        target = PointCloud(cloud.points @ r.T + t)
        diameter = np.ptp(cloud.points, axis=0).max()
        rough = RigidTransform(rot_z(22.0), t + 0.01 * diameter)
        est = icp_refine(cloud, target, rough)
        final_rms = nn_rms(est.apply(cloud.points), target.points)
        assert final_rms < 1e-3 * diameter

    def test_rms_monotone_in_iteration_budget(self):
        cloud = sample_points(pyramid_mesh(), 300, seed=4)
        target = PointCloud(cloud.points @ rot_z(14.0).T + 0.05)
        init = RigidTransform(np.eye(3), np.zeros(3))
        series = [icp_refine_full(cloud, target, init, max_iterations=k)[2]
                  for k in range(0, 8)]
        assert all(b <= a + 1e-15 for a, b in zip(series, series[1:]))
