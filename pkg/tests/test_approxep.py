import numpy as np
import pytest

from liftqp.approxep import ApproxConfig, approx_orbits, exact_orbits, whiten
from liftqp.qpcore import Partition, SparseMatrix
from liftqp.refine import brute_force_coarsest_ep


SQUARE = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])


def scaled_square(a, b):
    return np.array([[a, 0.0], [0.0, b], [-a, 0.0], [0.0, -b]])


def two_blobs(rng, n, separation=50.0):
    half = n // 2
    pts = np.vstack(
        [
            rng.normal(0.0, 1.0, size=(half, 2)),
            rng.normal(separation, 1.0, size=(n - half, 2)),
        ]
    )
    labels = np.concatenate([np.zeros(half, dtype=int), np.ones(n - half, dtype=int)])
    return pts, labels


class TestExactOrbits:
    def test_square_is_one_orbit(self):
        assert exact_orbits(SQUARE) == Partition.single(4)

    def test_square_plus_center_splits(self):
        points = np.vstack([SQUARE, [0.0, 0.0]])
        assert exact_orbits(points) == Partition.from_classes(5, [[0, 1, 2, 3], [4]])

    def test_generic_points_are_discrete(self):
        rng = np.random.default_rng(61)
        points = rng.standard_normal((7, 2))
        assert exact_orbits(points) == Partition.discrete(7)

    def test_invariant_under_isometries(self):
        rng = np.random.default_rng(62)
        points = np.vstack([SQUARE, 2.0 * SQUARE, [[0.3, 1.7]]])
        base = exact_orbits(points)
        theta = rng.uniform(0, 2 * np.pi)
        rot = np.array(
            [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
        )
        shifted = points @ rot.T + rng.standard_normal(2)
        reflected = points * np.array([-1.0, 1.0])
        assert exact_orbits(shifted) == base
        assert exact_orbits(reflected) == base

    def test_matches_counting_ep_of_distance_matrix(self):
        # on small instances the exact orbits coincide with the coarsest
        # counting partition of the distance matrix
        cases = [
            np.vstack([SQUARE, [0.0, 0.0]]),
            np.array(
                [
                    [np.cos(2 * np.pi * k / 5), np.sin(2 * np.pi * k / 5)]
                    for k in range(5)
                ]
            ),
            np.random.default_rng(63).standard_normal((6, 2)),
        ]
        for points in cases:
            n = len(points)
            diff = points[:, None, :] - points[None, :, :]
            dist = SparseMatrix.from_dense(np.sqrt((diff**2).sum(axis=2)))
            assert exact_orbits(points, dist_tol=1e-9) == brute_force_coarsest_ep(
                dist, mode="counting", tol=1e-9
            )


class TestWhiten:
    def test_already_white_cross_is_fixed_point(self):
        cross = np.sqrt(2.0) * SQUARE
        out = whiten(cross)
        cov = out.T @ out / len(out)
        np.testing.assert_allclose(cov, np.eye(2), atol=1e-8)

    def test_axis_scaled_square_becomes_square(self):
        out = whiten(scaled_square(1.0, 3.0))
        assert exact_orbits(out) == Partition.single(4)

    def test_zero_mean_output(self):
        rng = np.random.default_rng(64)
        cloud = rng.standard_normal((40, 3)) + np.array([5.0, -2.0, 11.0])
        out = whiten(cloud)
        np.testing.assert_allclose(out.mean(axis=0), np.zeros(3), atol=1e-10)
        cov = out.T @ out / len(out)
        np.testing.assert_allclose(cov, np.eye(3), atol=1e-8)

    def test_underdetermined_covariance_warns(self):
        rng = np.random.default_rng(65)
        with pytest.warns(RuntimeWarning):
            whiten(rng.standard_normal((3, 5)))

    def test_whiten_absorbs_axis_scalings(self):
        rng = np.random.default_rng(66)
        points = np.vstack([SQUARE, 2.0 * SQUARE])
        scale = np.diag(rng.uniform(0.5, 3.0, size=2))
        assert exact_orbits(whiten(points @ scale), dist_tol=1e-8) == exact_orbits(
            whiten(points), dist_tol=1e-8
        )


class TestApproxOrbits:
    def test_two_blobs_recovered(self):
        rng = np.random.default_rng(67)
        pts, labels = two_blobs(rng, 120)
        part = approx_orbits(pts, ApproxConfig(n_orbits=2, n_anchors=20, seed=3))
        assert part == Partition(len(pts), labels)

    def test_identical_points_collapse(self):
        pts = np.ones((10, 2))
        with pytest.warns(RuntimeWarning):
            part = approx_orbits(pts, ApproxConfig(n_orbits=4, seed=0))
        assert part == Partition.single(10)

    def test_full_budget_reproduces_exact_classes(self):
        pts = np.vstack([SQUARE, 2.0 * SQUARE])
        with pytest.warns(RuntimeWarning):
            part = approx_orbits(pts, ApproxConfig(n_orbits=len(pts), seed=1))
        exact = exact_orbits(pts)
        assert exact.refines(part)
        assert part == exact

    def test_determinism_per_seed(self):
        rng = np.random.default_rng(68)
        pts, _ = two_blobs(rng, 60)
        cfg = ApproxConfig(n_orbits=2, n_anchors=11, seed=9)
        assert approx_orbits(pts, cfg) == approx_orbits(pts, cfg)

    def test_kmeans_pp_anchor_variant(self):
        rng = np.random.default_rng(69)
        pts, labels = two_blobs(rng, 80)
        cfg = ApproxConfig(n_orbits=2, n_anchors=9, seed=4, anchor_method="kmeans++")
        assert approx_orbits(pts, cfg) == Partition(len(pts), labels)
        assert approx_orbits(pts, cfg) == approx_orbits(pts, cfg)

    def test_anchor_budget_validation(self):
        with pytest.raises(ValueError):
            approx_orbits(SQUARE, ApproxConfig(n_orbits=1, n_anchors=9))
        with pytest.raises(ValueError):
            ApproxConfig(n_orbits=0)
        with pytest.raises(ValueError):
            ApproxConfig(n_orbits=1, anchor_method="grid")
