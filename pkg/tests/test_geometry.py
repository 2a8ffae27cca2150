import numpy as np
import pytest

from gen import random_certified_qp
from liftqp.geometry import (
    NotPsdError,
    compute_r,
    gram_factor,
    verify_bchar,
)
from liftqp.instances import example4, example4_gram_rows
from liftqp.qpcore import Partition, SparseMatrix
from liftqp.refine import refine_qp


def random_orthonormal(rng, k):
    q, _ = np.linalg.qr(rng.standard_normal((k, k)))
    return q


class TestGramFactor:
    def test_identity(self):
        factor = gram_factor(SparseMatrix.identity(3))
        assert factor.k == 3
        np.testing.assert_allclose(factor.b @ factor.b.T, np.eye(3), atol=1e-12)

    def test_rank_one(self):
        v = np.array([1.0, 2.0])
        factor = gram_factor(SparseMatrix.from_dense(np.outer(v, v)))
        assert factor.k == 1
        column = factor.b[:, 0]
        np.testing.assert_allclose(np.abs(column), np.abs(v), atol=1e-12)

    def test_example4_rank_two_with_zero_column_sums(self):
        factor = gram_factor(example4().q)
        assert factor.k == 2
        assert factor.reconstruction_error <= 1e-10
        np.testing.assert_allclose(factor.b.sum(axis=0), [0.0, 0.0], atol=1e-12)

    def test_indefinite_rejected(self):
        with pytest.raises(NotPsdError):
            gram_factor(SparseMatrix.from_dense([[1.0, 2.0], [2.0, 1.0]]))

    def test_factor_rotation_also_reconstructs(self):
        rng = np.random.default_rng(41)
        g = rng.standard_normal((6, 3))
        q = SparseMatrix.from_dense(g @ g.T).symmetrized()
        factor = gram_factor(q)
        o = random_orthonormal(rng, factor.k)
        rotated = factor.b @ o
        np.testing.assert_allclose(rotated @ rotated.T, q.to_dense(), atol=1e-10)


class TestComputeR:
    def test_discrete_partition_gives_identity(self):
        rng = np.random.default_rng(42)
        g = rng.standard_normal((5, 2))
        factor = gram_factor(SparseMatrix.from_dense(g @ g.T).symmetrized())
        r = compute_r(factor, Partition.discrete(5))
        np.testing.assert_allclose(r, np.eye(factor.k), atol=1e-10)

    def test_example4_one_class_gives_zero(self):
        factor = gram_factor(example4().q)
        r = compute_r(factor, Partition.single(4))
        np.testing.assert_allclose(r, np.zeros((2, 2)), atol=1e-12)

    def test_non_commuting_partition_gives_asymmetric_r(self):
        rng = np.random.default_rng(43)
        g = rng.standard_normal((6, 3))
        factor = gram_factor(SparseMatrix.from_dense(g @ g.T).symmetrized())
        r = compute_r(factor, Partition.from_classes(6, [[0, 1], [2, 3], [4, 5]]))
        assert np.max(np.abs(r - r.T)) > 1e-3


class TestVerifyBchar:
    def test_discrete_partition_all_true(self):
        qp = example4()
        report = verify_bchar(qp.q, gram_factor(qp.q), Partition.discrete(4))
        assert report.commutes and report.r_symmetric and report.xb_equals_br
        assert report.consistent

    def test_example4_one_class_all_true(self):
        qp = example4()
        report = verify_bchar(qp.q, gram_factor(qp.q), Partition.single(4))
        assert report.commutes and report.r_symmetric and report.xb_equals_br

    def test_non_equitable_partition_fails_both_sides(self):
        rng = np.random.default_rng(44)
        g = rng.standard_normal((6, 3))
        q = SparseMatrix.from_dense(g @ g.T).symmetrized()
        report = verify_bchar(q, gram_factor(q), Partition.from_classes(6, [[0, 1, 2], [3, 4, 5]]))
        assert not report.commutes
        assert not (report.r_symmetric and report.xb_equals_br)
        assert report.consistent

    def test_forward_direction_on_refinement_partitions(self):
        # any refinement partition commutes with Q, so R must be a
        # symmetric transport: ||R - R'|| and ||XB - BR|| below 1e-8
        rng = np.random.default_rng(45)
        for _ in range(10):
            inst = random_certified_qp(rng)
            partition = refine_qp(inst.qp).var_partition
            factor = gram_factor(inst.qp.q)
            report = verify_bchar(inst.qp.q, factor, partition)
            assert report.commutes
            assert report.residuals["r_asymmetry"] <= 1e-8
            assert report.residuals["transport"] <= 1e-8

    def test_reverse_direction_on_constructed_transports(self):
        # B assembled from class-constant and zero-class-sum columns has
        # XB = B diag(1,0) with a symmetric diagonal R; the induced
        # X must commute with BB'
        rng = np.random.default_rng(46)
        checked = 0
        for _ in range(10):
            n = 8
            p = Partition(n, rng.integers(0, 3, size=n))
            cols = []
            for _ in range(2):
                cols.append(rng.standard_normal(p.size)[p.class_of])
            for _ in range(2):
                v = rng.standard_normal(n)
                sums = np.bincount(p.class_of, weights=v, minlength=p.size)
                cols.append(v - (sums / p.sizes)[p.class_of])
            b = np.column_stack(cols)
            if np.linalg.matrix_rank(b) < 4:
                continue
            q = SparseMatrix.from_dense(b @ b.T).symmetrized()
            report = verify_bchar(q, gram_factor(q), p, tol=1e-8)
            assert report.residuals["commute"] <= 1e-10
            assert report.commutes and report.r_symmetric and report.xb_equals_br
            checked += 1
        assert checked >= 5


class TestScalingSymmetryDemo:
    def test_rescale_rotate_cycle_is_a_factor_symmetry(self):
        # rows (1,0), (0,2), (-1,0), (0,-2); the rotate-and-rescale map M
        # cycles them: Sigma B = B M with M non-orthogonal, M M' != I,
        # and the cyclic-group symmetrizer (M + M^2 + M^3 + M^4)/4 = 0.
        b = example4_gram_rows(scale_y=2.0)
        m = np.array([[0.0, 2.0], [-0.5, 0.0]])
        sigma = np.zeros((4, 4))
        for i in range(4):
            sigma[i, (i + 1) % 4] = 1.0
        np.testing.assert_array_equal(sigma @ b, b @ m)
        assert np.max(np.abs(m @ m.T - np.eye(2))) > 1.0
        q = b @ b.T
        # M is not an automorphism of Q itself
        assert np.max(np.abs(b @ m @ m.T @ b.T - q)) > 1.0
        symmetrizer = (m + m @ m + m @ m @ m + np.linalg.matrix_power(m, 4)) / 4.0
        np.testing.assert_allclose(symmetrizer, np.zeros((2, 2)), atol=1e-15)
        # the matching ground partition is the single class: X commutes with Q
        qsp = SparseMatrix.from_dense(q).symmetrized()
        report = verify_bchar(qsp, gram_factor(qsp), Partition.single(4))
        assert report.commutes and report.r_symmetric and report.xb_equals_br
        r = compute_r(gram_factor(qsp), Partition.single(4))
        np.testing.assert_allclose(r, np.zeros((2, 2)), atol=1e-12)
