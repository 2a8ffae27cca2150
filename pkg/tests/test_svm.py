import numpy as np
import pytest

from liftqp.lift import build_quotient, certify_refinement, unlift
from liftqp.refine import refine_qp
from liftqp.solver import solve
from liftqp.svm import (
    NoLabeledDataError,
    SvmBuildSpec,
    SvmDataset,
    active_links,
    build_svm_qp,
    knn_links,
    make_two_moons,
    mask_labels,
    predict,
)


def grouped_duplicates_dataset(rng, n_groups, group_size, n_labeled, dim=5):
    """Labeled instances plus groups of exactly duplicated unlabeled
    instances, each group linked to one labeled instance."""
    labeled_x = rng.standard_normal((n_labeled, dim))
    labels = np.concatenate(
        [np.where(rng.random(n_labeled) < 0.5, 1, -1), np.zeros(n_groups * group_size, dtype=int)]
    )
    rows = [labeled_x]
    links = []
    for g in range(n_groups):
        proto = rng.standard_normal(dim)
        target = int(rng.integers(0, n_labeled))
        for r in range(group_size):
            idx = n_labeled + g * group_size + r
            links.append((target, idx))
        rows.append(np.tile(proto, (group_size, 1)))
    return SvmDataset(np.vstack(rows), labels, links)


class TestBuildSvmQp:
    def test_counts_for_two_labeled_points(self):
        ds = SvmDataset(np.array([[2.0], [-2.0]]), np.array([1, -1]))
        qp, legend = build_svm_qp(ds, SvmBuildSpec(c1=10.0))
        assert qp.n == 1 + 1 + 2  # w, bias, two slacks
        assert qp.m == 4
        assert legend.bias_index == 1

    def test_separable_pair_recovers_max_margin(self):
        ds = SvmDataset(np.array([[2.0], [-2.0]]), np.array([1, -1]))
        qp, legend = build_svm_qp(ds, SvmBuildSpec(c1=100.0))
        report = solve(qp)
        assert report.status == "optimal"
        w, bias = legend.split(report.x)
        assert w[0] == pytest.approx(0.5, abs=1e-6)
        assert bias == pytest.approx(0.0, abs=1e-6)
        assert report.objective == pytest.approx(0.25, abs=1e-6)

    def test_no_labeled_data_rejected(self):
        ds = SvmDataset(np.zeros((2, 1)), np.zeros(2, dtype=int))
        with pytest.raises(NoLabeledDataError):
            build_svm_qp(ds, SvmBuildSpec(c1=1.0))

    def test_links_need_transductive_flag(self):
        ds = SvmDataset(np.array([[1.0], [2.0]]), np.array([1, 0]), [(0, 1)])
        qp_plain, _ = build_svm_qp(ds, SvmBuildSpec(c1=1.0, transductive=False))
        qp_trans, legend = build_svm_qp(ds, SvmBuildSpec(c1=1.0, c2=2.0, transductive=True))
        assert qp_plain.m == 2 and qp_trans.m == 4
        assert legend.active_links == ((0, 1),)
        assert qp_trans.c[legend.link_slack_of[(0, 1)]] == 2.0

    def test_link_orientation_normalized_and_inactive_ignored(self):
        features = np.arange(8.0).reshape(4, 2)
        ds = SvmDataset(features, np.array([1, 0, -1, 0]), [(1, 0), (0, 2), (1, 3)])
        assert active_links(ds) == ((0, 1),)

    def test_duplicated_unlabeled_instances_compress(self):
        rng = np.random.default_rng(71)
        ds = grouped_duplicates_dataset(rng, n_groups=4, group_size=3, n_labeled=6)
        qp, _ = build_svm_qp(ds, SvmBuildSpec(c1=1.0, c2=0.5, transductive=True))
        result = refine_qp(qp)
        assert result.var_partition.size < qp.n
        assert result.con_partition.size < qp.m

    def test_generic_features_without_links_stay_discrete(self):
        rng = np.random.default_rng(74)
        ds = SvmDataset(
            rng.standard_normal((12, 4)),
            np.where(rng.random(12) < 0.5, 1, -1),
        )
        qp, _ = build_svm_qp(ds, SvmBuildSpec(c1=1.0))
        result = refine_qp(qp)
        assert result.var_partition.size == qp.n
        assert result.con_partition.size == qp.m

    def test_symmetry_injection_increases_compression(self):
        rng = np.random.default_rng(72)
        base = grouped_duplicates_dataset(rng, n_groups=3, group_size=2, n_labeled=5)
        spec = SvmBuildSpec(c1=1.0, c2=0.5, transductive=True)
        qp1, _ = build_svm_qp(base, spec)
        r1 = refine_qp(qp1)
        ratio1 = r1.var_partition.size / qp1.n
        # duplicate one unlabeled instance: same features, same links
        dup_src = base.n - 1
        linked_to = [i for i, j in active_links(base) if j == dup_src]
        features = np.vstack([base.features, base.features[dup_src]])
        labels = np.concatenate([base.labels, [0]])
        links = list(base.links) + [(i, base.n) for i in linked_to]
        bigger = SvmDataset(features, labels, links)
        qp2, _ = build_svm_qp(bigger, spec)
        r2 = refine_qp(qp2)
        ratio2 = r2.var_partition.size / qp2.n
        assert ratio2 < ratio1


class TestPredict:
    def test_signs(self):
        np.testing.assert_array_equal(predict([1.0], 0.0, [[2.0]]), [1])
        np.testing.assert_array_equal(predict([1.0], 0.0, [[-2.0]]), [-1])

    def test_boundary_tie_is_positive(self):
        np.testing.assert_array_equal(predict([1.0], 0.0, [[0.0]]), [1])

    def test_dimension_check(self):
        with pytest.raises(ValueError):
            predict([1.0, 2.0], 0.0, [[1.0]])


class TestTwoMoons:
    def test_structural_counts(self):
        ds = make_two_moons(8, noise_dim=0, k_nn=1, seed=0)
        assert ds.n == 8
        assert ds.dim == 2
        assert len(ds.links) >= 4
        assert set(ds.labels) == {-1, 1}

    def test_seed_determinism(self):
        a = make_two_moons(20, noise_dim=5, k_nn=2, seed=7)
        b = make_two_moons(20, noise_dim=5, k_nn=2, seed=7)
        assert a.features.tobytes() == b.features.tobytes()
        assert a.links == b.links

    def test_odd_n_rejected(self):
        with pytest.raises(ValueError):
            make_two_moons(9, 0, 1, 0)

    def test_mask_labels(self):
        ds = make_two_moons(20, noise_dim=0, k_nn=2, seed=1)
        masked = mask_labels(ds, 0.5, seed=2)
        assert masked.unlabeled.size == 10
        assert mask_labels(ds, 0.5, seed=2).labels.tolist() == masked.labels.tolist()

    def test_knn_links_validation(self):
        with pytest.raises(ValueError):
            knn_links(np.zeros((3, 2)), 3)


class TestGroundVersusLifted:
    def test_predictions_agree(self):
        rng = np.random.default_rng(73)
        ds = grouped_duplicates_dataset(rng, n_groups=4, group_size=3, n_labeled=8)
        qp, legend = build_svm_qp(ds, SvmBuildSpec(c1=2.0, c2=1.0, transductive=True))
        pair = certify_refinement(qp)
        assert pair.certified
        quotient = build_quotient(qp, pair)
        assert quotient.qp.n < qp.n
        ground = solve(qp)
        lifted = solve(quotient.qp)
        assert ground.status == lifted.status == "optimal"
        assert abs(ground.objective - lifted.objective) <= 1e-6 * (1 + abs(ground.objective))
        w_g, b_g = legend.split(ground.x)
        w_l, b_l = legend.split(unlift(lifted.x, quotient))
        np.testing.assert_array_equal(
            predict(w_g, b_g, ds.features), predict(w_l, b_l, ds.features)
        )
