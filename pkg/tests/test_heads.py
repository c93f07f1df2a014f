import numpy as np
import pytest

from mahabench.errors import DimensionMismatch, EmptyClass, NotPositiveDefinite
from mahabench.heads import (
    ClassStatistics,
    MetricKind,
    bregman_divergence,
    class_scores,
    classify,
    estimate_class_statistics,
    softmax,
)
from mahabench.rng import Rng
from mahabench.spd import cholesky


def stats_with_covariances(means, covs):
    counts = np.ones(len(means))
    return ClassStatistics.from_moments(np.asarray(means, float), covs, counts)


def random_task(rng, n_classes=3, per_class=4, dims=4, spread=1.0):
    feats, labels = [], []
    centers = 2.0 * rng.normal((n_classes, dims))
    for k in range(n_classes):
        feats.append(centers[k] + spread * rng.normal((per_class, dims)))
        labels.extend([k] * per_class)
    return np.vstack(feats), np.array(labels, dtype=np.int64)


class TestEstimateClassStatistics:
    def test_single_point_single_class(self):
        # one point: scatters are zero, lambda = 1/2, Q = beta * I
        stats = estimate_class_statistics(np.zeros((1, 2)), np.array([0]), beta=1.0)
        assert np.allclose(stats.means[0], [0.0, 0.0])
        assert np.allclose(stats.covariances[0], np.eye(2))
        assert stats.counts[0] == 1.0

    def test_hand_worked_two_class_task(self):
        # A = {(0,0),(2,0)}, B = {(0,2)}: mu_A, lambda_A, both scatters and
        # Q_A evaluated by hand from the blended-covariance formula
        feats = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]])
        labels = np.array([0, 0, 1])
        stats = estimate_class_statistics(feats, labels, beta=1.0)
        assert np.allclose(stats.means[0], [1.0, 0.0])
        assert stats.counts[0] == 2.0
        q_a = np.array([[53.0 / 27.0, -4.0 / 27.0], [-4.0 / 27.0, 35.0 / 27.0]])
        assert np.allclose(stats.covariances[0], q_a, rtol=1e-12)

    def test_hand_worked_against_brute_force_scatter(self):
        # cross-check the same task with an explicit scatter accumulator
        feats = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]])
        labels = np.array([0, 0, 1])
        n = 3
        task_mean = feats.sum(axis=0) / n
        task_scatter = np.zeros((2, 2))
        for z in feats:
            task_scatter += np.outer(z - task_mean, z - task_mean)
        task_scatter /= n
        assert np.allclose(task_mean, [2 / 3, 2 / 3])
        assert np.allclose(task_scatter, [[8 / 9, -4 / 9], [-4 / 9, 8 / 9]])

        stats = estimate_class_statistics(feats, labels, beta=1.0)
        for k in (0, 1):
            rows = feats[labels == k]
            mu_k = rows.mean(axis=0)
            sc = np.zeros((2, 2))
            for z in rows:
                sc += np.outer(z - mu_k, z - mu_k)
            sc /= len(rows)
            lam = len(rows) / (len(rows) + 1)
            expected = lam * sc + (1 - lam) * task_scatter + np.eye(2)
            assert np.allclose(stats.covariances[k], expected, rtol=1e-12)

    def test_lambda_blend_values(self):
        # lambda = n/(n+1): 1 -> 0.5, 4 -> 0.8, large n -> 1
        for n_k, lam in [(1, 0.5), (4, 0.8)]:
            assert n_k / (n_k + 1) == lam
        feats = np.vstack([np.zeros((4, 2)), np.ones((1, 2))])
        labels = np.array([0, 0, 0, 0, 1])
        stats = estimate_class_statistics(feats, labels)
        # class 0 blend weight shows up through the task-scatter share
        assert stats.counts[0] == 4.0

    def test_empty_class_raises(self):
        with pytest.raises(EmptyClass) as info:
            estimate_class_statistics(np.zeros((2, 2)), np.array([0, 2]))
        assert info.value.class_index == 1

    def test_single_shot_covariance_is_half_task_scatter_plus_beta(self):
        # n_k = 1: class scatter is 0, so Q_k = 0.5 * task_scatter + beta I
        rng = Rng(3)
        feats = rng.normal((4, 3))
        labels = np.arange(4, dtype=np.int64) % 4
        stats = estimate_class_statistics(feats, labels, beta=1.0)
        centered = feats - feats.mean(axis=0)
        task_scatter = centered.T @ centered / 4
        for k in range(4):
            expected = 0.5 * task_scatter + np.eye(3)
            assert np.allclose(stats.covariances[k], expected, rtol=1e-12)


class TestClassScores:
    def test_identity_covariance_reduces_to_euclidean(self):
        stats = stats_with_covariances(
            [[0.0, 0.0], [4.0, 0.0]], [np.eye(2), np.eye(2)]
        )
        scores = class_scores(np.array([1.0, 0.0]), stats, MetricKind.SQUARED_MAHALANOBIS)
        assert np.allclose(scores, [-1.0, -9.0])

    def test_diagonal_covariance_quadratic_form(self):
        stats = stats_with_covariances([[0.0, 0.0]], [np.diag([4.0, 1.0])])
        score = class_scores(np.array([2.0, 2.0]), stats, MetricKind.SQUARED_MAHALANOBIS)
        assert score[0] == pytest.approx(-5.0)

    def test_root_riemannian_is_sqrt_of_mahalanobis(self):
        rng = Rng(11)
        feats, labels = random_task(rng)
        stats = estimate_class_statistics(feats, labels)
        queries = rng.normal((6, 4))
        maha = class_scores(queries, stats, MetricKind.SQUARED_MAHALANOBIS)
        root = class_scores(queries, stats, MetricKind.ROOT_RIEMANNIAN)
        assert np.allclose(root, -np.sqrt(-maha))

    def test_all_metric_kinds_against_direct_formulas(self):
        rng = Rng(13)
        feats, labels = random_task(rng)
        stats = estimate_class_statistics(feats, labels)
        q = rng.normal(4)
        for k in range(stats.class_count):
            diff = q - stats.means[k]
            cov_inv = np.linalg.inv(stats.covariances[k])
            assert class_scores(q, stats, MetricKind.SQUARED_MAHALANOBIS)[k] == pytest.approx(
                -diff @ cov_inv @ diff, rel=1e-9
            )
            assert class_scores(q, stats, MetricKind.SQUARED_EUCLIDEAN)[k] == pytest.approx(
                -diff @ diff
            )
            assert class_scores(q, stats, MetricKind.ABSOLUTE_L1)[k] == pytest.approx(
                -np.abs(diff).sum()
            )
            mu = stats.means[k]
            assert class_scores(q, stats, MetricKind.COSINE_SIMILARITY)[k] == pytest.approx(
                q @ mu / (np.linalg.norm(q) * np.linalg.norm(mu))
            )
            assert class_scores(q, stats, MetricKind.NEGATIVE_DOT_PRODUCT)[k] == pytest.approx(
                q @ mu
            )

    def test_cosine_zero_norm_returns_zero(self):
        stats = stats_with_covariances([[0.0, 0.0], [1.0, 0.0]], [np.eye(2), np.eye(2)])
        scores = class_scores(np.zeros(2), stats, MetricKind.COSINE_SIMILARITY)
        assert scores[0] == 0.0 and scores[1] == 0.0

    def test_dimension_mismatch(self):
        stats = stats_with_covariances([[0.0, 0.0]], [np.eye(2)])
        with pytest.raises(DimensionMismatch):
            class_scores(np.zeros(3), stats, MetricKind.SQUARED_EUCLIDEAN)


class TestClassify:
    def test_two_class_softmax_values(self):
        stats = stats_with_covariances(
            [[0.0, 0.0], [4.0, 0.0]], [np.eye(2), np.eye(2)]
        )
        probs, label = classify(np.array([1.0, 0.0]), stats, MetricKind.SQUARED_MAHALANOBIS)
        expected = np.exp([-1.0, -9.0])
        expected /= expected.sum()
        assert np.allclose(probs, expected)
        assert probs[0] == pytest.approx(0.99966, abs=1e-5)
        assert label == 0

    def test_equidistant_tie_breaks_low(self):
        stats = stats_with_covariances(
            [[-1.0, 0.0], [1.0, 0.0]], [np.eye(2), np.eye(2)]
        )
        probs, label = classify(np.zeros(2), stats, MetricKind.SQUARED_MAHALANOBIS)
        assert np.allclose(probs, [0.5, 0.5])
        assert label == 0

    def test_single_class(self):
        stats = stats_with_covariances([[0.0, 0.0]], [np.eye(2)])
        probs, label = classify(np.ones(2), stats, MetricKind.SQUARED_MAHALANOBIS)
        assert probs[0] == 1.0 and label == 0

    def test_probabilities_sum_to_one_and_shift_invariant(self):
        rng = Rng(17)
        scores = rng.normal((50, 5))
        probs = softmax(scores)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)
        shifted = softmax(scores + 123.0)
        assert np.allclose(probs, shifted, atol=1e-12)


class TestInvariants:
    def test_identity_covariance_equivalence(self):
        rng = Rng(23)
        means = rng.normal((4, 3))
        stats = ClassStatistics.from_moments(
            means, [np.eye(3)] * 4, np.ones(4)
        )
        queries = rng.normal((20, 3))
        maha = class_scores(queries, stats, MetricKind.SQUARED_MAHALANOBIS)
        eucl = class_scores(queries, stats, MetricKind.SQUARED_EUCLIDEAN)
        assert np.allclose(maha, eucl, atol=1e-10)

    def test_root_riemannian_decisions_match(self):
        rng = Rng(29)
        for _ in range(200):
            feats, labels = random_task(rng)
            stats = estimate_class_statistics(feats, labels)
            queries = rng.normal((5, 4))
            _, maha_labels = classify(queries, stats, MetricKind.SQUARED_MAHALANOBIS)
            _, root_labels = classify(queries, stats, MetricKind.ROOT_RIEMANNIAN)
            assert np.array_equal(maha_labels, root_labels)

    def test_translation_equivariance(self):
        rng = Rng(31)
        feats, labels = random_task(rng)
        queries = rng.normal((8, 4))
        shift = rng.normal(4) * 10.0
        p1, _ = classify(queries, estimate_class_statistics(feats, labels),
                         MetricKind.SQUARED_MAHALANOBIS)
        p2, _ = classify(queries + shift,
                         estimate_class_statistics(feats + shift, labels),
                         MetricKind.SQUARED_MAHALANOBIS)
        assert np.allclose(p1, p2, atol=1e-9)

    def test_covariances_spd_with_zero_jitter_over_many_tasks(self):
        # beta = 1 forces positive definiteness; exact Cholesky must succeed
        rng = Rng(37)
        for _ in range(10_000):
            feats, labels = random_task(rng, n_classes=3, per_class=2, dims=3)
            stats = estimate_class_statistics(feats, labels, beta=1.0)
            for q in stats.covariances:
                cholesky(q)  # raises NotPositiveDefinite on failure


class TestBregmanDivergence:
    def test_zero_at_equal_points(self):
        assert bregman_divergence(np.ones(2), np.ones(2), np.eye(2)) == 0.0

    def test_identity_reduces_to_squared_euclidean(self):
        val = bregman_divergence(np.array([1.0, 0.0]), np.zeros(2), np.eye(2))
        assert val == pytest.approx(1.0)

    def test_equals_quadratic_form_on_random_triples(self):
        rng = Rng(41)
        for _ in range(1000):
            a = rng.normal((3, 3))
            q = a @ a.T + np.eye(3)
            z = rng.normal(3)
            z_ref = rng.normal(3)
            expected = (z - z_ref) @ np.linalg.inv(q) @ (z - z_ref)
            assert bregman_divergence(z, z_ref, q) == pytest.approx(expected, abs=1e-10, rel=1e-10)

    def test_rejects_indefinite_matrix(self):
        with pytest.raises(NotPositiveDefinite):
            bregman_divergence(np.ones(2), np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            bregman_divergence(np.ones(3), np.zeros(2), np.eye(2))
