import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import ortho_group

from triplet_metric import core
from triplet_metric.exceptions import InvalidInputError

import oracles


def line_points():
    return np.array([[0.0], [1.0], [2.0]])


class TestMahalanobis:
    def test_same_index_is_zero(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((4, 3))
        K, _ = oracles.random_psd(3, 2, rng)
        assert core.mahalanobis_sq(X, K, 2, 2) == 0.0

    def test_scalar(self):
        X = np.array([[0.0], [1.0], [5.0]])
        assert core.mahalanobis_sq(X, np.eye(1), 0, 1) == 1.0

    def test_two_dimensional_identity(self):
        X = np.array([[1.0, 0.0], [0.0, 1.0], [3.0, 3.0]])
        assert core.mahalanobis_sq(X, np.eye(2), 0, 1) == pytest.approx(2.0)

    def test_symmetric(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((6, 4))
        K, _ = oracles.random_psd(4, 4, rng)
        for i in range(6):
            for j in range(6):
                a = core.mahalanobis_sq(X, K, i, j)
                b = core.mahalanobis_sq(X, K, j, i)
                assert abs(a - b) <= 1e-12 * max(1.0, abs(a))

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            core.mahalanobis_sq(np.zeros((3, 2)), np.eye(3), 0, 1)

    def test_distance_matrix_matches_loops(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((7, 3))
        K, _ = oracles.random_psd(3, 2, rng)
        np.testing.assert_allclose(core.squared_distance_matrix(X, K),
                                   oracles.squared_distances_loop(X, K), rtol=1e-12, atol=1e-12)


class TestComparisonMatrix:
    def test_equal_j_k_gives_zero(self):
        X = np.array([[1.0, 2.0], [3.0, -1.0], [3.0, -1.0]])
        np.testing.assert_array_equal(core.comparison_matrix(X, (0, 1, 2)), np.zeros((2, 2)))

    def test_scalar_value(self):
        np.testing.assert_allclose(core.comparison_matrix(line_points(), (0, 1, 2)), [[-3.0]])

    def test_symmetric_and_matches_distance_difference(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((5, 4))
        K, _ = oracles.random_psd(4, 3, rng)
        M = core.comparison_matrix(X, (1, 3, 4))
        np.testing.assert_array_equal(M, M.T)
        D = oracles.squared_distances_loop(X, K)
        assert np.trace(M @ K) == pytest.approx(D[1, 3] - D[1, 4], rel=1e-12)

    def test_rejects_repeated_index(self):
        with pytest.raises(InvalidInputError):
            core.comparison_matrix(line_points(), (0, 0, 2))


class TestTripletMargin:
    def test_equal_j_k(self):
        X = np.array([[0.0, 1.0], [2.0, 2.0], [2.0, 2.0]])
        assert core.triplet_margin(X, np.ones((2, 1)), (0, 1, 2)) == 0.0

    def test_scalar(self):
        assert core.triplet_margin(line_points(), np.array([[1.0]]), (0, 1, 2)) == -3.0

    def test_zero_factor(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((5, 3))
        assert core.triplet_margin(X, np.zeros((3, 2)), (4, 0, 2)) == 0.0

    @settings(max_examples=200, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), p=st.integers(1, 8), n=st.integers(3, 8))
    def test_margin_identity(self, seed, p, n):
        rng = np.random.default_rng(seed)
        r = int(rng.integers(1, p + 1))
        X = rng.standard_normal((n, p))
        A = rng.standard_normal((p, r))
        t = tuple(rng.choice(n, 3, replace=False))
        got = core.triplet_margin(X, A, t)
        want = oracles.margin_trace(X, A, t)
        assert abs(got - want) <= 1e-10 * max(1.0, abs(want))

    def test_vectorised_matches_scalar(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((6, 3))
        A = rng.standard_normal((3, 2))
        T = oracles.all_ordered_triplets(6)
        got = core.triplet_margins(X, A, T)
        want = [core.triplet_margin(X, A, t) for t in T]
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)

    def test_factor_row_mismatch(self):
        with pytest.raises(InvalidInputError):
            core.triplet_margin(line_points(), np.ones((2, 1)), (0, 1, 2))


class TestProcrustes:
    def test_identity(self):
        rng = np.random.default_rng(6)
        A = rng.standard_normal((5, 3))
        res = core.procrustes_align(A, A)
        np.testing.assert_allclose(res.rotation, np.eye(3), atol=1e-10)
        assert res.aligned_error < 1e-12

    def test_recovers_rotation(self):
        rng = np.random.default_rng(7)
        A = rng.standard_normal((6, 3))
        R = ortho_group.rvs(3, random_state=8)
        res = core.procrustes_align(A @ R, A)
        assert res.aligned_error < 1e-12
        np.testing.assert_allclose(res.rotation, R.T, atol=1e-10)

    def test_rotation_orthogonal(self):
        rng = np.random.default_rng(9)
        res = core.procrustes_align(rng.standard_normal((7, 4)), rng.standard_normal((7, 4)))
        np.testing.assert_allclose(res.rotation.T @ res.rotation, np.eye(4), atol=1e-10)
        assert res.aligned_error >= 0

    @pytest.mark.parametrize("seed", range(3))
    def test_minimal_against_random_rotations(self, seed):
        rng = np.random.default_rng(seed)
        Z, B = rng.standard_normal((4, 2)), rng.standard_normal((4, 2))
        err = core.procrustes_align(Z, B).aligned_error
        assert err <= oracles.best_random_rotation_error(Z, B, trials=1000, seed=seed) + 1e-12

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_never_worse_than_unaligned(self, seed):
        rng = np.random.default_rng(seed)
        Z, B = rng.standard_normal((5, 3)), rng.standard_normal((5, 3))
        assert core.aligned_error(Z, B) <= np.linalg.norm(Z - B) + 1e-12

    def test_degenerate_zero_candidate(self):
        B = np.arange(6.0).reshape(3, 2)
        assert core.aligned_error(np.zeros((3, 2)), B) == pytest.approx(np.linalg.norm(B))

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            core.procrustes_align(np.zeros((3, 2)), np.zeros((3, 1)))


class TestMetricGap:
    def test_equal(self):
        K = np.diag([1.0, 2.0])
        assert core.metric_gap(K, K) == 0.0

    def test_scaled_identity(self):
        assert core.metric_gap(2 * np.eye(3), np.eye(3)) == pytest.approx(1.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_power_iteration(self, seed):
        rng = np.random.default_rng(seed)
        a, _ = oracles.random_psd(6, 3, rng)
        b, _ = oracles.random_psd(6, 6, rng)
        assert abs(core.metric_gap(a, b) - oracles.spectral_norm_power(a - b)) < 1e-8

    def test_frobenius_variant(self):
        a, b = np.diag([3.0, 0.0]), np.diag([0.0, 4.0])
        assert core.metric_gap(a, b, norm="fro") == pytest.approx(5.0)
        assert core.metric_gap(a, b) == pytest.approx(4.0)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            core.metric_gap(np.eye(2), np.eye(3))


class TestValidation:
    def test_rejects_negative_eigenvalue(self):
        K = np.diag([1.0, -1e-3])
        with pytest.raises(InvalidInputError, match="positive semi-definite"):
            core.as_metric(K)

    def test_accepts_tiny_negative_roundoff(self):
        K = np.diag([1.0, -1e-12])
        core.as_metric(K)

    def test_rejects_asymmetric(self):
        with pytest.raises(InvalidInputError, match="symmetric"):
            core.as_metric(np.array([[1.0, 0.1], [0.0, 1.0]]))

    def test_features_need_three_rows(self):
        with pytest.raises(InvalidInputError):
            core.as_features(np.zeros((2, 2)))

    def test_features_reject_nan(self):
        X = np.zeros((3, 2))
        X[1, 1] = np.nan
        with pytest.raises(InvalidInputError, match="row 1, column 1"):
            core.as_features(X)

    def test_factor_rank_bounds(self):
        with pytest.raises(InvalidInputError):
            core.as_factor(np.zeros((2, 3)))

    def test_triplet_bounds(self):
        with pytest.raises(InvalidInputError):
            core.as_triplets([[0, 1, 3]], n=3)
