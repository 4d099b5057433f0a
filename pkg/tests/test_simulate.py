import numpy as np
import pytest
from scipy.special import expit

from triplet_metric import simulate
from triplet_metric.exceptions import ConfigurationError, InvalidInputError
from triplet_metric.simulate import FeatureDistribution, TripletBatch

import oracles


def binomial_sigma(p, N):
    return np.sqrt(p * (1 - p) / N)


class TestFeatures:
    def test_ar_covariance_entry(self):
        cov = FeatureDistribution("gaussian-ar", p=5, rho=0.8).covariance()
        assert cov[0, 2] == pytest.approx(0.64)
        np.testing.assert_allclose(cov, cov.T)

    def test_diagonal_chi_one_is_identity(self):
        n = 5000
        dist = FeatureDistribution("gaussian-diagonal", p=6, seed=3, chi=1.0)
        np.testing.assert_array_equal(dist.covariance(), np.eye(6))
        X = simulate.gen_features(dist, n)
        S = np.cov(X, rowvar=False)
        assert np.linalg.norm(S - np.eye(6), 2) < 5 / np.sqrt(n)

    def test_diagonal_half_split(self):
        d = np.diag(FeatureDistribution("gaussian-diagonal", p=20, seed=1, chi=5.0).covariance())
        assert np.sum(d == 5.0) == 10 and np.sum(d == 0.2) == 10

    def test_deterministic(self):
        dist = FeatureDistribution("gaussian-ar", p=4, seed=11)
        np.testing.assert_array_equal(simulate.gen_features(dist, 10), simulate.gen_features(dist, 10))

    def test_bernoulli_clamped(self):
        dist = FeatureDistribution("bernoulli", p=8, seed=2, chi=5.0)
        probs = dist.bernoulli_probabilities()
        assert set(np.round(probs, 12)) == {0.0, 0.8}
        X = simulate.gen_features(dist, 200)
        assert set(np.unique(X)) <= {0.0, 1.0}
        np.testing.assert_array_equal(X[:, probs == 0.0], 0.0)

    @pytest.mark.parametrize("kw", [
        dict(kind="gaussian-diagonal", chi=0.5),
        dict(kind="gaussian-ar", rho=1.0),
        dict(kind="gaussian-ar", rho=0.0),
        dict(kind="uniform"),
    ])
    def test_invalid_parameters(self, kw):
        with pytest.raises(ConfigurationError):
            FeatureDistribution(**kw)


class TestMetric:
    def test_rank_and_norm(self):
        K, A = simulate.gen_metric(20, 3, seed=0)
        w = np.linalg.eigvalsh(K)
        assert np.sum(w > 1e-8) == 3
        assert w.min() > -1e-12
        assert abs(np.linalg.norm(K, 2) - 1.0) < 1e-10
        np.testing.assert_allclose(K, A @ A.T, rtol=0, atol=1e-12)

    def test_rank_via_eigensolver(self):
        for r in (1, 3, 7):
            K, _ = simulate.gen_metric(10, r, seed=r)
            assert np.linalg.matrix_rank(K, tol=1e-8) == r

    def test_rank_too_large(self):
        with pytest.raises(ConfigurationError):
            simulate.gen_metric(3, 4, seed=0)

    def test_stage_streams_are_independent(self):
        _, A0 = simulate.gen_metric(5, 2, seed=0)
        _, A1 = simulate.gen_metric(5, 2, seed=1)
        assert not np.allclose(A0, A1)
        a = simulate.stage_rng(0, "metric").random(3)
        b = simulate.stage_rng(0, "responses").random(3)
        assert not np.allclose(a, b)


class TestTriplets:
    def test_full_set(self):
        T = simulate.sample_triplets(5, 1.0, seed=0)
        assert T.shape == (60, 3)
        np.testing.assert_array_equal(T, oracles.all_ordered_triplets(5))

    def test_empty(self):
        assert simulate.sample_triplets(5, 0.0, seed=0).shape == (0, 3)

    def test_desk_scale_count(self):
        T = simulate.sample_triplets(120, 0.5, seed=0)
        total = 120 * 119 * 118
        assert abs(T.shape[0] - 0.5 * total) < 4 * np.sqrt(total * 0.25)

    def test_valid_distinct_sorted(self):
        T = simulate.sample_triplets(30, 0.3, seed=4)
        i, j, k = T.T
        assert np.all((i != j) & (j != k) & (i != k))
        codes = (i * 30 + j) * 30 + k
        assert np.all(np.diff(codes) > 0)

    def test_decode_is_lexicographic_rank(self):
        n = 7
        full = oracles.all_ordered_triplets(n)
        np.testing.assert_array_equal(simulate._decode(np.arange(len(full)), n), full)

    def test_overlap_of_two_seeds(self):
        n, s = 40, 0.3
        a = simulate.sample_triplets(n, s, seed=1)
        b = simulate.sample_triplets(n, s, seed=2)
        code = lambda T: set(((T[:, 0] * n + T[:, 1]) * n + T[:, 2]).tolist())  # noqa: E731
        total = simulate.count_ordered_triplets(n)
        inter = len(code(a) & code(b))
        q = s * s
        assert abs(inter - q * total) < 4 * np.sqrt(total * q * (1 - q))

    def test_invalid_rate(self):
        with pytest.raises(ConfigurationError):
            simulate.sample_triplets(5, 1.5, seed=0)


class TestResponses:
    def draws(self, X, A, t, N):
        T = np.repeat(np.asarray([t]), N, axis=0)
        return simulate.sample_responses(X, A, T, seed=0).y

    def test_zero_margin_is_fair_coin(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
        y = self.draws(X, np.eye(2), (0, 1, 2), 10_000)
        assert abs(np.mean(y == 1) - 0.5) <= 3 * binomial_sigma(0.5, 10_000)

    def test_scalar_margin(self):
        X = np.array([[0.0], [1.0], [2.0]])
        p = 1 / (1 + np.exp(3.0))
        assert p == pytest.approx(0.04743, abs=1e-5)
        y = self.draws(X, np.array([[1.0]]), (0, 1, 2), 10_000)
        assert abs(np.mean(y == 1) - p) <= 3 * binomial_sigma(p, 10_000)

    def test_saturation(self):
        X = np.array([[0.0], [7.0], [0.5]])
        y = self.draws(X, np.array([[1.0]]), (0, 1, 2), 1000)
        assert np.all(y == 1)

    def test_matches_logistic_over_margins(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((10, 2))
        A = rng.standard_normal((2, 1))
        for t in [(0, 1, 2), (3, 4, 5), (6, 7, 8), (9, 0, 1)]:
            p = expit(oracles.margin_trace(X, A, t))
            y = self.draws(X, A, t, 10_000)
            assert abs(np.mean(y == 1) - p) <= 3 * binomial_sigma(p, 10_000) + 1e-12

    def test_deterministic(self):
        X = np.random.default_rng(1).standard_normal((6, 2))
        T = simulate.sample_triplets(6, 1.0, seed=0)
        a = simulate.sample_responses(X, np.eye(2)[:, :1], T, seed=5)
        b = simulate.sample_responses(X, np.eye(2)[:, :1], T, seed=5)
        np.testing.assert_array_equal(a.y, b.y)


class TestBatch:
    def test_rejects_bad_response(self):
        with pytest.raises(InvalidInputError):
            TripletBatch(np.array([[0, 1, 2]]), np.array([0]), n=3)

    def test_rejects_length_mismatch(self):
        with pytest.raises(InvalidInputError):
            TripletBatch(np.array([[0, 1, 2]]), np.array([1, -1]), n=3)

    def test_duplicates_detected(self):
        b = TripletBatch(np.array([[0, 1, 2], [0, 1, 2]]), np.array([1, -1]), n=3)
        with pytest.raises(InvalidInputError):
            b.check_distinct()

    def test_sorted(self):
        b = TripletBatch(np.array([[2, 1, 0], [0, 1, 2]]), np.array([1, -1]), n=3).sorted()
        np.testing.assert_array_equal(b.triplets, [[0, 1, 2], [2, 1, 0]])
        np.testing.assert_array_equal(b.y, [-1, 1])
