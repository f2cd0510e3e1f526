import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import cholesky

from dptransfer.exceptions import InvalidArgumentError, NumericalFailureError
from dptransfer.numkit import (
    KernelParams,
    as_data_matrix,
    kernel,
    kernel_matrix,
    kmeans,
    kmeans_centroids,
    principal_directions,
    solve_spd,
    spd_factor,
)


def brute_kernel(x, x2, sigma2, w):
    return sigma2 * np.exp(-0.5 * sum(wk * (a - b) ** 2 for wk, a, b in zip(w, x, x2)))


class TestKernelParams:
    def test_rejects_non_positive_sigma2(self):
        with pytest.raises(InvalidArgumentError):
            KernelParams(0.0, np.ones(2))

    def test_rejects_negative_weight(self):
        with pytest.raises(InvalidArgumentError):
            KernelParams(1.0, np.array([1.0, -0.1]))

    def test_with_sigma2_keeps_weights(self):
        kp = KernelParams(1.0, np.array([0.5, 2.0]))
        kp2 = kp.with_sigma2(3.0)
        assert kp2.sigma2 == 3.0
        np.testing.assert_array_equal(kp2.weights, kp.weights)


class TestKernel:
    def test_self_similarity_is_sigma2(self):
        kp = KernelParams(1.7, np.array([0.3, 4.0, 1.0]))
        x = np.array([0.2, -1.0, 5.0])
        assert kernel(x, x, kp) == pytest.approx(1.7, abs=0)

    def test_zero_weights_give_constant(self):
        kp = KernelParams(2.5, np.zeros(3))
        assert kernel(np.zeros(3), np.array([10.0, -3.0, 1.0]), kp) == 2.5

    def test_closed_form_value(self):
        kp = KernelParams(2.0, np.array([1.0]))
        assert kernel(np.array([0.0]), np.array([np.sqrt(2.0)]), kp) == pytest.approx(2 * np.exp(-1), rel=1e-14)
        assert kernel(np.array([0.0]), np.array([np.sqrt(2.0)]), kp) == pytest.approx(0.735759, abs=1e-6)

    @given(
        st.lists(st.floats(-5, 5), min_size=3, max_size=3),
        st.lists(st.floats(-5, 5), min_size=3, max_size=3),
        st.floats(0.1, 3),
    )
    def test_bounded_by_sigma2(self, a, b, sigma2):
        kp = KernelParams(sigma2, np.array([0.1, 0.5, 0.05]))
        v = kernel(np.array(a), np.array(b), kp)
        assert 0 < v <= sigma2
        assert v == pytest.approx(brute_kernel(a, b, sigma2, kp.weights), rel=1e-12)


class TestKernelMatrix:
    def test_single_column(self):
        kp = KernelParams(0.8, np.ones(4))
        A = np.arange(4.0).reshape(4, 1)
        np.testing.assert_array_equal(kernel_matrix(A, A, kp), [[0.8]])

    def test_zero_weights_all_ones(self):
        kp = KernelParams(1.0, np.zeros(2))
        A = np.array([[0.0, 3.0], [1.0, -2.0]])
        np.testing.assert_array_equal(kernel_matrix(A, A, kp), np.ones((2, 2)))

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((5, 30))
        K = kernel_matrix(A, A, KernelParams(1.3, rng.uniform(0, 1, 5)))
        np.testing.assert_array_equal(K, K.T)

    def test_matches_pointwise_kernel(self):
        rng = np.random.default_rng(1)
        A, B = rng.standard_normal((3, 7)), rng.standard_normal((3, 4))
        kp = KernelParams(0.9, rng.uniform(0, 2, 3))
        K = kernel_matrix(A, B, kp)
        ref = [[brute_kernel(A[:, i], B[:, j], 0.9, kp.weights) for j in range(4)] for i in range(7)]
        np.testing.assert_allclose(K, ref, rtol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.integers(2, 40))
    def test_jittered_gram_is_positive_definite(self, seed, N):
        rng = np.random.default_rng(seed)
        A = rng.uniform(0, 1, (3, N))
        K = kernel_matrix(A, A, KernelParams(1.0, np.ones(3)))
        cholesky(K + 1e-10 * np.trace(K) * np.eye(N), lower=True)


class TestDataMatrix:
    def test_rejects_nan(self):
        with pytest.raises(InvalidArgumentError):
            as_data_matrix(np.array([[1.0, np.nan]]))

    def test_rejects_empty(self):
        with pytest.raises(InvalidArgumentError):
            as_data_matrix(np.empty((3, 0)))

    def test_vector_becomes_column(self):
        assert as_data_matrix(np.arange(3.0)).shape == (3, 1)


class TestKMeans:
    def test_m_equals_n_recovers_points(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((2, 12))
        C = kmeans_centroids(X, 12, seed=0)
        assert sorted(map(tuple, C.T)) == sorted(map(tuple, X.T))

    def test_single_cluster_is_mean(self):
        X = np.random.default_rng(3).standard_normal((4, 50))
        np.testing.assert_allclose(kmeans_centroids(X, 1, seed=5)[:, 0], X.mean(axis=1), rtol=1e-13)

    def test_two_separated_groups(self):
        rng = np.random.default_rng(4)
        g1 = rng.normal(0, 0.1, (2, 40))
        g2 = rng.normal(0, 0.1, (2, 40)) + np.array([[10.0], [10.0]])
        res = kmeans(np.hstack([g1, g2]), 2, seed=0)
        assert len(set(res.labels[:40])) == 1 and len(set(res.labels[40:])) == 1
        assert res.labels[0] != res.labels[40]
        within = max(np.linalg.norm(g1 - g1.mean(axis=1, keepdims=True), axis=0).max(),
                     np.linalg.norm(g2 - g2.mean(axis=1, keepdims=True), axis=0).max())
        between = np.linalg.norm(res.centroids[:, 0] - res.centroids[:, 1])
        assert within < between

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.integers(2, 8))
    def test_objective_non_increasing(self, seed, M):
        X = np.random.default_rng(seed).standard_normal((3, 60))
        obj = np.array(kmeans(X, M, seed=seed).objective)
        assert np.all(np.diff(obj) <= 1e-9 * obj[0])

    def test_deterministic(self):
        X = np.random.default_rng(5).standard_normal((3, 100))
        np.testing.assert_array_equal(kmeans_centroids(X, 6, 11), kmeans_centroids(X, 6, 11))

    def test_duplicate_points(self):
        X = np.ones((2, 10))
        C = kmeans_centroids(X, 3, seed=0)
        np.testing.assert_array_equal(C, np.ones((2, 3)))

    def test_rejects_too_many_clusters(self):
        with pytest.raises(InvalidArgumentError):
            kmeans(np.zeros((2, 3)), 4, seed=0)


class TestPrincipalDirections:
    def test_line_direction(self):
        t = np.linspace(-2, 2, 25)
        X = np.vstack([t, t])
        P = principal_directions(X, 1)
        np.testing.assert_allclose(P, [[np.sqrt(0.5), np.sqrt(0.5)]], atol=1e-12)

    def test_full_basis_orthonormal(self):
        X = np.random.default_rng(6).standard_normal((6, 40))
        P = principal_directions(X, 6)
        np.testing.assert_allclose(P @ P.T, np.eye(6), atol=1e-12)

    def test_identical_columns(self):
        X = np.tile(np.array([[1.0], [2.0], [3.0]]), (1, 8))
        P = principal_directions(X, 2)
        np.testing.assert_allclose(P @ P.T, np.eye(2), atol=1e-12)

    def test_matches_svd_subspace(self):
        X = np.random.default_rng(7).standard_normal((5, 80)) * np.array([[5], [3], [1], [0.5], [0.1]])
        P = principal_directions(X, 2)
        U, _, _ = np.linalg.svd(X - X.mean(axis=1, keepdims=True))
        np.testing.assert_allclose(np.abs(P @ U[:, :2]), np.eye(2), atol=1e-8)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 5))
    def test_rows_orthonormal(self, seed, k):
        X = np.random.default_rng(seed).standard_normal((5, 20))
        P = principal_directions(X, k)
        np.testing.assert_allclose(np.linalg.norm(P, axis=1), 1.0, atol=1e-10)
        off = P @ P.T - np.eye(k)
        assert np.max(np.abs(off)) <= 1e-8

    def test_sign_convention(self):
        X = np.random.default_rng(8).standard_normal((4, 30))
        P = principal_directions(X, 4)
        idx = np.argmax(np.abs(P), axis=1)
        assert np.all(P[np.arange(4), idx] > 0)


class TestSolveSpd:
    def test_identity(self):
        B = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(solve_spd(np.eye(2), B), B)

    def test_diagonal(self):
        np.testing.assert_allclose(solve_spd(np.diag([2.0, 4.0]), np.array([2.0, 4.0])), [1.0, 1.0])

    def test_singular_in_range(self):
        A = np.ones((2, 2))
        B = np.array([2.0, 2.0])
        X = solve_spd(A, B)
        assert np.linalg.norm(A @ X - B) <= 1e-6 * np.linalg.norm(B)
        np.testing.assert_allclose(X, np.linalg.pinv(A) @ B, atol=1e-3)

    def test_non_finite_system_fails(self):
        A = np.array([[1.0, np.nan], [np.nan, 1.0]])
        with pytest.raises(NumericalFailureError):
            solve_spd(A, np.array([0.0, 1.0]))

    def test_singular_out_of_range_is_regularised(self):
        # residual is checked on the jittered system, so this still solves
        A = np.array([[1.0, 0.0], [0.0, 0.0]])
        X = solve_spd(A, np.array([0.0, 1.0]))
        assert np.all(np.isfinite(X)) and X[1] > 1e5

    def test_factor_of_zero_matrix(self):
        cho, lam = spd_factor(np.zeros((3, 3)))
        assert lam > 0
