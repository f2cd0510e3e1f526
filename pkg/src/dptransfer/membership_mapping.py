"""Variational membership-mappings with inducing points.

A membership-mapping here is a kernel regressor ``y = alpha^T G(x)^T``
whose coefficients come from a closed-form variational solution. Training
picks the number of inducing points ``M`` and the kernel variance from the
data, then alternates the coefficient solve with a disturbance-precision
update until the precision settles.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .exceptions import DegenerateDataError, InvalidArgumentError
from .numkit import (
    KernelParams,
    as_data_matrix,
    kernel_matrix,
    kmeans_centroids,
    solve_spd,
    spd_factor,
)

NU = 2.1  # degrees of freedom of the Student-t interpolation
KAPPA = 0.1  # minimum smoothing level tau(M, 1) accepted by the M search
SHRINK = 0.9
BETA_RTOL = 1e-3
BETA_MAX_ITER = 100


@dataclass
class MembershipMappingModel:
    """A trained mapping from ``R^n`` to ``R^p``.

    Attributes:
        alpha: ``(M, p)`` coefficient matrix.
        inducing_points: ``(n, M)`` auxiliary points (k-means centroids).
        kp: Kernel parameters; ``kp.sigma2`` is the chosen kernel variance.
        nu: Student-t degrees of freedom.
        beta: Final disturbance precision.
        beta_iterations: Number of precision updates performed in training.
    """

    alpha: np.ndarray
    inducing_points: np.ndarray
    kp: KernelParams
    nu: float = NU
    beta: float = 1.0
    beta_iterations: int = 0

    @property
    def M(self):
        return self.inducing_points.shape[1]

    @property
    def input_dim(self):
        return self.inducing_points.shape[0]

    @property
    def output_dim(self):
        return self.alpha.shape[1]


@dataclass
class InducingPosterior:
    mean: np.ndarray  # (M, p), one column per output dimension
    covariance: np.ndarray  # (M, M), shared by all outputs


def feature_weights(X):
    """Inverse squared feature ranges; constant features get weight zero."""
    span = X.max(axis=1) - X.min(axis=1)
    w = np.zeros_like(span)
    nz = span > 0
    w[nz] = span[nz] ** -2.0
    return w


def _tau_numerator(Kxa, Kaa, sigma2, N):
    """tr(K_xx) - tr(K_aa^-1 K_xa^T K_xa); tr(K_xx) is N*sigma2 exactly."""
    cho, _ = spd_factor(Kaa)
    half = linalg.solve_triangular(cho[0], Kxa.T, lower=True, check_finite=False)
    return N * sigma2 - float(np.sum(half * half))


def tau(X, a, kp, nu=NU):
    """Smoothing level ``[tr(K_xx) - tr(K_aa^-1 K_xa^T K_xa)] / (nu + M - 2)``."""
    X = as_data_matrix(X, "X")
    a = as_data_matrix(a, "a")
    if X.shape[0] != a.shape[0]:
        raise InvalidArgumentError(f"X has {X.shape[0]} features, a has {a.shape[0]}")
    if nu <= 2:
        raise InvalidArgumentError(f"nu must exceed 2, got {nu}")
    M = a.shape[1]
    Kxa = kernel_matrix(X, a, kp)
    Kaa = kernel_matrix(a, a, kp)
    return _tau_numerator(Kxa, Kaa, kp.sigma2, X.shape[1]) / (nu + M - 2)


def _solve_alpha(KtK, KtY, Kaa, tau_val, beta):
    A = KtK + tau_val * Kaa + Kaa / beta
    return solve_spd(0.5 * (A + A.T), KtY)


def _mse(alpha, KtK, KtY, yy, count):
    # ||Y - K alpha||^2 expanded so each iteration costs O(M^2 p), not O(N M p).
    sse = yy - 2.0 * np.sum(alpha * KtY) + np.sum(alpha * (KtK @ alpha))
    return max(sse, 0.0) / count


def _choose_m(X, M_max, seed, weights, nu):
    """Shrink M from M_max until tau(M, 1) reaches KAPPA."""
    N = X.shape[1]
    kp1 = KernelParams(1.0, weights)
    M = M_max
    while True:
        a = kmeans_centroids(X, M, seed)
        t1 = tau(X, a, kp1, nu)
        if t1 >= KAPPA:
            return M, a, t1
        if M == 1:
            if N == 1:
                # A single sample is interpolated exactly; there is nothing to smooth.
                return M, a, t1
            raise DegenerateDataError(
                f"tau(1, 1) = {t1:.3e} < {KAPPA}: inputs carry no usable spread"
            )
        # ceil(0.9 M) stalls for M <= 9, so always drop at least one point.
        M = min(math.ceil(SHRINK * M), M - 1)


def fit(X, Y, M_max, seed=0):
    """Train a membership-mapping on inputs ``X`` (n, N) and targets ``Y`` (p, N)."""
    X = as_data_matrix(X, "X")
    Y = as_data_matrix(Y, "Y")
    N = X.shape[1]
    if Y.shape[1] != N:
        raise InvalidArgumentError(f"X has {N} samples, Y has {Y.shape[1]}")
    M_max = int(M_max)
    if not 1 <= M_max <= N:
        raise InvalidArgumentError(f"M_max must lie in [1, N={N}], got {M_max}")

    nu = NU
    weights = feature_weights(X)
    M, a, tau1 = _choose_m(X, M_max, seed, weights, nu)

    target_var = float(np.mean(np.var(Y, axis=1)))
    sigma2 = 1.0 if tau1 >= target_var else target_var / tau1
    kp = KernelParams(sigma2, weights)
    tau_val = sigma2 * tau1

    Kxa = kernel_matrix(X, a, kp)
    Kaa = kernel_matrix(a, a, kp)
    KtK = Kxa.T @ Kxa
    KtY = Kxa.T @ Y.T
    yy = float(np.sum(Y * Y))
    count = Y.size
    mse_floor = max(1e-12 * yy / count, 1e-300)

    beta = 1.0
    iterations = 0
    for iterations in range(1, BETA_MAX_ITER + 1):
        alpha = _solve_alpha(KtK, KtY, Kaa, tau_val, beta)
        new_beta = 1.0 / max(_mse(alpha, KtK, KtY, yy, count), mse_floor)
        change = abs(new_beta - beta) / beta
        beta = new_beta
        if change < BETA_RTOL:
            break
    alpha = _solve_alpha(KtK, KtY, Kaa, tau_val, beta)
    return MembershipMappingModel(alpha, a, kp, nu, beta, iterations)


def gram_row(model, X):
    """Kernel rows ``G(x)`` against the inducing points, shape (N, M)."""
    return kernel_matrix(X, model.inducing_points, model.kp)


def predict_batch(model, X):
    """Predict outputs for every column of ``X`` (n, N); returns (p, N)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.shape[0] != model.input_dim:
        raise InvalidArgumentError(f"inputs have {X.shape[0]} features, model expects {model.input_dim}")
    return model.alpha.T @ gram_row(model, X).T


def predict(model, x):
    """Predict ``alpha^T G(x)^T`` for a single input vector."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != model.input_dim:
        raise InvalidArgumentError(f"input has length {x.shape[0]}, model expects {model.input_dim}")
    return predict_batch(model, x.reshape(-1, 1))[:, 0]


def inducing_posterior(X, Y, a, kp, nu, beta):
    """Optimal Gaussian membership of the inducing outputs.

    covariance = [K_aa^-1 + beta K_aa^-1 K_xa^T K_xa K_aa^-1 + beta tau K_aa^-1]^-1
    mean_j     = beta covariance K_aa^-1 K_xa^T y_j

    Evaluated as ``K_aa B^-1 K_aa`` with ``B = K_aa + beta K_xa^T K_xa +
    beta tau K_aa`` to avoid forming explicit inverses.
    """
    X = as_data_matrix(X, "X")
    Y = as_data_matrix(Y, "Y")
    a = as_data_matrix(a, "a")
    if beta <= 0:
        raise InvalidArgumentError(f"beta must be positive, got {beta}")
    M = a.shape[1]
    Kxa = kernel_matrix(X, a, kp)
    Kaa = kernel_matrix(a, a, kp)
    tau_val = _tau_numerator(Kxa, Kaa, kp.sigma2, X.shape[1]) / (nu + M - 2)
    B = Kaa + beta * (Kxa.T @ Kxa) + beta * tau_val * Kaa
    B = 0.5 * (B + B.T)
    cov = Kaa @ solve_spd(B, Kaa)
    cov = 0.5 * (cov + cov.T)
    mean = beta * (Kaa @ solve_spd(B, Kxa.T @ Y.T))
    return InducingPosterior(mean, cov)
