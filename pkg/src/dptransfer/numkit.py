"""Shared numerical primitives.

Data matrices follow one convention throughout the package: rows are
features and columns are samples, so a dataset of ``N`` points in
``R^p`` is a ``(p, N)`` array.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .exceptions import InvalidArgumentError, NumericalFailureError

# Relative jitter levels tried, in order, when factorising a symmetric
# system. Each level is scaled by tr(A)/dim.
JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6)
RESIDUAL_TOL = 1e-6


@dataclass(frozen=True)
class KernelParams:
    """Parameters of the weighted squared-exponential kernel.

    Attributes:
        sigma2: Kernel variance (value of the kernel at zero distance).
        weights: Non-negative per-feature inverse squared length scales.
    """

    sigma2: float
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if not np.isfinite(self.sigma2) or self.sigma2 <= 0:
            raise InvalidArgumentError(f"sigma2 must be positive, got {self.sigma2}")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise InvalidArgumentError("kernel weights must be finite and non-negative")
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "weights", w)

    @property
    def dim(self):
        return self.weights.shape[0]

    def with_sigma2(self, sigma2):
        return KernelParams(sigma2, self.weights)


def as_data_matrix(values, name="data"):
    """Return ``values`` as a finite float64 ``(p, N)`` array."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidArgumentError(f"{name} must be a non-empty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains NaN or Inf")
    return arr


def kernel(x, x2, kp):
    """Evaluate ``sigma2 * exp(-0.5 * sum_k w_k (x_k - x2_k)^2)``."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    x2 = np.asarray(x2, dtype=np.float64).reshape(-1)
    if x.shape != x2.shape or x.shape[0] != kp.dim:
        raise InvalidArgumentError(
            f"kernel arguments have lengths {x.shape[0]}, {x2.shape[0]}; weights have {kp.dim}"
        )
    diff = x - x2
    return kp.sigma2 * float(np.exp(-0.5 * np.dot(kp.weights, diff * diff)))


def weighted_sq_dists(A, B, weights):
    """Weighted squared distances between columns of ``A`` and ``B``.

    Returns an ``(NA, NB)`` array. Uses the Gram expansion, so entries are
    clipped at zero to absorb cancellation error.
    """
    s = np.sqrt(weights)[:, None]
    As = A * s
    Bs = B * s
    a2 = np.einsum("ij,ij->j", As, As)
    b2 = np.einsum("ij,ij->j", Bs, Bs)
    d2 = a2[:, None] + b2[None, :] - 2.0 * (As.T @ Bs)
    np.maximum(d2, 0.0, out=d2)
    return d2


def kernel_matrix(A, B, kp):
    """Kernel matrix with entry ``(i, j) = kernel(A[:, i], B[:, j])``."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[0] != B.shape[0] or A.shape[0] != kp.dim:
        raise InvalidArgumentError(
            f"kernel_matrix needs matching feature dimension, got {A.shape}, {B.shape}, weights {kp.dim}"
        )
    same = A is B or (A.shape == B.shape and np.array_equal(A, B))
    d2 = weighted_sq_dists(A, B, kp.weights)
    if same:
        d2 = 0.5 * (d2 + d2.T)
        np.fill_diagonal(d2, 0.0)
    return kp.sigma2 * np.exp(-0.5 * d2)


@dataclass
class KMeansResult:
    centroids: np.ndarray  # (n, M)
    labels: np.ndarray  # (N,)
    objective: list  # objective after each Lloyd update


def _sq_dists_rows(P, Q):
    p2 = np.einsum("ij,ij->i", P, P)
    q2 = np.einsum("ij,ij->i", Q, Q)
    d2 = p2[:, None] + q2[None, :] - 2.0 * (P @ Q.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def _kmeanspp_init(Xt, M, rng):
    N = Xt.shape[0]
    chosen = np.empty(M, dtype=np.int64)
    chosen[0] = rng.integers(N)
    taken = np.zeros(N, dtype=bool)
    taken[chosen[0]] = True
    d2 = np.sum((Xt - Xt[chosen[0]]) ** 2, axis=1)
    for m in range(1, M):
        total = d2.sum()
        if total > 0:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, N - 1)
            if taken[idx]:
                idx = int(np.argmax(d2))
        else:
            free = np.flatnonzero(~taken)
            idx = int(free[rng.integers(free.shape[0])])
        chosen[m] = idx
        taken[idx] = True
        np.minimum(d2, np.sum((Xt - Xt[idx]) ** 2, axis=1), out=d2)
    return Xt[chosen].copy()


def _cluster_means(Xt, labels, M):
    order = np.argsort(labels, kind="stable")
    counts = np.bincount(labels, minlength=M)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    sums = np.add.reduceat(Xt[order], starts, axis=0)
    return sums / counts[:, None]


def kmeans(X, M, seed, max_iter=100, tol=1e-6):
    """Lloyd's k-means with k-means++ seeding on the columns of ``X``.

    Empty clusters are re-seeded with the point farthest from its current
    centroid, so every returned cluster is non-empty and every centroid is
    the mean of its members.
    """
    X = np.asarray(X, dtype=np.float64)
    N = X.shape[1]
    if not 1 <= M <= N:
        raise InvalidArgumentError(f"k-means needs 1 <= M <= N, got M={M}, N={N}")
    rng = np.random.default_rng(seed)
    Xt = np.ascontiguousarray(X.T)
    if M == 1:
        c = Xt.mean(axis=0, keepdims=True)
        obj = float(np.sum((Xt - c) ** 2))
        return KMeansResult(c.T.copy(), np.zeros(N, dtype=np.int64), [obj])

    C = _kmeanspp_init(Xt, M, rng)
    labels = None
    history = []
    for _ in range(max_iter):
        d2 = _sq_dists_rows(Xt, C)
        new_labels = np.argmin(d2, axis=1)
        counts = np.bincount(new_labels, minlength=M)
        if np.any(counts == 0):
            own = d2[np.arange(N), new_labels]
            for k in np.flatnonzero(counts == 0):
                movable = counts[new_labels] > 1
                i = int(np.argmax(np.where(movable, own, -1.0)))
                counts[new_labels[i]] -= 1
                new_labels[i] = k
                counts[k] = 1
                own[i] = -1.0
        C = _cluster_means(Xt, new_labels, M)
        obj = float(np.sum((Xt - C[new_labels]) ** 2))
        history.append(obj)
        converged = labels is not None and np.array_equal(labels, new_labels)
        labels = new_labels
        if converged or obj == 0.0:
            break
        if len(history) > 1 and history[-2] > 0 and (history[-2] - obj) / history[-2] < tol:
            break
    return KMeansResult(np.ascontiguousarray(C.T), labels.astype(np.int64), history)


def kmeans_centroids(X, M, seed):
    """Return the ``(n, M)`` matrix of k-means centroids of ``X``'s columns."""
    X = as_data_matrix(X, "X")
    if M < 1 or M > X.shape[1]:
        raise InvalidArgumentError(f"cannot pick {M} centroids from {X.shape[1]} points")
    return kmeans(X, int(M), seed).centroids


def principal_directions(X, k):
    """Top-``k`` eigenvectors of the sample covariance of ``X``'s columns.

    Rows of the result are unit-norm and mutually orthogonal, ordered by
    descending eigenvalue, with the sign chosen so that each row's
    largest-magnitude entry is positive.
    """
    X = as_data_matrix(X, "X")
    p, N = X.shape
    if not 1 <= k <= p:
        raise InvalidArgumentError(f"requested {k} principal directions of {p}-dimensional data")
    if N < 2:
        cov = np.zeros((p, p))
    else:
        centred = X - X.mean(axis=1, keepdims=True)
        cov = centred @ centred.T / (N - 1)
        cov = 0.5 * (cov + cov.T)
    _, vecs = linalg.eigh(cov, subset_by_index=(p - k, p - 1))
    rows = vecs[:, ::-1].T.copy()
    pivot = np.argmax(np.abs(rows), axis=1)
    signs = np.sign(rows[np.arange(k), pivot])
    signs[signs == 0] = 1.0
    return rows * signs[:, None]


def spd_factor(A):
    """Cholesky-factorise ``A + lam*I`` climbing the jitter ladder.

    Returns ``(cho, lam)`` where ``cho`` is a ``scipy.linalg.cho_factor``
    result. Raises NumericalFailureError when every level fails.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidArgumentError(f"expected a square matrix, got shape {A.shape}")
    dim = A.shape[0]
    scale = np.trace(A) / dim
    if not np.isfinite(scale) or scale <= 0:
        scale = 1.0
    eye = np.eye(dim)
    for level in JITTER_LADDER:
        lam = level * scale
        try:
            cho = linalg.cho_factor(A + lam * eye if lam else A, lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
        if np.all(np.isfinite(cho[0])):
            return cho, lam
    raise NumericalFailureError("symmetric factorisation failed at every jitter level")


def solve_spd(A, B):
    """Solve ``(A + lam*I) X = B`` for symmetric ``A``.

    ``lam`` starts at zero and escalates through ``JITTER_LADDER`` (scaled by
    tr(A)/dim) until the factorisation succeeds and the relative residual is
    at most ``RESIDUAL_TOL``.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidArgumentError(f"expected a square matrix, got shape {A.shape}")
    if B.shape[0] != A.shape[0]:
        raise InvalidArgumentError(f"right-hand side has {B.shape[0]} rows, system has {A.shape[0]}")
    bnorm = np.linalg.norm(B)
    if bnorm == 0:
        return np.zeros_like(B)
    dim = A.shape[0]
    scale = np.trace(A) / dim
    if not np.isfinite(scale) or scale <= 0:
        scale = 1.0
    residual = np.inf
    for level in JITTER_LADDER:
        lam = level * scale
        Aj = A + lam * np.eye(dim) if lam else A
        try:
            cho = linalg.cho_factor(Aj, lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
        X = linalg.cho_solve(cho, B, check_finite=False)
        if not np.all(np.isfinite(X)):
            continue
        residual = np.linalg.norm(Aj @ X - B) / bnorm
        if residual <= RESIDUAL_TOL:
            return X
    raise NumericalFailureError(
        f"symmetric solve failed at every jitter level (final residual {residual:.3e})",
        residual=residual,
    )
