"""Conditionally deep membership-mapping autoencoders (CDMMA).

A CDMMA stacks ``L`` layers. Layer ``l`` projects its input onto the top
``n_l`` principal directions of the training data and maps the projection
back to data space with a membership-mapping. Filtering keeps whichever
layer reconstructs the input best. A wide CDMMA trains one CDMMA per
k-means partition and keeps the best-reconstructing member.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import membership_mapping as mm
from .exceptions import InvalidArgumentError
from .numkit import as_data_matrix, kmeans, principal_directions

WIDE_CHUNK = 1000  # samples per partition of a wide CDMMA


@dataclass
class CdmmaLayer:
    projection: np.ndarray  # (n_l, p)
    mapping: mm.MembershipMappingModel


@dataclass
class CdmmaModel:
    layers: list
    p: int

    @property
    def L(self):
        return len(self.layers)

    @property
    def widths(self):
        return [layer.projection.shape[0] for layer in self.layers]


@dataclass
class WideCdmmaModel:
    submodels: list
    partition_sizes: list = field(default_factory=list)

    @property
    def S(self):
        return len(self.submodels)

    @property
    def p(self):
        return self.submodels[0].p


def layer_width(n, l):
    """Subspace dimension of layer ``l`` (1-based): ``max(n - l + 1, 1)``."""
    return max(n - l + 1, 1)


def available_rank(N, p):
    """Largest useful number of principal directions for N samples in R^p."""
    return max(min(p, N - 1), 1)


def fit_cdmma(Y, n, M_max, L, seed=0):
    """Train a CDMMA on the columns of ``Y`` (p, N).

    Requests for more directions than the sample covariance can support
    are clamped to ``min(n_l, N - 1)``.
    """
    Y = as_data_matrix(Y, "Y")
    p, N = Y.shape
    if L < 1:
        raise InvalidArgumentError(f"L must be at least 1, got {L}")
    if not 1 <= n <= p:
        raise InvalidArgumentError(f"subspace dimension must lie in [1, {p}], got {n}")
    if not 1 <= M_max <= N:
        raise InvalidArgumentError(f"M_max must lie in [1, N={N}], got {M_max}")

    top = min(n, available_rank(N, p))
    # Every layer draws its projection from the covariance of Y itself.
    directions = principal_directions(Y, top)
    layers = []
    current = Y
    m_max = int(M_max)
    for l in range(1, L + 1):
        P = directions[: min(layer_width(n, l), top)].copy()
        X = P @ current
        mapping = mm.fit(X, Y, m_max, seed)
        layers.append(CdmmaLayer(P, mapping))
        current = mm.predict_batch(mapping, X)
        m_max = mapping.M
    return CdmmaModel(layers, p)


def _check_inputs(Y, p):
    Y = np.asarray(Y, dtype=np.float64)
    single = Y.ndim == 1
    if single:
        Y = Y.reshape(-1, 1)
    if Y.shape[0] != p:
        raise InvalidArgumentError(f"inputs have {Y.shape[0]} features, model expects {p}")
    return Y, single


def cdmma_layer_outputs(model, Y):
    """Reconstructions of every layer for columns of ``Y``; shape (L, p, N)."""
    Y, _ = _check_inputs(Y, model.p)
    outputs = np.empty((model.L,) + Y.shape)
    current = Y
    for i, layer in enumerate(model.layers):
        current = mm.predict_batch(layer.mapping, layer.projection @ current)
        outputs[i] = current
    return outputs


def cdmma_filter_batch(model, Y):
    """Filter each column of ``Y``.

    Returns ``(Y_hat (p, N), l_star (N,), errors (L, N))`` where ``l_star``
    is the 0-based index of the best layer; ties go to the lowest index.
    """
    Y, _ = _check_inputs(Y, model.p)
    outputs = cdmma_layer_outputs(model, Y)
    errors = np.sum((outputs - Y[None]) ** 2, axis=1)
    l_star = np.argmin(errors, axis=0)
    cols = np.arange(Y.shape[1])
    return outputs[l_star, :, cols].T, l_star, errors


def cdmma_filter(model, y):
    """Filter one vector; returns ``(y_hat, l_star, errors)``."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    y_hat, l_star, errors = cdmma_filter_batch(model, y.reshape(-1, 1))
    return y_hat[:, 0], int(l_star[0]), errors[:, 0]


def fit_wide(Y, n, r_max, L, seed=0):
    """Train a wide CDMMA: ``ceil(N / 1000)`` k-means partitions, one CDMMA each.

    Partition ``s`` uses ``M_max = ceil(r_max * size)`` and seed ``seed + s``.
    """
    Y = as_data_matrix(Y, "Y")
    N = Y.shape[1]
    if not 0 < r_max <= 1:
        raise InvalidArgumentError(f"r_max must lie in (0, 1], got {r_max}")
    S = math.ceil(N / WIDE_CHUNK)
    if S == 1:
        labels = np.zeros(N, dtype=np.int64)
    else:
        labels = kmeans(Y, S, seed).labels
    submodels = []
    sizes = []
    for s in range(S):
        part = Y[:, labels == s]
        size = part.shape[1]
        m_max = max(1, math.ceil(r_max * size))
        submodels.append(fit_cdmma(part, min(n, Y.shape[0]), m_max, L, seed + s))
        sizes.append(size)
    return WideCdmmaModel(submodels, sizes)


def wide_filter_batch(model, Y):
    """Filter each column of ``Y`` through the best submodel.

    Returns ``(Y_hat (p, N), s_star (N,), errors (N,), sub_errors (S, N))``.
    """
    Y, _ = _check_inputs(Y, model.p)
    N = Y.shape[1]
    outputs = np.empty((model.S,) + Y.shape)
    sub_errors = np.empty((model.S, N))
    cols = np.arange(N)
    for s, sub in enumerate(model.submodels):
        y_hat, l_star, errors = cdmma_filter_batch(sub, Y)
        outputs[s] = y_hat
        sub_errors[s] = errors[l_star, cols]
    s_star = np.argmin(sub_errors, axis=0)
    return outputs[s_star, :, cols].T, s_star, sub_errors[s_star, cols], sub_errors


def wide_filter(model, y):
    """Filter one vector; returns ``(y_hat, s_star, error)``."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    y_hat, s_star, error, _ = wide_filter_batch(model, y.reshape(-1, 1))
    return y_hat[:, 0], int(s_star[0]), float(error[0])
