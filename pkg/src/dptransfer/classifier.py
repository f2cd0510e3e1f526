"""Reconstruction-error classifier built from per-class wide CDMMAs."""

from dataclasses import dataclass

import numpy as np

from .deep_autoencoder import fit_wide, wide_filter_batch
from .exceptions import InvalidArgumentError
from .numkit import as_data_matrix
from .privacy import perturb_groups


@dataclass
class ClassifierModel:
    class_models: list
    labels: list

    @property
    def C(self):
        return len(self.class_models)

    @property
    def p(self):
        return self.class_models[0].p


def _check_groups(groups):
    if len(groups) < 2:
        raise InvalidArgumentError(f"need at least two classes, got {len(groups)}")
    checked = []
    for c, Y in enumerate(groups):
        Y = np.asarray(Y, dtype=np.float64)
        if Y.ndim != 2 or Y.shape[1] == 0:
            raise InvalidArgumentError(f"class {c} has no samples")
        checked.append(as_data_matrix(Y, f"class {c}"))
    if len({Y.shape[0] for Y in checked}) != 1:
        raise InvalidArgumentError("all classes must share one feature dimension")
    return checked


def fit_classifier(groups, n, r_max, L, seed=0, labels=None):
    """One wide CDMMA per class; class ``c`` is trained with seed ``seed + c``."""
    groups = _check_groups(groups)
    models = [fit_wide(Y, n, r_max, L, seed + c) for c, Y in enumerate(groups)]
    return ClassifierModel(models, list(range(len(groups))) if labels is None else list(labels))


def fit_private_classifier(groups, dp, n, r_max, L, seed=0, labels=None):
    """Perturb every class matrix, then train on the noisy data only."""
    noisy = perturb_groups(_check_groups(groups), dp, seed)
    return fit_classifier(noisy, n, r_max, L, seed, labels)


def class_errors(model, Y):
    """Squared reconstruction error of every class model; shape (C, N)."""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y.reshape(-1, 1)
    return np.stack([wide_filter_batch(m, Y)[2] for m in model.class_models])


def classify_batch(model, Y):
    """Return ``(label indices (N,), errors (C, N))``; ties go to the lowest index."""
    errors = class_errors(model, Y)
    return np.argmin(errors, axis=0), errors


def classify(model, y):
    """Label of the class whose autoencoder best reconstructs ``y``."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    idx, errors = classify_batch(model, y.reshape(-1, 1))
    return model.labels[int(idx[0])], errors[:, 0]
