"""Private source-to-target transfer with pseudo-labelled target training.

Pipeline:

1. perturb the source classes and train the source classifier on the noisy
   copies only;
2. compute principal subspaces of the noisy source data and of all target
   data, and lift target vectors into source space;
3. train an initial target classifier on the labelled target samples;
4. alternate refitting the target classifier on labelled plus
   pseudo-labelled samples with relabelling the unlabelled pool;
5. learn a source-to-target mapping from source-classifier reconstructions
   of target samples back to the samples themselves.

Prediction takes, for every class, the smallest of three reconstruction
errors (target autoencoder, mapped source reconstruction, source
autoencoder) and returns the class with the smallest such error.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import membership_mapping as mm
from .classifier import ClassifierModel, classify_batch, fit_classifier
from .deep_autoencoder import available_rank, wide_filter_batch
from .exceptions import InvalidArgumentError
from .numkit import as_data_matrix, principal_directions
from .privacy import DpParams, perturb_groups

log = logging.getLogger(__name__)

S2T_M_CAP = 1000


@dataclass
class TransferConfig:
    """Hyper-parameters of the transfer pipeline.

    ``source_n`` and ``n_st`` default to ``min(20, p_sr)`` and
    ``min(ceil(p_sr / 2), p_tg)`` when left as ``None``.
    """

    dp: DpParams = field(default_factory=DpParams)
    source_n: int = None
    source_r_max: float = 0.5
    source_L: int = 5
    n_st: int = None
    it_max: int = 4
    n_schedule: tuple = (5, 10, 15, 20)
    r_max: float = 0.5
    initial_r_max: float = 1.0
    initial_L: int = 1
    L: int = 1

    def __post_init__(self):
        self.n_schedule = tuple(int(v) for v in self.n_schedule)
        if self.it_max < 0:
            raise InvalidArgumentError(f"it_max must be non-negative, got {self.it_max}")
        if len(self.n_schedule) < self.it_max:
            raise InvalidArgumentError(
                f"n_schedule has {len(self.n_schedule)} entries but it_max is {self.it_max}"
            )
        if any(b < a for a, b in zip(self.n_schedule, self.n_schedule[1:])):
            raise InvalidArgumentError(f"n_schedule must be non-decreasing, got {self.n_schedule}")
        if any(v < 1 for v in self.n_schedule):
            raise InvalidArgumentError("n_schedule entries must be positive")
        for name in ("source_r_max", "r_max", "initial_r_max"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise InvalidArgumentError(f"{name} must lie in (0, 1], got {value}")
        for name in ("source_L", "initial_L", "L"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be at least 1")

    def resolved_n_st(self, p_sr, p_tg):
        n_st = self.n_st if self.n_st is not None else min(math.ceil(p_sr / 2), p_tg)
        if not 1 <= n_st <= min(p_sr, p_tg):
            raise InvalidArgumentError(f"n_st must lie in [1, {min(p_sr, p_tg)}], got {n_st}")
        return n_st

    def resolved_source_n(self, p_sr):
        return self.source_n if self.source_n is not None else min(20, p_sr)


@dataclass
class TransferModel:
    source_classifier: ClassifierModel
    target_classifier: ClassifierModel
    s2t: mm.MembershipMappingModel
    V_sr: np.ndarray
    V_tg: np.ndarray
    pool_sizes: list = field(default_factory=list)  # per-iteration pseudo-label counts

    @property
    def p_sr(self):
        return self.V_sr.shape[1]

    @property
    def p_tg(self):
        return self.V_tg.shape[1]


def align(y_tg, V_sr, V_tg):
    """Lift target vectors (columns) into source space: ``V_sr^T V_tg y``.

    Returns the input unchanged when both domains have the same dimension.
    """
    y = np.asarray(y_tg, dtype=np.float64)
    if y.shape[0] != V_tg.shape[1]:
        raise InvalidArgumentError(f"target vector has {y.shape[0]} features, V_tg expects {V_tg.shape[1]}")
    if V_sr.shape[0] != V_tg.shape[0]:
        raise InvalidArgumentError("V_sr and V_tg must share the subspace dimension")
    if V_sr.shape[1] == V_tg.shape[1]:
        return y.copy()
    return V_sr.T @ (V_tg @ y)


def _split_pool(Y_pool, labels, C):
    return [Y_pool[:, labels == c] for c in range(C)]


def _union(labelled, pooled):
    return [np.hstack([a, b]) if b.shape[1] else a for a, b in zip(labelled, pooled)]


def fit_transfer_private(noisy_source_groups, target_labelled_groups, target_unlabelled, cfg, seed=0):
    """Run the pipeline from already-perturbed source classes onward."""
    noisy = [as_data_matrix(Y, f"source class {c}") for c, Y in enumerate(noisy_source_groups)]
    C = len(noisy)
    if len(target_labelled_groups) != C:
        raise InvalidArgumentError(
            f"{C} source classes but {len(target_labelled_groups)} labelled target classes"
        )
    target_lab = [as_data_matrix(Y, f"target class {c}") for c, Y in enumerate(target_labelled_groups)]
    p_sr = noisy[0].shape[0]
    p_tg = target_lab[0].shape[0]
    if target_unlabelled is None or np.asarray(target_unlabelled).size == 0:
        target_unl = np.empty((p_tg, 0))
    else:
        target_unl = np.asarray(target_unlabelled, dtype=np.float64)
        if target_unl.ndim != 2 or target_unl.shape[0] != p_tg or not np.all(np.isfinite(target_unl)):
            raise InvalidArgumentError("unlabelled target data must be a finite (p_tg, N) matrix")

    log.info("training source classifier on %d noisy classes", C)
    source_clf = fit_classifier(
        noisy, cfg.resolved_source_n(p_sr), cfg.source_r_max, cfg.source_L, seed
    )

    n_st = cfg.resolved_n_st(p_sr, p_tg)
    V_sr = principal_directions(np.hstack(noisy), n_st)
    V_tg = principal_directions(np.hstack(target_lab + [target_unl]), n_st)

    lab = [align(Y, V_sr, V_tg) for Y in target_lab]
    pool = align(target_unl, V_sr, V_tg)

    min_count = min(Y.shape[1] for Y in lab)
    n0 = max(1, min(20, min_count - 1, p_sr))
    log.info("initial target classifier with n=%d", n0)
    target_clf = fit_classifier(lab, n0, cfg.initial_r_max, cfg.initial_L, seed)

    pool_sizes = []
    pooled = [np.empty((p_sr, 0))] * C
    if pool.shape[1]:
        labels, _ = classify_batch(target_clf, pool)
        pooled = _split_pool(pool, labels, C)
        pool_sizes.append([int(np.sum(labels == c)) for c in range(C)])
    for k in range(cfg.it_max):
        if not pool.shape[1]:
            break
        n_k = min(cfg.n_schedule[k], p_sr)
        log.info("target iteration %d with n=%d", k + 1, n_k)
        target_clf = fit_classifier(_union(lab, pooled), n_k, cfg.r_max, cfg.L, seed)
        labels, _ = classify_batch(target_clf, pool)
        pooled = _split_pool(pool, labels, C)
        pool_sizes.append([int(np.sum(labels == c)) for c in range(C)])

    members = _union(lab, pooled)
    inputs = [wide_filter_batch(source_clf.class_models[c], Y)[0] for c, Y in enumerate(members)]
    X_d = np.hstack(inputs)
    Y_d = np.hstack(members)
    m_max = min(math.ceil(Y_d.shape[1] / 2), S2T_M_CAP)
    log.info("source2target mapping on %d pairs, M_max=%d", Y_d.shape[1], m_max)
    s2t = mm.fit(X_d, Y_d, m_max, seed)
    return TransferModel(source_clf, target_clf, s2t, V_sr, V_tg, pool_sizes)


def fit_transfer(source_groups, target_labelled_groups, target_unlabelled, cfg, seed=0, after_perturb=None):
    """Full pipeline from raw source classes.

    The raw source matrices are read only by the perturbation step.
    ``after_perturb``, when given, is called with the raw groups right
    after they were perturbed (used to audit that nothing reads them later).
    """
    if len(source_groups) < 2:
        raise InvalidArgumentError("need at least two source classes")
    noisy = perturb_groups(source_groups, cfg.dp, seed)
    if after_perturb is not None:
        after_perturb(source_groups)
    return fit_transfer_private(noisy, target_labelled_groups, target_unlabelled, cfg, seed)


def multitask_scores(model, Y_tg):
    """Per-class error triples for target columns; shape (C, 3, N).

    Columns of each triple: target autoencoder, source2target applied to
    the source reconstruction, source autoencoder.
    """
    Y_tg = np.asarray(Y_tg, dtype=np.float64)
    if Y_tg.ndim == 1:
        Y_tg = Y_tg.reshape(-1, 1)
    Y = align(Y_tg, model.V_sr, model.V_tg)
    C = model.target_classifier.C
    scores = np.empty((C, 3, Y.shape[1]))
    for c in range(C):
        _, _, err_tg, _ = wide_filter_batch(model.target_classifier.class_models[c], Y)
        rec_sr, _, err_sr, _ = wide_filter_batch(model.source_classifier.class_models[c], Y)
        mapped = mm.predict_batch(model.s2t, rec_sr)
        scores[c, 0] = err_tg
        scores[c, 1] = np.sum((Y - mapped) ** 2, axis=0)
        scores[c, 2] = err_sr
    return scores


def multitask_predict_batch(model, Y_tg):
    """Return ``(label indices (N,), scores (C, 3, N))``."""
    scores = multitask_scores(model, Y_tg)
    return np.argmin(scores.min(axis=1), axis=0), scores


def multitask_predict(model, y_tg):
    """Label of one target vector and its ``(C, 3)`` score matrix."""
    y = np.asarray(y_tg, dtype=np.float64).reshape(-1)
    idx, scores = multitask_predict_batch(model, y.reshape(-1, 1))
    return model.target_classifier.labels[int(idx[0])], scores[:, :, 0]


def target_predict_batch(model, Y_tg):
    """Labels from the target classifier alone (no source branches)."""
    Y = align(np.asarray(Y_tg, dtype=np.float64), model.V_sr, model.V_tg)
    return classify_batch(model.target_classifier, Y)[0]
