"""Desk-scale experiment protocols shared by the CLI and the test-suite."""

import os
from dataclasses import dataclass, field

import numpy as np

from . import data_io
from .exceptions import InvalidArgumentError
from .privacy import DpParams
from .synthetic import make_blob_task
from .transfer import TransferConfig, fit_transfer, multitask_predict_batch

SYNTHETIC_SEEDS = tuple(range(10))


@dataclass
class RunResult:
    accuracy: float
    predictions: np.ndarray
    truth: np.ndarray
    epsilon: float
    seed: int
    details: dict = field(default_factory=dict)


def accuracy(pred, truth):
    return float(np.mean(np.asarray(pred) == np.asarray(truth)))


def confusion(pred, truth, C):
    """Counts ``out[true, predicted]``."""
    out = np.zeros((C, C), dtype=np.int64)
    np.add.at(out, (np.asarray(truth), np.asarray(pred)), 1)
    return out


def with_epsilon(cfg, epsilon):
    dp = DpParams(epsilon=epsilon, delta=cfg.dp.delta, d=cfg.dp.d)
    return TransferConfig(**{**cfg.__dict__, "dp": dp})


def synthetic_run(task_seed, epsilon, labelled_per_class=10, cfg=None):
    """One blob task, trained and scored on its held-out test samples."""
    cfg = with_epsilon(cfg or TransferConfig(), epsilon)
    task = make_blob_task(task_seed, labelled_per_class=labelled_per_class)
    model = fit_transfer(task.source_groups, task.target_labelled, task.target_unlabelled, cfg, task_seed)
    pred, _ = multitask_predict_batch(model, task.test_X)
    return RunResult(accuracy(pred, task.test_y), pred, task.test_y, epsilon, task_seed)


def synthetic_suite(epsilon, labelled_per_class=10, seeds=SYNTHETIC_SEEDS, cfg=None):
    """Accuracy averaged over independently drawn blob tasks."""
    runs = [synthetic_run(s, epsilon, labelled_per_class, cfg) for s in seeds]
    return float(np.mean([r.accuracy for r in runs])), runs


def domain_transfer(source, target, seed, epsilon, source_per_class=500, labelled_per_class=10,
                    held_out=1000, cfg=None):
    """Source subsample, target split into held-out test, labelled and unlabelled parts.

    ``held_out`` target samples are set aside for evaluation (spread evenly
    over the classes, as far as class sizes allow); ``labelled_per_class`` of
    the remainder keep their labels and the rest become the unlabelled pool.
    """
    cfg = with_epsilon(cfg or TransferConfig(), epsilon)
    src, _ = data_io.split(source, source_per_class, seed)
    counts = np.bincount(target.labels, minlength=target.class_count)
    per_class = _spread(held_out, counts - labelled_per_class)
    test, pool = data_io.split(target, per_class, seed)
    labelled, unlabelled = data_io.split(pool, labelled_per_class, seed + 1)
    model = fit_transfer(src.groups(), labelled.groups(), unlabelled.features, cfg, seed)
    pred, _ = multitask_predict_batch(model, test.features)
    details = {"n_source": src.N, "n_labelled": labelled.N, "n_unlabelled": unlabelled.N, "model": model}
    return RunResult(accuracy(pred, test.labels), pred, test.labels, epsilon, seed, details)


def _spread(total, capacity):
    """Split ``total`` as evenly as possible without exceeding per-class capacity."""
    capacity = np.maximum(np.asarray(capacity, dtype=np.int64), 0)
    if total > capacity.sum():
        raise InvalidArgumentError(f"cannot hold out {total} samples from {capacity.sum()} available")
    out = np.zeros_like(capacity)
    remaining = total
    while remaining:
        open_ = np.flatnonzero(out < capacity)
        share = max(1, remaining // open_.size)
        for c in open_:
            take = min(share, capacity[c] - out[c], remaining)
            out[c] += take
            remaining -= take
            if not remaining:
                break
    return out


def load_mnist(directory):
    """``(train, test)`` datasets from the four standard IDX files."""
    train = data_io.load_idx(_find(directory, "train-images-idx3-ubyte"), _find(directory, "train-labels-idx1-ubyte"))
    test = data_io.load_idx(_find(directory, "t10k-images-idx3-ubyte"), _find(directory, "t10k-labels-idx1-ubyte"))
    return train, test


def _find(directory, stem):
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx")):
        path = os.path.join(directory, name)
        if os.path.exists(path):
            return path
    raise InvalidArgumentError(f"{stem} not found in {directory}")

