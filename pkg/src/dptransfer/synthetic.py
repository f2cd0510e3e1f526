"""Synthetic Gaussian-blob transfer tasks."""

from dataclasses import dataclass

import numpy as np
from scipy.stats import special_ortho_group


@dataclass
class BlobTask:
    source_groups: list
    target_labelled: list
    target_unlabelled: np.ndarray
    unlabelled_truth: np.ndarray
    test_X: np.ndarray
    test_y: np.ndarray


def blob_centres(C, p, separation, rng):
    """``C`` centres on random directions, each pair ``separation`` apart when C=2."""
    direction = rng.standard_normal((p, C))
    direction /= np.linalg.norm(direction, axis=0)
    if C == 2:
        direction[:, 1] = -direction[:, 0]
    return 0.5 * separation * direction


def sample_blobs(centres, counts, sd, rng):
    return [centres[:, [c]] + sd * rng.standard_normal((centres.shape[0], n)) for c, n in enumerate(counts)]


def make_blob_task(
    seed=0,
    p=10,
    C=2,
    source_per_class=200,
    labelled_per_class=10,
    unlabelled_per_class=200,
    test_per_class=200,
    separation=5.0,
    sd=0.1,
):
    """Source blobs and a rotated copy serving as the target domain.

    The target domain applies a fixed random rotation to samples drawn from
    the source distribution.
    """
    rng = np.random.default_rng(seed)
    centres = blob_centres(C, p, separation, rng)
    rotation = special_ortho_group.rvs(p, random_state=rng)
    source = sample_blobs(centres, [source_per_class] * C, sd, rng)
    target_centres = rotation @ centres
    labelled = sample_blobs(target_centres, [labelled_per_class] * C, sd, rng)
    unl = sample_blobs(target_centres, [unlabelled_per_class] * C, sd, rng)
    test = sample_blobs(target_centres, [test_per_class] * C, sd, rng)
    unl_truth = np.repeat(np.arange(C), unlabelled_per_class)
    test_y = np.repeat(np.arange(C), test_per_class)
    return BlobTask(source, labelled, np.hstack(unl), unl_truth, np.hstack(test), test_y)
