"""Differentially private transfer learning with membership-mapping autoencoders.

Data matrices follow the ``(p, N)`` convention throughout: every column is
one sample.
"""

from .classifier import ClassifierModel, classify, classify_batch, fit_classifier, fit_private_classifier
from .deep_autoencoder import CdmmaModel, WideCdmmaModel, cdmma_filter, fit_cdmma, fit_wide, wide_filter
from .exceptions import (
    DegenerateDataError,
    FormatError,
    InvalidArgumentError,
    NumericalFailureError,
    VersionError,
)
from .membership_mapping import MembershipMappingModel, fit, predict, predict_batch
from .numkit import KernelParams
from .privacy import DpParams, inverse_cdf, perturb, sample_noise
from .transfer import TransferConfig, TransferModel, fit_transfer, multitask_predict, multitask_predict_batch

__version__ = "0.1.0"
