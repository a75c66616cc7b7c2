"""Generalized tensor trace norm regularization for multi-task learning."""

from .linalg import spectral_norm, svd, trace_norm, trace_norm_subgradient
from .regularizers import (
    RegularizerSpec,
    WeightState,
    alpha_from_beta,
    min_form_value,
    reg_grad_beta,
    reg_subgrad_w,
    reg_value,
)
from .tensor_core import AxisSubset, canonical_subsets, flatten, inner_product, permute, reshape, unflatten

__version__ = "0.1.0"
