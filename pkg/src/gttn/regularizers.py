"""Overlapped tensor trace norms: GTTN, Tucker, TT and LAF.

Every family is a convex combination ``sum_s alpha_s * ||flatten(W, s)||_*``
over a list of canonical axis subsets. Only the family's subset list and the
way ``alpha`` is produced differ. GTTN uses all ``2**(p-1) - 1`` canonical
subsets with softmax-parameterized learnable weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidModeError, ShapeError
from .linalg import DEFAULT_SUBGRAD_TOL, trace_norm, trace_norm_subgradient
from .tensor_core import AxisSubset, as_tensor, canonical_subsets, flatten, unflatten

FAMILIES = ("GTTN", "Tucker", "TT", "LAF")
WEIGHT_MODES = ("fixed-uniform", "learnable-softmax")


def family_subsets(family: str, p: int) -> list[AxisSubset]:
    if p < 2:
        raise ShapeError(f"tensor trace norms need order >= 2, got {p}")
    if family == "GTTN":
        return canonical_subsets(p)
    if family == "Tucker":
        return [AxisSubset((i,), p).canonical() for i in range(1, p + 1)]
    if family == "TT":
        return [AxisSubset(tuple(range(1, i + 1)), p) for i in range(1, p)]
    if family == "LAF":
        return [AxisSubset((p,), p).canonical()]
    raise ValueError(f"unknown regularizer family {family!r}; expected one of {FAMILIES}")


@dataclass(frozen=True)
class RegularizerSpec:
    """Norm family, tensor order and weight parameterization.

    ``subsets`` is derived from ``family`` and ``order`` unless given. LAF is
    forced to a single fixed weight.
    """

    family: str
    order: int
    weight_mode: str = "learnable-softmax"
    subsets: tuple[AxisSubset, ...] = field(default=())

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown regularizer family {self.family!r}")
        if self.weight_mode not in WEIGHT_MODES:
            raise ValueError(f"unknown weight mode {self.weight_mode!r}")
        if not self.subsets:
            object.__setattr__(self, "subsets", tuple(family_subsets(self.family, self.order)))
        if any(s.order != self.order for s in self.subsets):
            raise ShapeError("subset order does not match regularizer order")
        if self.family == "LAF":
            object.__setattr__(self, "weight_mode", "fixed-uniform")

    @property
    def learnable(self) -> bool:
        return self.weight_mode == "learnable-softmax"

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "order": self.order,
            "subsets": [s.label for s in self.subsets],
            "weight_mode": self.weight_mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> RegularizerSpec:
        order = int(d["order"])
        subsets = tuple(AxisSubset.parse(x, order) for x in d.get("subsets", ()))
        return cls(d["family"], order, d.get("weight_mode", "learnable-softmax"), subsets)


def alpha_from_beta(beta) -> np.ndarray:
    """Softmax of the logits ``beta`` (max-subtracted)."""
    beta = np.asarray(beta, dtype=np.float64)
    if beta.ndim != 1 or beta.size == 0:
        raise ValueError("beta must be a nonempty 1-d sequence")
    z = np.exp(beta - beta.max())
    return z / z.sum()


@dataclass(frozen=True)
class WeightState:
    """Immutable snapshot of the logits ``beta`` and the weights ``alpha``."""

    beta: np.ndarray
    alpha: np.ndarray

    @classmethod
    def initial(cls, spec: RegularizerSpec) -> WeightState:
        beta = np.zeros(len(spec.subsets))
        return cls(beta, alpha_from_beta(beta))

    @classmethod
    def from_beta(cls, beta) -> WeightState:
        beta = np.array(beta, dtype=np.float64)
        return cls(beta, alpha_from_beta(beta))

    @classmethod
    def fixed(cls, alpha) -> WeightState:
        """Weights pinned to ``alpha``; ``beta`` is set to ``log(alpha)``."""
        alpha = np.array(alpha, dtype=np.float64)
        if np.any(alpha < 0) or abs(alpha.sum() - 1.0) > 1e-12:
            raise ValueError("alpha must lie on the probability simplex")
        with np.errstate(divide="ignore"):
            return cls(np.log(alpha), alpha)


def _check(W, spec):
    W = as_tensor(W)
    if W.ndim != spec.order:
        raise ShapeError(f"tensor has order {W.ndim}, regularizer expects {spec.order}")
    return W


def flattening_norms(W, spec: RegularizerSpec) -> np.ndarray:
    """Trace norm of each flattening in ``spec.subsets``."""
    W = _check(W, spec)
    return np.array([trace_norm(flatten(W, s)) for s in spec.subsets])


def reg_value(W, spec: RegularizerSpec, weights: WeightState) -> float:
    norms = flattening_norms(W, spec)
    return float(np.dot(weights.alpha, norms))


def reg_subgrad_w(W, spec: RegularizerSpec, weights: WeightState,
                  tol: float = DEFAULT_SUBGRAD_TOL) -> np.ndarray:
    """Subgradient of :func:`reg_value` with respect to the tensor."""
    W = _check(W, spec)
    g = np.zeros_like(W)
    for a, s in zip(weights.alpha, spec.subsets):
        if a == 0.0:
            continue
        g += a * unflatten(trace_norm_subgradient(flatten(W, s), tol), s, W.shape)
    return g


def beta_gradient(norms, alpha, lam) -> np.ndarray:
    # lam * alpha_s * (n_s - sum_t alpha_t n_t), the simplified softmax chain rule
    norms = np.asarray(norms, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    return lam * alpha * (norms - np.dot(alpha, norms))


def reg_grad_beta(W, spec: RegularizerSpec, weights: WeightState, lam: float) -> np.ndarray:
    """Gradient of ``lam * reg_value`` with respect to the logits ``beta``."""
    if not spec.learnable:
        raise InvalidModeError(f"{spec.family} regularizer has fixed weights; no beta gradient")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    return beta_gradient(flattening_norms(W, spec), weights.alpha, lam)


def min_form_value(W, spec: RegularizerSpec) -> tuple[float, AxisSubset]:
    """Smallest flattening trace norm and the subset achieving it.

    Ties go to the lexicographically first subset.
    """
    norms = flattening_norms(W, spec)
    best = min(range(len(norms)), key=lambda k: (norms[k], spec.subsets[k].indices))
    return float(norms[best]), spec.subsets[best]
