"""Dense tensor primitives: permute, reshape, flattening along axis subsets.

Tensors are plain C-ordered ``float64`` numpy arrays. Axis numbers in this
module are 1-based (axis 1 is the first axis), matching how flattenings are
labelled in reports, e.g. ``{1,3}``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import prod

import numpy as np

from .errors import (
    InvalidOrderError,
    InvalidPermutationError,
    InvalidSubsetError,
    ShapeError,
)


def as_tensor(t) -> np.ndarray:
    """Return ``t`` as a C-contiguous float64 array with at least one axis."""
    arr = np.ascontiguousarray(t, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    return arr


@dataclass(frozen=True, order=True)
class AxisSubset:
    """Nonempty proper subset of the axes ``{1, ..., order}``.

    ``indices`` is stored sorted. The canonical representative of the pair
    ``{s, complement(s)}`` is the one containing axis 1.
    """

    indices: tuple[int, ...]
    order: int

    def __post_init__(self):
        idx = tuple(sorted(int(i) for i in self.indices))
        object.__setattr__(self, "indices", idx)
        if self.order < 2:
            raise InvalidSubsetError(f"flattening needs order >= 2, got {self.order}")
        if not idx:
            raise InvalidSubsetError("axis subset must be nonempty")
        if len(set(idx)) != len(idx):
            raise InvalidSubsetError(f"repeated axis in {idx}")
        if idx[0] < 1 or idx[-1] > self.order:
            raise InvalidSubsetError(f"axes {idx} out of range 1..{self.order}")
        if len(idx) == self.order:
            raise InvalidSubsetError("axis subset must be a proper subset")

    @property
    def complement(self) -> AxisSubset:
        rest = tuple(i for i in range(1, self.order + 1) if i not in self.indices)
        return AxisSubset(rest, self.order)

    @property
    def is_canonical(self) -> bool:
        return self.indices[0] == 1

    def canonical(self) -> AxisSubset:
        return self if self.is_canonical else self.complement

    @property
    def axes(self) -> tuple[int, ...]:
        """0-based axis positions."""
        return tuple(i - 1 for i in self.indices)

    @property
    def label(self) -> str:
        return "{" + ",".join(str(i) for i in self.indices) + "}"

    @classmethod
    def parse(cls, text: str, order: int) -> AxisSubset:
        """Parse a label such as ``{1,3}``."""
        body = text.strip().strip("{}").strip()
        if not body:
            raise InvalidSubsetError(f"empty subset label {text!r}")
        try:
            indices = tuple(int(tok) for tok in body.split(","))
        except ValueError as exc:
            raise InvalidSubsetError(f"bad subset label {text!r}") from exc
        return cls(indices, order)

    def __str__(self):
        return self.label


def _check_order(order, p):
    order = tuple(int(o) for o in order)
    if sorted(order) != list(range(1, p + 1)):
        raise InvalidPermutationError(f"{order} is not a permutation of 1..{p}")
    return order


def permute(t, order) -> np.ndarray:
    """Permute axes so that result axis ``k`` is source axis ``order[k]``.

    ``order`` is a 1-based permutation of ``(1, ..., p)``.
    """
    t = as_tensor(t)
    order = _check_order(order, t.ndim)
    return np.ascontiguousarray(np.transpose(t, [o - 1 for o in order]))


def reshape(t, new_shape) -> np.ndarray:
    """Row-major reshape; the flat data is left untouched."""
    t = as_tensor(t)
    new_shape = tuple(int(d) for d in new_shape)
    if any(d < 1 for d in new_shape) or not new_shape:
        raise ShapeError(f"invalid shape {new_shape}")
    if prod(new_shape) != t.size:
        raise ShapeError(
            f"cannot reshape {t.shape} ({t.size} elements) to {new_shape} "
            f"({prod(new_shape)} elements)"
        )
    return t.reshape(new_shape)


def _subset_for(t_ndim, s) -> AxisSubset:
    if isinstance(s, AxisSubset):
        if s.order != t_ndim:
            raise InvalidSubsetError(f"subset {s} is for order {s.order}, tensor has order {t_ndim}")
        return s
    return AxisSubset(tuple(s), t_ndim)


def flatten(t, s) -> np.ndarray:
    """Matricize ``t``: axes in ``s`` index rows, the remaining axes columns.

    Both row and column axes are taken in increasing order, so the result is
    ``reshape(permute(t, s + not_s), (prod d_s, prod d_not_s))``.
    """
    t = as_tensor(t)
    s = _subset_for(t.ndim, s)
    rest = s.complement.indices
    rows = prod(t.shape[i - 1] for i in s.indices)
    return reshape(permute(t, s.indices + rest), (rows, t.size // rows))


def unflatten(m, s, shape) -> np.ndarray:
    """Inverse of :func:`flatten` for a tensor of the given ``shape``."""
    shape = tuple(int(d) for d in shape)
    s = _subset_for(len(shape), s)
    order = s.indices + s.complement.indices
    m = as_tensor(m)
    if m.size != prod(shape):
        raise ShapeError(f"matrix of size {m.size} does not fit tensor shape {shape}")
    permuted = m.reshape(tuple(shape[o - 1] for o in order))
    inverse = np.argsort(order) + 1
    return permute(permuted, inverse)


def flatten_shape(shape, s) -> tuple[int, int]:
    s = _subset_for(len(shape), s)
    rows = prod(shape[i - 1] for i in s.indices)
    return rows, prod(shape) // rows


def canonical_subsets(p: int) -> list[AxisSubset]:
    """All proper subsets of ``{1..p}`` containing axis 1, lexicographic.

    There are ``2**(p-1) - 1`` of them; together with their complements they
    cover every one of the ``2**p - 2`` flattenings.
    """
    if p < 2:
        raise InvalidOrderError(f"need order p >= 2, got {p}")
    out = []
    for k in range(0, p - 1):
        for rest in itertools.combinations(range(2, p + 1), k):
            out.append(AxisSubset((1,) + rest, p))
    out.sort(key=lambda s: s.indices)
    return out


def inner_product(a, b) -> float:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.dot(a.ravel(), b.ravel()))
