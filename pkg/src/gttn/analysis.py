"""Dual-norm upper bound, generalization bound and learned-weight reports."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from math import prod

import numpy as np

from .data import Dataset
from .linalg import spectral_norm
from .tensor_core import AxisSubset, as_tensor, canonical_subsets, flatten


def dual_norm_upper_bound(X, alpha, subsets=None) -> float:
    """``min_s spectral_norm(flatten(X, s)) / alpha_s`` over canonical subsets.

    Subsets with ``alpha_s == 0`` contribute ``+inf`` and are skipped. This
    overestimates the exact dual norm of the weighted overlapped trace norm,
    so ``<W, X> <= reg_value(W) * dual_norm_upper_bound(X)`` always holds.
    """
    X = as_tensor(X)
    subsets = list(subsets) if subsets is not None else canonical_subsets(X.ndim)
    alpha = np.asarray(alpha, dtype=np.float64)
    if len(alpha) != len(subsets):
        raise ValueError(f"{len(alpha)} weights for {len(subsets)} subsets")
    best = math.inf
    for a, s in zip(alpha, subsets):
        if a > 0:
            best = min(best, spectral_norm(flatten(X, s)) / a)
    return best


@dataclass
class BoundInputs:
    """Constants of the multi-task generalization bound.

    ``dims`` lists every axis of the parameter tensor; the last one is the
    number of tasks ``m``. ``alpha`` is indexed like ``canonical_subsets(p)``.
    """

    rho: float
    gamma: float
    kappa: float
    delta: float
    dims: tuple
    n0: int
    alpha: tuple
    C: float = 1.0

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.alpha = tuple(float(a) for a in self.alpha)
        if len(self.dims) < 2:
            raise ValueError("need at least one feature axis and the task axis")
        for name in ("rho", "gamma", "kappa", "C"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.n0 < 1 or any(d < 1 for d in self.dims):
            raise ValueError("n0 and dims must be positive")
        n_sub = 2 ** (len(self.dims) - 1) - 1
        if len(self.alpha) != n_sub:
            raise ValueError(f"alpha needs {n_sub} entries, got {len(self.alpha)}")
        if any(a < 0 for a in self.alpha) or abs(sum(self.alpha) - 1) > 1e-9:
            raise ValueError("alpha must lie on the simplex")

    @property
    def m(self) -> int:
        return self.dims[-1]


def subset_dim(dims, s: AxisSubset) -> int:
    """``d_s = prod_{i in s} d_i + prod_{j not in s} d_j``."""
    return prod(dims[i - 1] for i in s.indices) + prod(dims[j - 1] for j in s.complement.indices)


def complexity_terms(dims, n0, kappa, alpha) -> list[tuple[AxisSubset, int, float]]:
    """Per-subset terms ``kappa m sqrt(ln d_s) / (alpha_s n0 d) + ln d_s / (alpha_s n0)``.

    ``alpha`` is used as given (no simplex check); a zero weight gives ``inf``.
    """
    dims = tuple(dims)
    m, d = dims[-1], prod(dims[:-1])
    out = []
    for a, s in zip(alpha, canonical_subsets(len(dims))):
        ds = subset_dim(dims, s)
        if ds <= 1:
            raise ValueError(f"d_s = {ds} for subset {s}; log term undefined")
        if a <= 0:
            out.append((s, ds, math.inf))
            continue
        ln = math.log(ds)
        out.append((s, ds, kappa * m * math.sqrt(ln) / (a * n0 * d) + ln / (a * n0)))
    return out


def generalization_bound(b: BoundInputs, empirical_loss: float,
                         confidence: str = "theorem") -> float:
    """Upper bound on the expected multi-task loss, up to the constant ``C``.

    ``confidence="theorem"`` uses ``sqrt(2 ln(1/delta) / m)``;
    ``confidence="proof"`` uses ``sqrt(2 ln(1/delta) / (m n0))``, the term the
    derivation actually produces.
    """
    if confidence not in ("theorem", "proof"):
        raise ValueError("confidence must be 'theorem' or 'proof'")
    m, n0 = b.m, b.n0
    best = min(t for _, _, t in complexity_terms(b.dims, n0, b.kappa, b.alpha))
    middle = 2 * b.rho * b.gamma * b.C / (m * n0) * best
    denom = m if confidence == "theorem" else m * n0
    return empirical_loss + middle + math.sqrt(2.0 / denom * math.log(1.0 / b.delta))


def _all_subsets(q):
    for k in range(1, q + 1):
        yield from itertools.combinations(range(q), k)


def estimate_kappa(dataset: Dataset) -> float:
    """Smallest ``kappa`` with ``E[x_s x_s^T] <= (kappa / d) I`` on the data.

    The maximum runs over every nonempty subset ``s`` of the input axes
    (including all of them, where ``x_s`` is the vectorized input), with the
    expectation replaced by the pooled empirical mean over all tasks.
    """
    X = np.concatenate([np.asarray(x, dtype=np.float64) for x in dataset.inputs])
    n, shape = len(X), X.shape[1:]
    d = prod(shape)
    q = len(shape)
    best = 0.0
    for s in _all_subsets(q):
        rest = tuple(i for i in range(q) if i not in s)
        R = prod(shape[i] for i in s)
        P = np.transpose(X, (0,) + tuple(i + 1 for i in s) + tuple(i + 1 for i in rest))
        # sum_n A_n A_n^T = B B^T with B = [A_1, ..., A_n]
        B = P.reshape(n, R, -1).transpose(1, 0, 2).reshape(R, -1)
        best = max(best, spectral_norm(B) ** 2 / n)
    return d * best


# -- reports ------------------------------------------------------------------

@dataclass
class AlphaReport:
    """Learned weights, one row per subset; the first maximum is flagged."""

    subsets: list
    alpha: np.ndarray
    epoch: int | None = None

    @property
    def max_index(self) -> int:
        return int(np.argmax(self.alpha))

    @property
    def max_subset(self) -> AxisSubset:
        return self.subsets[self.max_index]

    def rows(self):
        k = self.max_index
        return [(s.label, float(a), i == k) for i, (s, a) in enumerate(zip(self.subsets, self.alpha))]

    def to_text(self) -> str:
        lines = [f"{'subset':<14}{'alpha':>10}"]
        for label, a, flag in self.rows():
            lines.append(f"{label:<14}{a:>10.4f}{'  *max' if flag else ''}")
        return "\n".join(lines)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["subset", "alpha", "is_max"])
            for label, a, flag in self.rows():
                w.writerow([label, repr(a), int(flag)])


def alpha_report(run) -> AlphaReport:
    """Final-epoch weights of a :class:`~gttn.trainer.TrainedRun`."""
    if not run.alpha_trace:
        raise ValueError("run has no recorded alpha")
    epoch, alpha = run.alpha_trace[-1]
    return AlphaReport(list(run.spec.subsets), np.asarray(alpha), epoch)


def bound_report(b: BoundInputs, empirical_loss: float, confidence: str = "theorem") -> dict:
    """Per-subset complexity terms, the minimizing subset and the bound value."""
    terms = complexity_terms(b.dims, b.n0, b.kappa, b.alpha)
    k = min(range(len(terms)), key=lambda i: terms[i][2])
    rows = [
        {"subset": s.label, "d_s": ds, "alpha": a, "term": t, "is_min": i == k}
        for i, ((s, ds, t), a) in enumerate(zip(terms, b.alpha))
    ]
    return {
        "rows": rows,
        "argmin": terms[k][0].label,
        "bound": generalization_bound(b, empirical_loss, confidence),
        "empirical_loss": empirical_loss,
        "C": b.C,
    }


def write_bound_csv(report: dict, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subset", "d_s", "alpha", "term", "is_min"])
        for r in report["rows"]:
            w.writerow([r["subset"], r["d_s"], repr(r["alpha"]), repr(r["term"]), int(r["is_min"])])
