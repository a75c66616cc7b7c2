"""Synthetic planted-low-rank multi-task data, splits, and file I/O.

GTN1 tensor file layout (little-endian, no padding)::

    b"GTN1" | u32 order p | p x u64 dims | prod(dims) x f64 values (row-major)
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass, field
from math import prod
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError
from .tensor_core import AxisSubset, as_tensor, flatten_shape, unflatten

MAGIC = b"GTN1"
LABEL_KINDS = ("binary", "multiclass", "regression")
_MAX_DIM = 2 ** 40


# -- GTN1 tensor files ------------------------------------------------------

def _atomic_write(path: Path, payload: bytes):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_tensor(t) -> bytes:
    t = as_tensor(t)
    head = MAGIC + struct.pack("<I", t.ndim) + struct.pack(f"<{t.ndim}Q", *t.shape)
    return head + t.astype("<f8").tobytes(order="C")


def decode_tensor(buf: bytes) -> np.ndarray:
    if len(buf) < 8:
        raise FormatError(f"truncated header: {len(buf)} bytes", field="header")
    if buf[:4] != MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}", field="magic")
    (p,) = struct.unpack_from("<I", buf, 4)
    if p < 1:
        raise FormatError("order must be >= 1", field="order")
    need_head = 8 + 8 * p
    if len(buf) < need_head:
        raise FormatError(
            f"truncated dims: expected {need_head} header bytes, got {len(buf)}", field="dims"
        )
    dims = struct.unpack_from(f"<{p}Q", buf, 8)
    if any(d < 1 or d > _MAX_DIM for d in dims):
        raise FormatError(f"dim overflow or zero dim in {dims}", field="dims")
    count = prod(dims)
    if count > _MAX_DIM:
        raise FormatError(f"element count {count} overflows", field="dims")
    expected = need_head + 8 * count
    if len(buf) != expected:
        raise FormatError(
            f"payload size mismatch: expected {expected} bytes, got {len(buf)}", field="payload"
        )
    data = np.frombuffer(buf, dtype="<f8", count=count, offset=need_head)
    return data.astype(np.float64).reshape(dims)


def save_tensor(path, t):
    _atomic_write(Path(path), encode_tensor(t))


def load_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())


# -- datasets ---------------------------------------------------------------

@dataclass
class Dataset:
    """Per-task inputs ``(n_i, *input_shape)`` and labels ``(n_i,)``."""

    inputs: list
    labels: list
    label_kind: str = "binary"
    n_classes: int = 2

    def __post_init__(self):
        if not self.inputs or len(self.inputs) != len(self.labels):
            raise ConfigError("dataset needs one (inputs, labels) pair per task")
        shapes = {np.shape(x)[1:] for x in self.inputs}
        if len(shapes) != 1:
            raise ConfigError(f"non-uniform input shapes across tasks: {shapes}")
        for i, (x, y) in enumerate(zip(self.inputs, self.labels)):
            if len(x) == 0:
                raise ConfigError(f"task {i} has no examples")
            if len(x) != len(y):
                raise ConfigError(f"task {i}: {len(x)} inputs vs {len(y)} labels")
        if self.label_kind not in LABEL_KINDS:
            raise ConfigError(f"unknown label kind {self.label_kind!r}")

    @property
    def n_tasks(self) -> int:
        return len(self.inputs)

    @property
    def input_shape(self) -> tuple:
        return tuple(np.shape(self.inputs[0])[1:])

    @property
    def sizes(self) -> list[int]:
        return [len(x) for x in self.inputs]

    @property
    def loss_kind(self) -> str:
        return {"binary": "logistic", "multiclass": "cross-entropy", "regression": "square"}[
            self.label_kind
        ]

    @property
    def n_outputs(self) -> int:
        return self.n_classes if self.label_kind == "multiclass" else 1


@dataclass
class SyntheticSpec:
    dims: tuple
    m: int
    n0: int
    planted_subset: tuple
    planted_rank: int = 1
    noise_std: float = 0.0
    label_kind: str = "binary"
    n_classes: int = 2
    seed: int = 0
    subset: AxisSubset = field(init=False, repr=False)

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        problems = []
        if not self.dims or any(d < 1 for d in self.dims):
            problems.append(f"dims must be positive, got {self.dims}")
        if self.m < 1:
            problems.append("m must be >= 1")
        if self.n0 < 1:
            problems.append("n0 must be >= 1")
        if self.label_kind not in ("binary", "multiclass"):
            problems.append(f"label_kind must be binary or multiclass, got {self.label_kind!r}")
        if self.label_kind == "multiclass" and self.n_classes < 2:
            problems.append("multiclass needs n_classes >= 2")
        if self.noise_std < 0:
            problems.append("noise_std must be >= 0")
        if problems:
            raise ConfigError("; ".join(problems), problems)
        planted = self.planted_subset
        if isinstance(planted, str):
            self.subset = AxisSubset.parse(planted, len(self.param_shape))
        elif isinstance(planted, AxisSubset):
            self.subset = planted
        else:
            self.subset = AxisSubset(tuple(planted), len(self.param_shape))
        rows, cols = flatten_shape(self.param_shape, self.subset)
        if not 1 <= self.planted_rank <= min(rows, cols):
            raise ConfigError(
                f"planted_rank {self.planted_rank} exceeds min({rows}, {cols}) "
                f"for subset {self.subset}"
            )

    @property
    def param_shape(self) -> tuple:
        head = (self.n_classes,) if self.label_kind == "multiclass" else ()
        return self.dims + head + (self.m,)


def _unit_ball(g):
    # row-wise rescale to unit Frobenius norm, nudged so <x,x> <= 1 survives rounding
    n = len(g)
    flat = g.reshape(n, -1)
    x = flat / np.linalg.norm(flat, axis=1, keepdims=True)
    sq = np.einsum("ij,ij->i", x, x)
    while np.any(sq > 1.0):
        x[sq > 1.0] *= 1.0 - 1e-15
        sq = np.einsum("ij,ij->i", x, x)
    return x.reshape(g.shape)


def planted_tensor(shape, subset: AxisSubset, rank: int, rng) -> np.ndarray:
    """``unflatten(A @ B, subset)`` with Gaussian factors, unit Frobenius norm."""
    rows, cols = flatten_shape(shape, subset)
    A = rng.standard_normal((rows, rank))
    B = rng.standard_normal((rank, cols))
    W = unflatten(A @ B, subset, shape)
    return W / np.linalg.norm(W)


def generate_synthetic(spec: SyntheticSpec) -> tuple[Dataset, np.ndarray]:
    """Draw a planted low-rank multi-task dataset.

    Returns the dataset and the ground-truth parameter tensor ``W*`` of shape
    ``spec.param_shape`` (last axis indexes tasks).
    """
    rng = np.random.default_rng(spec.seed)
    W_star = planted_tensor(spec.param_shape, spec.subset, spec.planted_rank, rng)
    inputs, labels = [], []
    d = prod(spec.dims)
    for i in range(spec.m):
        x = _unit_ball(rng.standard_normal((spec.n0,) + spec.dims))
        assert np.all(np.einsum("ij,ij->i", x.reshape(spec.n0, -1), x.reshape(spec.n0, -1)) <= 1.0)
        head = W_star[..., i].reshape(d, -1)
        scores = x.reshape(spec.n0, d) @ head
        if spec.noise_std > 0:
            scores = scores + spec.noise_std * rng.standard_normal(scores.shape)
        if spec.label_kind == "binary":
            y = np.where(scores[:, 0] >= 0, 1, -1)
        else:
            y = np.argmax(scores, axis=1)
        inputs.append(x)
        labels.append(y.astype(np.int64))
    ds = Dataset(inputs, labels, spec.label_kind,
                 spec.n_classes if spec.label_kind == "multiclass" else 2)
    return ds, W_star


def _stratified_take(labels, proportion, rng, stratify):
    n = len(labels)
    total = int(np.floor(proportion * n))
    keys = np.asarray(labels) if stratify else np.zeros(n, dtype=np.int64)
    classes = np.unique(keys)
    members = [rng.permutation(np.flatnonzero(keys == c)) for c in classes]
    exact = np.array([proportion * len(mb) for mb in members])
    quota = np.floor(exact).astype(int)
    short = total - quota.sum()
    if short > 0:
        order = np.argsort(-(exact - quota), kind="stable")
        quota[order[:short]] += 1
    train = np.concatenate([mb[:q] for mb, q in zip(members, quota)])
    test = np.concatenate([mb[q:] for mb, q in zip(members, quota)])
    return np.sort(train), np.sort(test)


def split(dataset: Dataset, proportion: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Per-task stratified train/test split with ``floor(proportion * n_i)`` train examples."""
    if not 0.0 < proportion < 1.0:
        raise ConfigError(f"proportion must lie in (0, 1), got {proportion}")
    rng = np.random.default_rng(seed)
    stratify = dataset.label_kind != "regression"
    tr_x, tr_y, te_x, te_y = [], [], [], []
    for i, (x, y) in enumerate(zip(dataset.inputs, dataset.labels)):
        tr, te = _stratified_take(y, proportion, rng, stratify)
        if len(tr) == 0 or len(te) == 0:
            raise ConfigError(
                f"degenerate split for task {i}: {len(tr)} train / {len(te)} test examples"
            )
        tr_x.append(x[tr]), tr_y.append(y[tr]), te_x.append(x[te]), te_y.append(y[te])
    meta = (dataset.label_kind, dataset.n_classes)
    return Dataset(tr_x, tr_y, *meta), Dataset(te_x, te_y, *meta)


# -- dataset manifests ------------------------------------------------------

def save_dataset(dataset: Dataset, directory) -> Path:
    """Write per-task GTN1 files and a text ``manifest.txt`` listing them."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = [
        "# gttn dataset manifest",
        f"label_kind {dataset.label_kind}",
        f"n_classes {dataset.n_classes}",
    ]
    for i, (x, y) in enumerate(zip(dataset.inputs, dataset.labels)):
        xf, yf = f"task{i}_inputs.gtn", f"task{i}_labels.gtn"
        save_tensor(directory / xf, x)
        save_tensor(directory / yf, np.asarray(y, dtype=np.float64))
        lines.append(f"task {i} {len(x)} {xf} {yf}")
    path = directory / "manifest.txt"
    _atomic_write(path, ("\n".join(lines) + "\n").encode())
    return path


def load_dataset(manifest) -> Dataset:
    manifest = Path(manifest)
    if manifest.is_dir():
        manifest = manifest / "manifest.txt"
    if not manifest.exists():
        raise FileNotFoundError(f"dataset manifest not found: {manifest}")
    label_kind, n_classes, tasks = "binary", 2, []
    for line in manifest.read_text().splitlines():
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "label_kind":
            label_kind = parts[1]
        elif parts[0] == "n_classes":
            n_classes = int(parts[1])
        elif parts[0] == "task" and len(parts) == 5:
            tasks.append((int(parts[1]), int(parts[2]), parts[3], parts[4]))
        else:
            raise FormatError(f"bad manifest line {line!r}", field="line")
    inputs, labels = [], []
    for i, n, xf, yf in sorted(tasks):
        x = load_tensor(manifest.parent / xf)
        y = load_tensor(manifest.parent / yf)
        if len(x) != n or len(y) != n:
            raise FormatError(f"task {i}: manifest says {n} examples, files hold "
                              f"{len(x)} inputs / {len(y)} labels", field="count")
        inputs.append(x)
        labels.append(y if label_kind == "regression" else y.astype(np.int64))
    return Dataset(inputs, labels, label_kind, n_classes)
