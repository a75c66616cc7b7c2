"""Multi-task predictors whose stacked per-task heads form the tensor ``W``.

Three architectures share one interface:

* :class:`MultiTaskLinearModel` - ``f_i(x) = <W_i, x>`` with ``W_i`` the
  ``i``-th slice of ``W`` along its last (task) axis.
* :class:`MultiTaskMLP` - one shared fully-connected ReLU layer on vector
  inputs followed by per-task linear heads; ``W`` is 3-way
  ``(hidden, outputs, tasks)``.
* :class:`MultilinearNetwork` - three shared mode-wise ReLU layers on 3-way
  inputs followed by per-task linear heads; ``W`` is 5-way
  ``(h1, h2, h3, outputs, tasks)``.

Only the parameter block named by ``regularized`` (always ``"W"``) is
penalized by the trace-norm regularizer.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod
from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeError
from .tensor_core import inner_product

LOSS_KINDS = ("cross-entropy", "square", "logistic")


@dataclass
class Batch:
    task_id: int
    inputs: np.ndarray  # (n, *input_shape)
    labels: np.ndarray  # (n,)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if len(self.inputs) == 0:
            raise ShapeError("empty batch")
        if len(self.labels) != len(self.inputs):
            raise ShapeError(f"{len(self.inputs)} inputs but {len(self.labels)} labels")


# -- losses -----------------------------------------------------------------

def loss_and_grad(scores, labels, kind):
    """Per-example losses and their gradients with respect to ``scores``.

    Parameters
    ----------
    scores : ndarray, shape (n, k)
    labels : ndarray, shape (n,)
        Class indices for cross-entropy, +-1 for logistic, reals for square.
    kind : {"cross-entropy", "square", "logistic"}

    Returns
    -------
    losses : ndarray, shape (n,)
    dscores : ndarray, shape (n, k)
    """
    scores = np.asarray(scores, dtype=np.float64)
    if kind == "cross-entropy":
        n, k = scores.shape
        if k < 2:
            raise ShapeError("cross-entropy needs at least 2 scores")
        y = np.asarray(labels).astype(np.int64)
        if np.any(y < 0) or np.any(y >= k):
            raise ValueError(f"label out of range [0, {k})")
        shifted = scores - scores.max(axis=1, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=1))
        losses = lse - shifted[np.arange(n), y]
        probs = np.exp(shifted - lse[:, None])
        probs[np.arange(n), y] -= 1.0
        return losses, probs
    if kind == "logistic":
        y = np.asarray(labels, dtype=np.float64)
        if not np.all(np.abs(y) == 1):
            raise ValueError("logistic loss expects labels in {-1, +1}")
        margin = y * scores[:, 0]
        losses = np.logaddexp(0.0, -margin)
        d = -y * np.exp(-np.logaddexp(0.0, margin))  # -y * sigmoid(-margin)
        return losses, d[:, None]
    if kind == "square":
        y = np.asarray(labels, dtype=np.float64).reshape(len(scores), -1)
        r = scores - y
        return 0.5 * (r ** 2).sum(axis=1), r
    raise ValueError(f"unknown loss kind {kind!r}")


def loss(scores, label, kind) -> float:
    """Loss of a single example."""
    losses, _ = loss_and_grad(np.atleast_1d(scores)[None, :], np.array([label]), kind)
    return float(losses[0])


def predict_labels(scores, kind):
    if kind == "cross-entropy":
        return np.argmax(scores, axis=1)
    if kind == "logistic":
        return np.where(scores[:, 0] >= 0, 1, -1)
    return scores[:, 0]


def _uniform(rng, shape, fan_in, scale):
    bound = scale / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


# -- models -----------------------------------------------------------------

class MultiTaskModel:
    """Shared interface: ``params`` dict of arrays, batched scores, backward."""

    regularized = "W"
    kind = "base"

    def __init__(self, input_shape, n_tasks, n_outputs):
        if n_tasks < 1:
            raise ShapeError("need at least one task")
        self.input_shape = tuple(int(d) for d in input_shape)
        self.n_tasks = int(n_tasks)
        self.n_outputs = int(n_outputs)
        self.params: dict[str, np.ndarray] = {}

    @property
    def W(self) -> np.ndarray:
        return self.params[self.regularized]

    def _check(self, task_id, X):
        if not 0 <= task_id < self.n_tasks:
            raise ValueError(f"unknown task_id {task_id}; model has {self.n_tasks} tasks")
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1:] != self.input_shape:
            raise ShapeError(f"input shape {X.shape[1:]} does not match model {self.input_shape}")
        return X

    def scores(self, task_id, X) -> np.ndarray:
        raise NotImplementedError

    def forward(self, task_id, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return self.scores(task_id, x[None, ...])[0]

    def backward(self, batch: Batch, kind: str):
        """Mean batch loss and its gradient for every parameter block."""
        raise NotImplementedError

    def copy(self):
        other = object.__new__(type(self))
        other.__dict__.update(self.__dict__)
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    def config(self) -> dict:
        return {
            "kind": self.kind,
            "input_shape": list(self.input_shape),
            "n_tasks": self.n_tasks,
            "n_outputs": self.n_outputs,
        }


class MultiTaskLinearModel(MultiTaskModel):
    """Linear tensor model; ``W`` has shape ``(*input_shape, m)`` for scalar
    outputs or ``(*input_shape, k, m)`` for ``k > 1`` outputs."""

    kind = "linear"

    def __init__(self, input_shape, n_tasks, n_outputs=1, seed=0, init_scale=1.0):
        super().__init__(input_shape, n_tasks, n_outputs)
        shape = self.input_shape + ((n_outputs,) if n_outputs > 1 else ()) + (n_tasks,)
        rng = np.random.default_rng(seed)
        self.params["W"] = _uniform(rng, shape, prod(self.input_shape), init_scale)

    def _head(self, task_id):
        D = prod(self.input_shape)
        return self.W[..., task_id].reshape(D, self.n_outputs)

    def scores(self, task_id, X):
        X = self._check(task_id, X)
        return X.reshape(len(X), -1) @ self._head(task_id)

    def forward(self, task_id, x):
        if self.n_outputs == 1:
            self._check(task_id, np.asarray(x)[None, ...])
            return np.array([inner_product(self.W[..., task_id], x)])
        return super().forward(task_id, x)

    def backward(self, batch, kind):
        X = self._check(batch.task_id, batch.inputs)
        n = len(X)
        flat = X.reshape(n, -1)
        losses, dS = loss_and_grad(flat @ self._head(batch.task_id), batch.labels, kind)
        gW = np.zeros_like(self.W)
        gW[..., batch.task_id] = (flat.T @ dS / n).reshape(gW[..., batch.task_id].shape)
        return float(losses.mean()), {"W": gW}


class MultiTaskMLP(MultiTaskModel):
    """Shared ReLU layer ``h = relu(U x + c)`` then per-task heads
    ``W[:, :, i]^T h + b[:, i]``."""

    kind = "mlp"

    def __init__(self, input_shape, n_tasks, n_outputs, hidden=1024, seed=0, init_scale=1.0):
        super().__init__(input_shape, n_tasks, n_outputs)
        D = prod(self.input_shape)
        rng = np.random.default_rng(seed)
        self.hidden = int(hidden)
        self.params["U"] = _uniform(rng, (self.hidden, D), D, init_scale)
        self.params["c"] = np.zeros(self.hidden)
        self.params["W"] = _uniform(rng, (self.hidden, n_outputs, n_tasks), self.hidden, init_scale)
        self.params["b"] = np.zeros((n_outputs, n_tasks))

    def _hidden(self, X):
        pre = X.reshape(len(X), -1) @ self.params["U"].T + self.params["c"]
        return pre, np.maximum(pre, 0.0)

    def scores(self, task_id, X):
        X = self._check(task_id, X)
        _, h = self._hidden(X)
        return h @ self.W[:, :, task_id] + self.params["b"][:, task_id]

    def backward(self, batch, kind):
        X = self._check(batch.task_id, batch.inputs)
        t, n = batch.task_id, len(X)
        pre, h = self._hidden(X)
        S = h @ self.W[:, :, t] + self.params["b"][:, t]
        losses, dS = loss_and_grad(S, batch.labels, kind)
        dS /= n
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        grads["W"][:, :, t] = h.T @ dS
        grads["b"][:, t] = dS.sum(axis=0)
        dpre = (dS @ self.W[:, :, t].T) * (pre > 0)
        grads["U"] = dpre.T @ X.reshape(n, -1)
        grads["c"] = dpre.sum(axis=0)
        return float(losses.mean()), grads

    def config(self):
        return {**super().config(), "hidden": [self.hidden]}


class MultilinearNetwork(MultiTaskModel):
    """Mode-wise network for 3-way inputs ``(a, b, c)``.

    ``H1 = relu(X x_1 U1)``, ``H2 = relu(H1 x_2 U2)``, ``H3 = relu(H2 x_3 U3)``
    (mode products), then ``score_o = <W[..., o, i], H3> + b[o, i]`` for task
    ``i``.
    """

    kind = "multilinear"

    def __init__(self, input_shape, n_tasks, n_outputs, hidden=(6, 6, 256), seed=0,
                 init_scale=1.0):
        super().__init__(input_shape, n_tasks, n_outputs)
        if len(self.input_shape) != 3 or len(hidden) != 3:
            raise ShapeError("multilinear network needs 3-way inputs and 3 hidden sizes")
        self.hidden = tuple(int(h) for h in hidden)
        rng = np.random.default_rng(seed)
        for name, h, d in zip(("U1", "U2", "U3"), self.hidden, self.input_shape):
            self.params[name] = _uniform(rng, (h, d), d, init_scale)
        self.params["W"] = _uniform(rng, self.hidden + (n_outputs, n_tasks),
                                    prod(self.hidden), init_scale)
        self.params["b"] = np.zeros((n_outputs, n_tasks))

    def _layers(self, X):
        P = self.params
        A1 = np.einsum("ia,nabc->nibc", P["U1"], X)
        H1 = np.maximum(A1, 0.0)
        A2 = np.einsum("jb,nibc->nijc", P["U2"], H1)
        H2 = np.maximum(A2, 0.0)
        A3 = np.einsum("kc,nijc->nijk", P["U3"], H2)
        H3 = np.maximum(A3, 0.0)
        return A1, H1, A2, H2, A3, H3

    def scores(self, task_id, X):
        X = self._check(task_id, X)
        H3 = self._layers(X)[-1]
        return np.einsum("nijk,ijko->no", H3, self.W[..., task_id]) + self.params["b"][:, task_id]

    def backward(self, batch, kind):
        X = self._check(batch.task_id, batch.inputs)
        t, n = batch.task_id, len(X)
        P = self.params
        A1, H1, A2, H2, A3, H3 = self._layers(X)
        S = np.einsum("nijk,ijko->no", H3, self.W[..., t]) + P["b"][:, t]
        losses, dS = loss_and_grad(S, batch.labels, kind)
        dS /= n
        grads = {k: np.zeros_like(v) for k, v in P.items()}
        grads["W"][..., t] = np.einsum("nijk,no->ijko", H3, dS)
        grads["b"][:, t] = dS.sum(axis=0)
        dA3 = np.einsum("ijko,no->nijk", self.W[..., t], dS) * (A3 > 0)
        grads["U3"] = np.einsum("nijk,nijc->kc", dA3, H2)
        dA2 = np.einsum("kc,nijk->nijc", P["U3"], dA3) * (A2 > 0)
        grads["U2"] = np.einsum("nijc,nibc->jb", dA2, H1)
        dA1 = np.einsum("jb,nijc->nibc", P["U2"], dA2) * (A1 > 0)
        grads["U1"] = np.einsum("nibc,nabc->ia", dA1, X)
        return float(losses.mean()), grads

    def config(self):
        return {**super().config(), "hidden": list(self.hidden)}


MODEL_KINDS = {
    "linear": MultiTaskLinearModel,
    "mlp": MultiTaskMLP,
    "multilinear": MultilinearNetwork,
}


def build_model(kind, input_shape, n_tasks, n_outputs, hidden=None, seed=0, init_scale=1.0):
    if kind == "linear":
        return MultiTaskLinearModel(input_shape, n_tasks, n_outputs, seed=seed,
                                    init_scale=init_scale)
    if kind == "mlp":
        h = (hidden or [1024])[0]
        return MultiTaskMLP(input_shape, n_tasks, n_outputs, hidden=h, seed=seed,
                            init_scale=init_scale)
    if kind == "multilinear":
        return MultilinearNetwork(input_shape, n_tasks, n_outputs,
                                  hidden=tuple(hidden or (6, 6, 256)), seed=seed,
                                  init_scale=init_scale)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {sorted(MODEL_KINDS)}")


# -- checkpoints ------------------------------------------------------------

def save_checkpoint(model: MultiTaskModel, directory) -> Path:
    """Write every parameter block as a GTN1 file plus a ``manifest.txt``."""
    from .data import save_tensor

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = ["# gttn checkpoint", f"regularized {model.regularized}"]
    for name, value in model.params.items():
        fname = f"{name}.gtn"
        save_tensor(directory / fname, value)
        lines.append(f"block {name} {'x'.join(map(str, value.shape))} {fname}")
    (directory / "manifest.txt").write_text("\n".join(lines) + "\n")
    return directory / "manifest.txt"


def load_checkpoint_blocks(directory) -> tuple[dict[str, np.ndarray], str]:
    """Read back ``(blocks, regularized_name)`` written by :func:`save_checkpoint`."""
    from .data import load_tensor

    directory = Path(directory)
    manifest = directory / "manifest.txt"
    if not manifest.exists():
        raise FileNotFoundError(f"checkpoint manifest not found: {manifest}")
    blocks, regularized = {}, None
    for line in manifest.read_text().splitlines():
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "regularized":
            regularized = parts[1]
        elif parts[0] == "block" and len(parts) == 4:
            _, name, shape, fname = parts
            arr = load_tensor(directory / fname)
            if "x".join(map(str, arr.shape)) != shape:
                raise FormatError(f"block {name}: manifest shape {shape} != file {arr.shape}",
                                  field="shape")
            blocks[name] = arr
        else:
            raise FormatError(f"bad manifest line {line!r}", field="line")
    if regularized is None:
        raise FormatError("manifest lacks 'regularized' entry", field="regularized")
    return blocks, regularized
