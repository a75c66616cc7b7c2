"""Joint stochastic training of model parameters and flattening weights.

The objective is the sum over tasks of the mean task loss plus ``lam * sum_s alpha_s
||W_{s}||_*`` with ``alpha = softmax(beta)``. Each step draws one task's
mini-batch (round-robin over tasks), adds the regularizer subgradient on the
full ``W`` and updates ``beta`` with its exact gradient.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Dataset
from .errors import ConfigError, NumericalError
from .model import Batch, MultiTaskModel, loss_and_grad, predict_labels
from .regularizers import (
    RegularizerSpec,
    WeightState,
    beta_gradient,
    flattening_norms,
    min_form_value,
    reg_subgrad_w,
)

LAMBDA_PRESETS = {"low": 0.25, "high": 0.65}


@dataclass
class TrainConfig:
    lam: float
    batch_size: int = 16
    max_epochs: int = 50
    seed: int = 0
    optimizer: str = "adam"
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    lr_base: float = 0.02
    eval_every: int = 1
    train_proportion: float = 0.6

    def __post_init__(self):
        if isinstance(self.lam, str):
            if self.lam not in LAMBDA_PRESETS:
                raise ConfigError(f"unknown lambda preset {self.lam!r}; use {sorted(LAMBDA_PRESETS)}")
            self.lam = LAMBDA_PRESETS[self.lam]
        self.adam_betas = tuple(float(b) for b in self.adam_betas)
        problems = self.problems()
        if problems:
            raise ConfigError("; ".join(problems), problems)

    def problems(self) -> list[str]:
        out = []
        if not (isinstance(self.lam, (int, float)) and self.lam >= 0 and math.isfinite(self.lam)):
            out.append(f"lambda must be a finite number >= 0, got {self.lam!r}")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            out.append(f"batch_size must be a positive integer, got {self.batch_size!r}")
        if int(self.max_epochs) != self.max_epochs or self.max_epochs < 0:
            out.append(f"max_epochs must be a nonnegative integer, got {self.max_epochs!r}")
        if self.optimizer not in ("adam", "sgd"):
            out.append(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if len(self.adam_betas) != 2 or not all(0 <= b < 1 for b in self.adam_betas):
            out.append(f"adam_betas must be two numbers in [0, 1), got {self.adam_betas!r}")
        if not self.adam_eps > 0:
            out.append("adam_eps must be > 0")
        if not self.lr_base > 0:
            out.append("lr_base must be > 0")
        if int(self.eval_every) != self.eval_every or self.eval_every < 1:
            out.append("eval_every must be a positive integer")
        if not 0 < self.train_proportion < 1:
            out.append("train_proportion must lie in (0, 1)")
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        d["adam_betas"] = list(self.adam_betas)
        return d


def lr_schedule(iteration: int, lr_base: float = 0.02) -> float:
    """Step size ``lr_base / (1 + iteration)``."""
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    return lr_base / (1.0 + iteration)


class Optimizer:
    """Adam or plain SGD over a dict of parameter arrays, updated in place.

    ``t`` counts completed steps.
    """

    def __init__(self, kind="adam", betas=(0.9, 0.999), eps=1e-8):
        self.kind = kind
        self.betas = betas
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    @classmethod
    def from_config(cls, config: TrainConfig):
        return cls(config.optimizer, config.adam_betas, config.adam_eps)

    def update(self, params: dict, grads: dict, lr: float):
        if self.kind == "sgd":
            for k, g in grads.items():
                params[k] -= lr * g
        else:
            b1, b2 = self.betas
            k1 = 1.0 - b1 ** (self.t + 1)
            k2 = 1.0 - b2 ** (self.t + 1)
            for k, g in grads.items():
                m = self.m.setdefault(k, np.zeros_like(g))
                v = self.v.setdefault(k, np.zeros_like(g))
                m *= b1
                m += (1 - b1) * g
                v *= b2
                v += (1 - b2) * g * g
                params[k] -= lr * (m / k1) / (np.sqrt(v / k2) + self.eps)
        self.t += 1


def _check_finite(grads, iteration):
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            norm = float(np.linalg.norm(np.nan_to_num(g, nan=0.0, posinf=0.0, neginf=0.0)))
            raise NumericalError(
                f"non-finite gradient at iteration {iteration} in block {name!r} "
                f"(finite-part norm {norm:.3e})",
                iterations=iteration,
            )


def step(model: MultiTaskModel, weights: WeightState, batch: Batch, spec: RegularizerSpec,
         config: TrainConfig, state: Optimizer, loss_kind: str):
    """One optimizer update of ``model.params`` (in place) and ``beta``.

    The data term sums per-task mean losses over all tasks, so the one-task
    batch gradient is scaled by ``model.n_tasks`` to estimate it unbiasedly.
    Returns ``(batch_loss, new_weights)``; ``state.t`` is incremented.
    """
    loss, grads = model.backward(batch, loss_kind)
    grads = {k: model.n_tasks * g for k, g in grads.items()}
    W = model.W
    lam = config.lam
    if lam > 0:
        grads[model.regularized] = grads[model.regularized] + lam * reg_subgrad_w(W, spec, weights)
    params = dict(model.params)
    if spec.learnable:
        params["beta"] = weights.beta.copy()
        if lam > 0:
            grads["beta"] = beta_gradient(flattening_norms(W, spec), weights.alpha, lam)
        else:
            grads["beta"] = np.zeros_like(weights.beta)
    _check_finite(grads, state.t)
    state.update(params, grads, lr_schedule(state.t, config.lr_base))
    if spec.learnable:
        weights = WeightState.from_beta(params.pop("beta"))
    return loss, weights


def evaluate(model: MultiTaskModel, dataset: Dataset) -> list[dict]:
    """Per-task mean loss and accuracy (accuracy is NaN for regression)."""
    rows = []
    kind = dataset.loss_kind
    for t, (x, y) in enumerate(zip(dataset.inputs, dataset.labels)):
        s = model.scores(t, x)
        losses, _ = loss_and_grad(s, y, kind)
        if kind == "square":
            acc = float("nan")
        else:
            acc = float(np.mean(predict_labels(s, kind) == np.asarray(y)))
        rows.append({"task": t, "loss": float(losses.mean()), "accuracy": acc})
    return rows


@dataclass
class TrainedRun:
    model: MultiTaskModel
    spec: RegularizerSpec
    config: TrainConfig
    weights: WeightState
    alpha_trace: list = field(default_factory=list)  # (epoch, alpha array)
    metrics: list = field(default_factory=list)  # dict rows, see METRICS_HEADER
    min_form_trace: list = field(default_factory=list)  # (epoch, value, AxisSubset)
    iterations: int = 0

    def final_alpha(self) -> np.ndarray:
        return self.alpha_trace[-1][1]

    def test_accuracy(self) -> float:
        rows = [r for r in self.metrics if r["split"] == "test" and r["epoch"] == self.metrics[-1]["epoch"]]
        return float(np.mean([r["accuracy"] for r in rows]))


class _TaskSampler:
    # per-task shuffled queues, reshuffled on exhaustion
    def __init__(self, sizes, rng):
        self.rng = rng
        self.sizes = sizes
        self.queues = [rng.permutation(n) for n in sizes]
        self.pos = [0] * len(sizes)

    def take(self, task, k):
        n = self.sizes[task]
        k = min(k, n)
        out = []
        while len(out) < k:
            if self.pos[task] >= n:
                self.queues[task] = self.rng.permutation(n)
                self.pos[task] = 0
            need = k - len(out)
            chunk = self.queues[task][self.pos[task]: self.pos[task] + need]
            self.pos[task] += len(chunk)
            out.extend(chunk.tolist())
        return np.array(out)


def _record(run, epoch, model, weights, spec, splits):
    value, subset = min_form_value(model.W, spec)
    reg = float(np.dot(weights.alpha, flattening_norms(model.W, spec)))
    run.alpha_trace.append((epoch, weights.alpha.copy()))
    run.min_form_trace.append((epoch, value, subset))
    for name, ds in splits:
        for row in evaluate(model, ds):
            run.metrics.append({
                "epoch": epoch, "task": row["task"], "split": name,
                "loss": row["loss"], "accuracy": row["accuracy"],
                "reg_value": reg, "min_form_value": value,
            })


def train(train_set: Dataset, spec: RegularizerSpec, config: TrainConfig,
          model: MultiTaskModel, test_set: Dataset | None = None,
          weights: WeightState | None = None) -> TrainedRun:
    """Train ``model`` in place on ``train_set``.

    Metrics and ``alpha`` are recorded at epoch 0, every ``eval_every`` epochs
    and at the final epoch.
    """
    if any(n == 0 for n in train_set.sizes):
        raise ConfigError("every task needs at least one training example")
    if model.W.ndim != spec.order:
        raise ConfigError(f"regularizer order {spec.order} != regularized block order {model.W.ndim}")
    weights = weights or WeightState.initial(spec)
    rng = np.random.default_rng(config.seed)
    sampler = _TaskSampler(train_set.sizes, rng)
    state = Optimizer.from_config(config)
    steps_per_epoch = math.ceil(sum(train_set.sizes) / config.batch_size)
    splits = [("train", train_set)] + ([("test", test_set)] if test_set is not None else [])
    run = TrainedRun(model, spec, config, weights)
    _record(run, 0, model, weights, spec, splits)
    kind = train_set.loss_kind
    for epoch in range(1, config.max_epochs + 1):
        for _ in range(steps_per_epoch):
            task = state.t % train_set.n_tasks
            idx = sampler.take(task, config.batch_size)
            batch = Batch(task, train_set.inputs[task][idx], train_set.labels[task][idx])
            _, weights = step(model, weights, batch, spec, config, state, kind)
            alpha = weights.alpha
            if abs(alpha.sum() - 1.0) > 1e-10 or np.any(alpha < 0):
                raise NumericalError(f"alpha left the simplex at iteration {state.t}", state.t)
        if epoch % config.eval_every == 0 or epoch == config.max_epochs:
            _record(run, epoch, model, weights, spec, splits)
    run.weights = weights
    run.iterations = state.t
    return run


def fit_weights(W, spec: RegularizerSpec, lam: float = 1.0, n_iter: int = 2000,
                lr: float = 0.05, optimizer: str = "adam", weights: WeightState | None = None):
    """Optimize ``beta`` alone with ``W`` frozen, at a constant step size.

    Returns the final :class:`WeightState` and the regularizer value after
    every iteration.
    """
    weights = weights or WeightState.initial(spec)
    norms = flattening_norms(W, spec)
    state = Optimizer(optimizer)
    params = {"beta": weights.beta.copy()}
    trace = []
    for _ in range(n_iter):
        alpha = WeightState.from_beta(params["beta"]).alpha
        state.update(params, {"beta": beta_gradient(norms, alpha, lam)}, lr)
        trace.append(float(np.dot(WeightState.from_beta(params["beta"]).alpha, norms)))
    return WeightState.from_beta(params["beta"]), np.array(trace)


# -- CSV output ---------------------------------------------------------------

METRICS_HEADER = ["epoch", "task", "split", "loss", "accuracy", "reg_value", "min_form_value"]
ALPHA_HEADER = ["epoch", "subset", "alpha"]


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_metrics_csv(run: TrainedRun, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for row in run.metrics:
            w.writerow([_fmt(row[k]) for k in METRICS_HEADER])


def write_alpha_csv(run: TrainedRun, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ALPHA_HEADER)
        for epoch, alpha in run.alpha_trace:
            for s, a in zip(run.spec.subsets, alpha):
                w.writerow([epoch, s.label, _fmt(a)])
