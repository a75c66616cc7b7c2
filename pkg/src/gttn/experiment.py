"""Build and run one experiment from a resolved config; write its artifacts."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .data import SyntheticSpec, generate_synthetic, load_dataset, split
from .model import build_model, save_checkpoint
from .regularizers import RegularizerSpec
from .tensor_core import AxisSubset
from .trainer import TrainedRun, train, write_alpha_csv, write_metrics_csv


def load_data(cfg: dict):
    """Full dataset (and planted ``W*`` or ``None``) named by ``cfg['data']``."""
    if "synthetic" in cfg["data"]:
        s = cfg["data"]["synthetic"]
        spec = SyntheticSpec(
            dims=tuple(s["dims"]), m=s["m"], n0=s["n0"], planted_subset=s["planted_subset"],
            planted_rank=s["planted_rank"], noise_std=s["noise_std"],
            label_kind=s["label_kind"], n_classes=s["n_classes"], seed=s["seed"],
        )
        return generate_synthetic(spec)
    return load_dataset(cfg["data"]["manifest"]), None


def load_splits(cfg: dict):
    dataset, truth = load_data(cfg)
    tc = cfg["train"]
    train_set, test_set = split(dataset, tc["train_proportion"], tc["seed"])
    return train_set, test_set, truth


def build(cfg: dict, train_set):
    m = cfg["model"]
    model = build_model(m["kind"], train_set.input_shape, train_set.n_tasks,
                        train_set.n_outputs, hidden=m["hidden"], seed=cfg["train"]["seed"],
                        init_scale=m["init_scale"])
    r = cfg["regularizer"]
    order = model.W.ndim
    if r["order"] is not None and int(r["order"]) != order:
        raise ValueError(f"regularizer order {r['order']} does not match model tensor order {order}")
    subsets = tuple(AxisSubset.parse(x, order) for x in (r["subsets"] or ()))
    spec = RegularizerSpec(r["family"], order, r["weight_mode"], subsets)
    return model, spec


def run_config(cfg: dict) -> tuple[TrainedRun, object, object]:
    """Train the configured experiment; returns ``(run, train_set, test_set)``."""
    train_set, test_set, _ = load_splits(cfg)
    model, spec = build(cfg, train_set)
    run = train(train_set, spec, cfgmod.train_config(cfg), model, test_set)
    return run, train_set, test_set


def write_artifacts(run: TrainedRun, cfg: dict, out: Path):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.json").write_text(cfgmod.dump(cfg))
    write_metrics_csv(run, out / "metrics.csv")
    write_alpha_csv(run, out / "alpha_trace.csv")
    save_checkpoint(run.model, out / "checkpoint")
    _, value, subset = run.min_form_trace[-1]
    info = {
        "regularizer": run.spec.to_dict(),
        "model": run.model.config(),
        "iterations": run.iterations,
        "final_epoch": run.alpha_trace[-1][0],
        "final_alpha": [float(a) for a in run.final_alpha()],
        "min_form_value": value,
        "min_form_subset": subset.label,
        "test_accuracy": run.test_accuracy() if any(r["split"] == "test" for r in run.metrics)
        else None,
    }
    (out / "run_info.json").write_text(json.dumps(info, indent=2) + "\n")


def final_rows(metrics, split_name):
    last = max(r["epoch"] for r in metrics)
    return [r for r in metrics if r["epoch"] == last and r["split"] == split_name]


def mean_accuracy(metrics, split_name="test") -> float:
    return float(np.mean([r["accuracy"] for r in final_rows(metrics, split_name)]))
