"""JSON run configuration: schema validation and default resolution.

A config has five sections::

    {
      "data":        {"synthetic": {...}} or {"manifest": "path/to/manifest.txt"},
      "model":       {"kind": "linear", "hidden": null, "init_scale": 1.0},
      "regularizer": {"family": "GTTN", "weight_mode": "learnable-softmax"},
      "train":       {"lambda": 0.25, ...},
      "output":      {"directory": "runs/example", "formats": ["csv"]}
    }

Unknown keys are rejected and every problem is reported at once.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

from .errors import ConfigError
from .model import MODEL_KINDS
from .regularizers import FAMILIES, WEIGHT_MODES
from .trainer import LAMBDA_PRESETS, TrainConfig

SYNTHETIC_DEFAULTS = {
    "dims": None,
    "m": None,
    "n0": None,
    "planted_subset": None,
    "planted_rank": 1,
    "noise_std": 0.0,
    "label_kind": "binary",
    "n_classes": 2,
    "seed": 0,
}
MODEL_DEFAULTS = {"kind": "linear", "hidden": None, "init_scale": 1.0}
REGULARIZER_DEFAULTS = {"family": None, "weight_mode": None, "subsets": None, "order": None}
TRAIN_DEFAULTS = {k: v for k, v in TrainConfig(lam=0.0).to_dict().items()}
TRAIN_DEFAULTS["lambda"] = None
OUTPUT_DEFAULTS = {"directory": "runs/default", "formats": ["csv"]}
SECTIONS = ("data", "model", "regularizer", "train", "output")


def _merge(section, given, defaults, required, problems):
    if not isinstance(given, dict):
        problems.append(f"{section}: expected an object, got {type(given).__name__}")
        return dict(defaults)
    for key in given:
        if key not in defaults:
            problems.append(f"{section}: unknown key {key!r}")
    for key in required:
        if key not in given or given[key] is None:
            problems.append(f"{section}: missing required key {key!r}")
    out = copy.deepcopy(defaults)
    out.update({k: v for k, v in given.items() if k in defaults})
    return out


def resolve(raw: dict) -> dict:
    """Validate ``raw`` and return a copy with every default filled in."""
    problems = []
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for key in raw:
        if key not in SECTIONS:
            problems.append(f"unknown section {key!r}")
    for key in ("data", "regularizer", "train"):
        if key not in raw:
            problems.append(f"missing section {key!r}")

    data = raw.get("data", {})
    resolved_data = {}
    if isinstance(data, dict):
        extra = set(data) - {"synthetic", "manifest"}
        for key in sorted(extra):
            problems.append(f"data: unknown key {key!r}")
        if ("synthetic" in data) == ("manifest" in data):
            problems.append("data: give exactly one of 'synthetic' or 'manifest'")
        if "synthetic" in data:
            resolved_data["synthetic"] = _merge(
                "data.synthetic", data["synthetic"], SYNTHETIC_DEFAULTS,
                ("dims", "m", "n0", "planted_subset"), problems)
        if "manifest" in data:
            resolved_data["manifest"] = str(data["manifest"])
    else:
        problems.append("data: expected an object")

    model = _merge("model", raw.get("model", {}), MODEL_DEFAULTS, (), problems)
    if model["kind"] not in MODEL_KINDS:
        problems.append(f"model: kind must be one of {sorted(MODEL_KINDS)}, got {model['kind']!r}")

    reg = _merge("regularizer", raw.get("regularizer", {}), REGULARIZER_DEFAULTS,
                 ("family",), problems)
    if reg["family"] is not None and reg["family"] not in FAMILIES:
        problems.append(f"regularizer: family must be one of {list(FAMILIES)}, got {reg['family']!r}")
    if reg["weight_mode"] is None:
        reg["weight_mode"] = "learnable-softmax" if reg["family"] == "GTTN" else "fixed-uniform"
    if reg["weight_mode"] not in WEIGHT_MODES:
        problems.append(f"regularizer: weight_mode must be one of {list(WEIGHT_MODES)}")

    n_before = len(problems)
    train = _merge("train", raw.get("train", {}), TRAIN_DEFAULTS, ("lambda",), problems)
    lam = train.get("lambda")
    if isinstance(lam, str):
        if lam in LAMBDA_PRESETS:
            train["lambda"] = LAMBDA_PRESETS[lam]
        else:
            problems.append(f"train: unknown lambda preset {lam!r}; use {sorted(LAMBDA_PRESETS)}")
    if len(problems) == n_before:
        try:
            kwargs = dict(train)
            kwargs["lam"] = kwargs.pop("lambda")
            TrainConfig(**kwargs)
        except ConfigError as exc:
            problems.extend(f"train: {p}" for p in exc.problems)
        except TypeError as exc:
            problems.append(f"train: {exc}")

    output = _merge("output", raw.get("output", {}), OUTPUT_DEFAULTS, (), problems)

    if problems:
        raise ConfigError(f"{len(problems)} config problem(s): " + "; ".join(problems), problems)
    return {"data": resolved_data, "model": model, "regularizer": reg, "train": train,
            "output": output}


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return resolve(raw)


def with_seed(cfg: dict, seed: int) -> dict:
    """Copy of ``cfg`` with the training seed and synthetic-data seed set."""
    cfg = copy.deepcopy(cfg)
    cfg["train"]["seed"] = int(seed)
    if "synthetic" in cfg["data"]:
        cfg["data"]["synthetic"]["seed"] = int(seed)
    return cfg


def train_config(cfg: dict) -> TrainConfig:
    kwargs = dict(cfg["train"])
    kwargs["lam"] = kwargs.pop("lambda")
    return TrainConfig(**kwargs)


def dump(cfg: dict) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"
