"""Command-line front end: ``gttn {flatten-info,train,report,sweep,gen-data}``."""

from __future__ import annotations

import argparse
import copy
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .analysis import AlphaReport, BoundInputs, bound_report, estimate_kappa, write_bound_csv
from .data import SyntheticSpec, generate_synthetic, save_dataset, save_tensor
from .errors import ConfigError, GTTNError, NumericalError
from .experiment import load_splits, mean_accuracy, run_config, write_artifacts
from .model import load_checkpoint_blocks
from .regularizers import FAMILIES
from .tensor_core import AxisSubset, canonical_subsets, flatten_shape

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2
SWEEP_FAMILIES = FAMILIES + ("unregularized",)


def _int_list(text):
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _float_list(text):
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _str_list(text):
    vals = [t.strip() for t in text.split(",") if t.strip()]
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


# -- flatten-info ---------------------------------------------------------------

def cmd_flatten_info(args) -> int:
    dims = args.dims
    if any(d < 1 for d in dims) or len(dims) < 2:
        print(f"error: need at least two positive dims, got {dims}", file=sys.stderr)
        return EXIT_CONFIG
    p = len(dims)
    subsets = canonical_subsets(p)
    print(f"order {p}, dims {'x'.join(map(str, dims))}: {len(subsets)} canonical flattenings")
    print(f"{'subset':<16}{'complement':<16}shape")
    for s in subsets:
        r, c = flatten_shape(dims, s)
        print(f"{s.label:<16}{s.complement.label:<16}{r}x{c}")
    return EXIT_OK


# -- train ----------------------------------------------------------------------

def _apply_overrides(cfg, args):
    if getattr(args, "seed", None) is not None:
        cfg = cfgmod.with_seed(cfg, args.seed)
    if getattr(args, "out", None) is not None:
        cfg = copy.deepcopy(cfg)
        cfg["output"]["directory"] = str(args.out)
    return cfg


def cmd_train(args) -> int:
    cfg = _apply_overrides(cfgmod.load_config(args.config), args)
    out = Path(cfg["output"]["directory"])
    run, _, _ = run_config(cfg)
    write_artifacts(run, cfg, out)
    acc = run.test_accuracy()
    print(f"wrote {out}  iterations={run.iterations}  test_accuracy={acc:.4f}")
    labels = [s.label for s in run.spec.subsets]
    k = int(np.argmax(run.final_alpha()))
    print(f"max alpha at {labels[k]} ({run.final_alpha()[k]:.4f})")
    return EXIT_OK


# -- report ---------------------------------------------------------------------

def _read_final_alpha(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path} has no rows")
    last = max(int(r["epoch"]) for r in rows)
    final = [r for r in rows if int(r["epoch"]) == last]
    return last, [r["subset"] for r in final], np.array([float(r["alpha"]) for r in final])


def _canonical_alpha(labels, alpha, p):
    # fold family weights onto the canonical subset list (zero where unused)
    index = {s.label: i for i, s in enumerate(canonical_subsets(p))}
    out = np.zeros(len(index))
    for label, a in zip(labels, alpha):
        out[index[AxisSubset.parse(label, p).canonical().label]] += a
    return out


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    needed = ["alpha_trace.csv", "metrics.csv", "resolved_config.json", "checkpoint/manifest.txt"]
    for name in needed:
        if not (run_dir / name).exists():
            raise FileNotFoundError(f"missing run artifact: {run_dir / name}")
    epoch, labels, alpha = _read_final_alpha(run_dir / "alpha_trace.csv")
    blocks, regularized = load_checkpoint_blocks(run_dir / "checkpoint")
    W = blocks[regularized]
    order = W.ndim
    report = AlphaReport([AxisSubset.parse(x, order) for x in labels], alpha, epoch)
    print(f"learned alpha at epoch {epoch} ({len(labels)} flattenings, sum {alpha.sum():.6f})")
    print(report.to_text())
    report.write_csv(run_dir / "alpha_report.csv")
    if not args.bound:
        return EXIT_OK

    cfg = json.loads((run_dir / "resolved_config.json").read_text())
    train_set, _, _ = load_splits(cfg)
    with open(run_dir / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    last = max(int(r["epoch"]) for r in rows)
    final_train = [r for r in rows if int(r["epoch"]) == last and r["split"] == "train"]
    emp = float(np.mean([float(r["loss"]) for r in final_train]))
    gamma = float(final_train[0]["reg_value"])
    kappa = args.kappa if args.kappa is not None else estimate_kappa(train_set)
    b = BoundInputs(rho=args.rho, gamma=max(gamma, 1e-300), kappa=kappa, delta=args.delta,
                    dims=W.shape, n0=min(train_set.sizes),
                    alpha=_canonical_alpha(labels, alpha, order), C=args.C)
    rep = bound_report(b, emp, args.confidence)
    write_bound_csv(rep, run_dir / "bound_report.csv")
    print()
    print(f"generalization bound (up to absolute constant C={b.C:g}; kappa={kappa:.6g}, "
          f"gamma={b.gamma:.6g}, n0={b.n0}, delta={b.delta:g}, confidence={args.confidence})")
    print(f"{'subset':<16}{'d_s':>8}{'alpha':>10}{'term':>14}")
    for r in rep["rows"]:
        flag = "  *min" if r["is_min"] else ""
        print(f"{r['subset']:<16}{r['d_s']:>8}{r['alpha']:>10.4f}{r['term']:>14.6g}{flag}")
    print(f"empirical loss {emp:.6g} -> bound {rep['bound']:.6g}")
    return EXIT_OK


# -- sweep ----------------------------------------------------------------------

def _sweep_cell_config(cfg, family, lam, proportion, seed):
    c = cfgmod.with_seed(cfg, seed)
    c["train"]["train_proportion"] = proportion
    if family == "unregularized":
        c["regularizer"].update(family="GTTN", weight_mode="fixed-uniform", subsets=None)
        c["train"]["lambda"] = 0.0
    else:
        c["regularizer"].update(
            family=family, subsets=None,
            weight_mode="learnable-softmax" if family == "GTTN" else "fixed-uniform")
        c["train"]["lambda"] = lam
    return c


def _run_cell(c):
    try:
        run, _, _ = run_config(c)
        return mean_accuracy(run.metrics, "test"), None
    except (NumericalError, GTTNError) as exc:
        return float("nan"), str(exc)


def sweep(cfg, families, lambdas, proportions, seeds, jobs=1):
    """Run every (family, lambda, proportion, seed) cell.

    Returns ``(cells, runs)``: per-cell mean/std rows and per-run rows.
    """
    if not (families and lambdas and proportions and seeds):
        raise ConfigError("empty sweep: every axis needs at least one value")
    bad = [f for f in families if f not in SWEEP_FAMILIES]
    if bad:
        raise ConfigError(f"unknown sweep families {bad}; choose from {list(SWEEP_FAMILIES)}")
    keys = []
    for family in families:
        for lam in ([0.0] if family == "unregularized" else lambdas):
            for prop in proportions:
                keys.append((family, lam, prop))
    jobs_list = [(k, s, _sweep_cell_config(cfg, *k, s)) for k in keys for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, [j[2] for j in jobs_list]))
    else:
        results = [_run_cell(j[2]) for j in jobs_list]
    runs = [
        {"family": k[0], "lambda": k[1], "proportion": k[2], "seed": s,
         "test_accuracy": acc, "error": err or ""}
        for (k, s, _), (acc, err) in zip(jobs_list, results)
    ]
    cells = []
    for k in keys:
        accs = [r["test_accuracy"] for r in runs if (r["family"], r["lambda"], r["proportion"]) == k]
        ok = all(np.isfinite(accs))
        cells.append({
            "family": k[0], "lambda": k[1], "proportion": k[2], "n_runs": len(accs),
            "mean_accuracy": float(np.mean(accs)) if ok else float("nan"),
            "std_accuracy": float(np.std(accs, ddof=1)) if ok and len(accs) > 1 else
            (0.0 if ok else float("nan")),
            "status": "complete" if ok else "incomplete",
        })
    return cells, runs


def write_sweep(cells, runs, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    cols = ["family", "lambda", "proportion", "n_runs", "mean_accuracy", "std_accuracy", "status"]
    with open(out / "sweep_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for c in cells:
            w.writerow([repr(c[k]) if isinstance(c[k], float) else c[k] for k in cols])
    rcols = ["family", "lambda", "proportion", "seed", "test_accuracy", "error"]
    with open(out / "sweep_runs.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(rcols)
        for r in runs:
            w.writerow([repr(r[k]) if isinstance(r[k], float) else r[k] for k in rcols])
    props = sorted({c["proportion"] for c in cells})
    with open(out / "sweep_table.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["family", "lambda"] + [f"p={p:g}" for p in props])
        seen = []
        for c in cells:
            if (c["family"], c["lambda"]) not in seen:
                seen.append((c["family"], c["lambda"]))
        for fam, lam in seen:
            row = [fam, repr(lam)]
            for p in props:
                cell = next((c for c in cells if (c["family"], c["lambda"], c["proportion"])
                             == (fam, lam, p)), None)
                row.append("" if cell is None else
                           f"{cell['mean_accuracy']:.4f}±{cell['std_accuracy']:.4f}")
            w.writerow(row)


def cmd_sweep(args) -> int:
    cfg = cfgmod.load_config(args.config)
    out = Path(args.out) if args.out else Path(cfg["output"]["directory"]) / "sweep"
    families = args.families or [cfg["regularizer"]["family"]]
    lambdas = args.lambdas or [cfg["train"]["lambda"]]
    proportions = args.proportions or [cfg["train"]["train_proportion"]]
    seeds = args.seeds or [cfg["train"]["seed"]]
    cells, runs = sweep(cfg, families, lambdas, proportions, seeds, jobs=args.jobs)
    write_sweep(cells, runs, out)
    (out / "resolved_config.json").write_text(cfgmod.dump(cfg))
    for c in cells:
        print(f"{c['family']:<14} lambda={c['lambda']:<6g} p={c['proportion']:<4g} "
              f"acc={c['mean_accuracy']:.4f}±{c['std_accuracy']:.4f} ({c['n_runs']} runs, "
              f"{c['status']})")
    incomplete = [c for c in cells if c["status"] != "complete"]
    if incomplete:
        print(f"{len(incomplete)} incomplete cell(s); see {out / 'sweep_runs.csv'}",
              file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


# -- gen-data -------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    spec = SyntheticSpec(tuple(args.dims), args.tasks, args.n0, args.planted, args.rank,
                         args.noise, args.label_kind, args.classes, args.seed)
    ds, truth = generate_synthetic(spec)
    out = Path(args.out)
    manifest = save_dataset(ds, out)
    save_tensor(out / "ground_truth.gtn", truth)
    print(f"wrote {manifest} ({ds.n_tasks} tasks x {args.n0} examples, "
          f"W* shape {'x'.join(map(str, truth.shape))}, planted {spec.subset})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gttn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("flatten-info", help="list canonical flattenings of a tensor shape")
    p.add_argument("--dims", type=_int_list, required=True, help="e.g. 2,3,4")
    p.set_defaults(func=cmd_flatten_info)

    p = sub.add_parser("train", help="train one configured experiment")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("report", help="learned-alpha table and optional bound for a run")
    p.add_argument("run_dir")
    p.add_argument("--bound", action="store_true", help="add the generalization bound")
    p.add_argument("--rho", type=float, default=1.0, help="Lipschitz constant of the loss")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--C", type=float, default=1.0, help="absolute constant (unknown; default 1)")
    p.add_argument("--kappa", type=float, help="override the data-estimated kappa")
    p.add_argument("--confidence", choices=("theorem", "proof"), default="theorem")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sweep", help="grid over families, lambdas, proportions and seeds")
    p.add_argument("config")
    p.add_argument("--families", type=_str_list)
    p.add_argument("--lambdas", type=_float_list)
    p.add_argument("--proportions", type=_float_list)
    p.add_argument("--seeds", type=_int_list)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen-data", help="write a synthetic planted-low-rank dataset")
    p.add_argument("--dims", type=_int_list, required=True, help="input dims, e.g. 4,4,4")
    p.add_argument("--tasks", type=int, required=True)
    p.add_argument("--n0", type=int, required=True)
    p.add_argument("--planted", required=True, help="planted subset label, e.g. {1,3}")
    p.add_argument("--rank", type=int, default=1)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--label-kind", choices=("binary", "multiclass"), default="binary")
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (FileNotFoundError, GTTNError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
