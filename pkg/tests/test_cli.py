import csv
import json
from pathlib import Path

import numpy as np
import pytest

from gttn.analysis import BoundInputs, generalization_bound
from gttn.cli import _read_final_alpha, main, sweep
from gttn.config import load_config
from gttn.data import load_dataset, load_tensor
from gttn.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

TINY = {
    "data": {"synthetic": {"dims": [2, 3], "m": 2, "n0": 20, "planted_subset": "{1,3}", "seed": 0}},
    "regularizer": {"family": "GTTN"},
    "train": {"lambda": 0.25, "max_epochs": 2},
}


def write_config(tmp_path, cfg=TINY, name="c.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize("dims,rows,shapes", [
    ("2,3,4", 3, ["2x12", "6x4", "8x3"]),
    ("2,2,2,2", 7, None),
    ("7,7,512,12,4", 15, None),
])
def test_flatten_info(capsys, dims, rows, shapes):
    assert main(["flatten-info", "--dims", dims]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    body = out[2:]
    assert len(body) == rows and f"{rows} canonical flattenings" in out[0]
    if shapes:
        assert [line.split()[-1] for line in body] == shapes


def test_flatten_info_bad_dims(capsys):
    assert main(["flatten-info", "--dims", "3"]) != 0


def test_train_missing_lambda(tmp_path, capsys):
    cfg = json.loads(json.dumps(TINY))
    del cfg["train"]["lambda"]
    assert main(["train", str(write_config(tmp_path, cfg))]) == 2
    assert "'lambda'" in capsys.readouterr().err


def test_train_is_bit_reproducible(tmp_path):
    path = write_config(tmp_path)
    for k in range(2):
        assert main(["train", str(path), "--out", str(tmp_path / f"r{k}"), "--seed", "3"]) == 0
    for name in ("metrics.csv", "alpha_trace.csv"):
        assert (tmp_path / "r0" / name).read_bytes() == (tmp_path / "r1" / name).read_bytes()
    resolved = json.loads((tmp_path / "r0" / "resolved_config.json").read_text())
    other = json.loads((tmp_path / "r1" / "resolved_config.json").read_text())
    assert resolved["output"].pop("directory") != other["output"].pop("directory")
    assert resolved == other
    assert resolved["train"]["seed"] == 3 and resolved["train"]["batch_size"] == 16
    assert (tmp_path / "r0" / "checkpoint" / "manifest.txt").exists()
    rows = read_csv(tmp_path / "r0" / "metrics.csv")
    assert list(rows[0]) == ["epoch", "task", "split", "loss", "accuracy", "reg_value",
                             "min_form_value"]


def test_report_p3(tmp_path, capsys):
    cfg = json.loads(json.dumps(TINY))
    cfg["data"]["synthetic"].update(dims=[2, 3], planted_subset="{1}")
    path = write_config(tmp_path, cfg)
    main(["train", str(path), "--out", str(tmp_path / "r")])
    capsys.readouterr()
    assert main(["report", str(tmp_path / "r")]) == 0
    rows = read_csv(tmp_path / "r" / "alpha_report.csv")
    assert [r["subset"] for r in rows] == ["{1}", "{1,2}", "{1,3}"]
    assert sum(float(r["alpha"]) for r in rows) == pytest.approx(1.0, abs=1e-12)
    assert sum(int(r["is_max"]) for r in rows) == 1


def test_report_p5_multilinear(tmp_path, capsys):
    cfg = json.loads((CONFIGS / "multilinear_small.json").read_text())
    cfg["train"]["max_epochs"] = 1
    main(["train", str(write_config(tmp_path, cfg)), "--out", str(tmp_path / "r")])
    assert main(["report", str(tmp_path / "r")]) == 0
    assert len(read_csv(tmp_path / "r" / "alpha_report.csv")) == 15


def test_report_bound_matches_formula(tmp_path, capsys):
    path = write_config(tmp_path)
    main(["train", str(path), "--out", str(tmp_path / "r")])
    assert main(["report", str(tmp_path / "r"), "--bound", "--kappa", "2.0"]) == 0
    out = capsys.readouterr().out
    rows = read_csv(tmp_path / "r" / "bound_report.csv")
    assert len(rows) == 3 and sum(int(r["is_min"]) for r in rows) == 1
    metrics = read_csv(tmp_path / "r" / "metrics.csv")
    final = [r for r in metrics if r["epoch"] == "2" and r["split"] == "train"]
    emp = np.mean([float(r["loss"]) for r in final])
    b = BoundInputs(1.0, float(final[0]["reg_value"]), 2.0, 0.05, (2, 3, 2), 12,
                    [float(r["alpha"]) for r in rows])
    assert f"bound {generalization_bound(b, emp):.6g}" in out


def test_report_missing_artifacts(tmp_path, capsys):
    assert main(["report", str(tmp_path)]) == 1
    assert "alpha_trace.csv" in capsys.readouterr().err


def test_sweep_shape(tmp_path, capsys):
    path = write_config(tmp_path)
    out = tmp_path / "sw"
    code = main(["sweep", str(path), "--families", "GTTN,Tucker,TT,LAF,unregularized",
                 "--lambdas", "0.25", "--proportions", "0.5,0.6,0.7", "--seeds", "0,1,2,3,4",
                 "--out", str(out)])
    assert code == 0
    summary = read_csv(out / "sweep_summary.csv")
    assert len(summary) == 15 and all(r["n_runs"] == "5" for r in summary)
    runs = read_csv(out / "sweep_runs.csv")
    assert len(runs) == 75
    cell = [r for r in runs if r["family"] == "TT" and r["proportion"] == "0.6"]
    accs = [float(r["test_accuracy"]) for r in cell]
    row = next(r for r in summary if r["family"] == "TT" and r["proportion"] == "0.6")
    assert float(row["mean_accuracy"]) == pytest.approx(np.mean(accs), abs=1e-15)
    assert float(row["std_accuracy"]) == pytest.approx(np.std(accs, ddof=1), abs=1e-15)
    table = read_csv(out / "sweep_table.csv")
    assert len(table) == 5
    assert list(table[0]) == ["family", "lambda", "p=0.5", "p=0.6", "p=0.7"]
    assert [r["family"] for r in table] == ["GTTN", "Tucker", "TT", "LAF", "unregularized"]
    assert all("±" in r["p=0.5"] for r in table)
    assert (out / "resolved_config.json").exists()


def test_sweep_rejects_empty_and_unknown(tmp_path, capsys):
    path = write_config(tmp_path)
    assert main(["sweep", str(path), "--families", "CP", "--out", str(tmp_path / "x")]) == 2
    with pytest.raises(SystemExit):
        main(["sweep", str(path), "--seeds", ",", "--out", str(tmp_path / "x")])
    with pytest.raises(ConfigError, match="empty sweep"):
        sweep(load_config(path), ["GTTN"], [], [0.5], [0])


def test_gen_data_and_train_from_manifest(tmp_path, capsys):
    out = tmp_path / "data"
    assert main(["gen-data", "--dims", "3,2", "--tasks", "3", "--n0", "15", "--planted", "{1,3}",
                 "--noise", "0.05", "--seed", "2", "--out", str(out)]) == 0
    ds = load_dataset(out)
    assert ds.n_tasks == 3 and ds.sizes == [15, 15, 15]
    assert load_tensor(out / "ground_truth.gtn").shape == (3, 2, 3)
    cfg = {"data": {"manifest": str(out / "manifest.txt")}, "regularizer": {"family": "TT"},
           "train": {"lambda": 0.1, "max_epochs": 1}}
    assert main(["train", str(write_config(tmp_path, cfg)), "--out", str(tmp_path / "r")]) == 0


@pytest.mark.slow
def test_demo_config_recovers_planted_flattening(tmp_path):
    out = tmp_path / "demo"
    assert main(["train", str(CONFIGS / "planted_recovery_demo.json"), "--out", str(out),
                 "--seed", "0"]) == 0
    _, labels, alpha = _read_final_alpha(out / "alpha_trace.csv")
    assert labels[int(np.argmax(alpha))] == "{1,2,4}"
