"""Run the family x lambda x proportion sweep and time it.

    python3 scripts/benchmark_sweep.py configs/mlp_small.json --out runs/mlp_sweep
"""

import argparse
import time
from pathlib import Path

from gttn import config as cfgmod
from gttn.cli import sweep, write_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--out", default="runs/sweep")
    ap.add_argument("--families", default="GTTN,Tucker,TT,LAF,unregularized")
    ap.add_argument("--lambdas", default="0.25,0.65")
    ap.add_argument("--proportions", default="0.5,0.6,0.7")
    ap.add_argument("--seeds", default="0,1,2,3,4")
    args = ap.parse_args()

    cfg = cfgmod.load_config(args.config)
    start = time.perf_counter()
    cells, runs = sweep(cfg, args.families.split(","),
                        [float(x) for x in args.lambdas.split(",")],
                        [float(x) for x in args.proportions.split(",")],
                        [int(x) for x in args.seeds.split(",")])
    elapsed = time.perf_counter() - start
    write_sweep(cells, runs, Path(args.out))
    print(f"{len(runs)} runs in {elapsed:.1f} s ({elapsed / max(len(runs), 1):.2f} s/run)")
    print(Path(args.out, "sweep_table.csv").read_text())


if __name__ == "__main__":
    main()
