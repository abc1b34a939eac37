"""Sensitivity to the tree and GP hyperparameters, with wall-clock cost.

    python3 scripts/param_sweeps.py --param max_leaf --seeds 3

Every value is run on the same seeded maps; the mapping time per run is
recorded next to the quality metrics.
"""

import argparse
import dataclasses
import time
from pathlib import Path

import numpy as np

from semtsdf import io
from semtsdf.config import EnvConfig, MapConfig, SensorConfig
from semtsdf.evaluation import REPORT_FIELDS, evaluate_map
from semtsdf.mapping import run_single

GRIDS = {
    "max_leaf": [4, 16, 64, 256, 1024, 4096],
    "delta": [1.1, 1.25, 1.5, 2.0, 3.0],
    "sigma2": [0.01, 0.1, 0.5, 1.0, 2.0, 5.0],
    "voxel_size": [0.05, 0.1, 0.2, 0.3],
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--param", choices=sorted(GRIDS), action="append")
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--poses", type=int, default=100)
    ap.add_argument("--out", default="results/params")
    args = ap.parse_args()
    sensor = SensorConfig(num_poses=args.poses)
    for name in args.param or sorted(GRIDS):
        rows = []
        for v in GRIDS[name]:
            mcfg = dataclasses.replace(MapConfig(), **{name: v})
            for seed in range(args.seeds):
                t0 = time.perf_counter()
                env, _, smap = run_single(EnvConfig(seed=seed), sensor, mcfg, seed=seed)
                dt = time.perf_counter() - t0
                rows.append({"parameter": name, "value": v, "seed": seed, "seconds": dt,
                             **evaluate_map(smap, env).row()})
        io.write_csv(Path(args.out) / f"{name}.csv", ["parameter", "value", "seed", "seconds"] + REPORT_FIELDS, rows)
        print(name)
        for v in GRIDS[name]:
            sel = [r for r in rows if r["value"] == v]
            print(f"  {v:<6} miss {np.mean([r['misclassification_rate'] for r in sel]):.4f}"
                  f"  sdf {np.mean([r['sdf_error'] for r in sel]):.4f}"
                  f"  time {np.mean([r['seconds'] for r in sel]):.2f}s")


if __name__ == "__main__":
    main()
