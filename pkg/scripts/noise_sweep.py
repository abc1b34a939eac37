"""Map quality against sensor distance noise and class-flip probability.

    python3 scripts/noise_sweep.py --seeds 10 --out results/noise

Writes one CSV per swept knob plus a per-value summary on stdout.
"""

import argparse
import time
from pathlib import Path

import numpy as np

from semtsdf import io
from semtsdf.config import EnvConfig, MapConfig, SensorConfig
from semtsdf.evaluation import REPORT_FIELDS, parameter_sweep

GRIDS = {
    "noise_var": [0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
    "class_error": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
}


def summarize(rows, key):
    out = []
    for v in dict.fromkeys(r["value"] for r in rows):
        sel = [r for r in rows if r["value"] == v]
        out.append((v, *(float(np.mean([r[k] for r in sel])) for k in key)))
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--poses", type=int, default=100)
    ap.add_argument("--only", choices=sorted(GRIDS))
    ap.add_argument("--out", default="results/noise")
    args = ap.parse_args()
    out = Path(args.out)
    cols = ["misclassification_rate", "precision", "recall", "sdf_error"]
    for name, values in GRIDS.items():
        if args.only and name != args.only:
            continue
        t0 = time.perf_counter()
        rows = parameter_sweep(name, values, list(range(args.seeds)), EnvConfig(),
                               SensorConfig(num_poses=args.poses), MapConfig())
        io.write_csv(out / f"{name}.csv", ["parameter", "value", "seed"] + REPORT_FIELDS, rows)
        print(f"{name} ({time.perf_counter() - t0:.0f}s)")
        print("  value  " + "  ".join(f"{c[:14]:>14}" for c in cols))
        for v, *m in summarize(rows, cols):
            print(f"  {v:<5}  " + "  ".join(f"{x:14.4f}" for x in m))


if __name__ == "__main__":
    main()
