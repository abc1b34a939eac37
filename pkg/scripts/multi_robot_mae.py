"""MAE to the centralized map over rounds, echo against echoless.

    python3 scripts/multi_robot_mae.py --poses 30 --extra 100

Three robots on the default 3-node weight matrix, each with its own
trajectory through the same environment.
"""

import argparse
from pathlib import Path

from semtsdf import io
from semtsdf.config import DEFAULT_WEIGHTS, EnvConfig, MapConfig, SensorConfig
from semtsdf.mapping import environment_from_config, seeds_for
from semtsdf.network import NetworkGraph, run_multi_robot
from semtsdf.sensor_sim import sample_trajectory


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--poses", type=int, default=30)
    ap.add_argument("--extra", type=int, default=100, help="rounds after the trajectories end")
    ap.add_argument("--every", type=int, default=5, help="log MAE every k rounds")
    ap.add_argument("--out", default="results/mae")
    args = ap.parse_args()
    env = environment_from_config(EnvConfig(seed=args.seed))
    g = NetworkGraph.from_weights(DEFAULT_WEIGHTS)
    trajs = [sample_trajectory(env, s, args.poses, step=1.0) for s in seeds_for(args.seed + 1_000_003, g.n)]
    for proto in ("echoless", "echo"):
        res = run_multi_robot(env, trajs, g, MapConfig(), SensorConfig(), proto,
                              extra_rounds=args.extra, seed=args.seed, mae_every=args.every)
        io.write_csv(Path(args.out) / f"{proto}.csv", ["round", "robot", "mean_mae", "var_mae"], res.mae_log)
        print(proto)
        for t in sorted({r[0] for r in res.mae_log}):
            if t % (4 * args.every) and t != res.mae_log[-1][0]:
                continue
            worst = max(r[2] for r in res.mae_log if r[0] == t)
            print(f"  round {t:4d}  worst mean MAE {worst:.3e}")


if __name__ == "__main__":
    main()
