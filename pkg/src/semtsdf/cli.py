"""Command-line front end.

    semtsdf gen-env    --seed 7 --out out/
    semtsdf map-single --config run.json
    semtsdf map-multi  --protocol echo --rounds 50
    semtsdf eval       --seed 3
    semtsdf sweep      --config sweep.json

Exit status: 0 on success, 2 for an invalid configuration, 1 for any other failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .config import ConfigError, RunConfig
from .evaluation import REPORT_FIELDS, evaluate_map, parameter_sweep
from .mapping import environment_from_config, map_single_robot, seeds_for
from .network import build_weight_matrix, NetworkGraph, run_multi_robot
from .sensor_sim import Environment, sample_trajectory


def load_config(path: str | None, mode: str | None = None) -> RunConfig:
    if path is None:
        return RunConfig(mode=mode or "map-single").validate()
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError("--config", f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON: {exc}") from exc
    cfg = RunConfig.from_dict(raw)
    if mode is not None and cfg.mode != mode:
        raise ConfigError("mode", f"config says {cfg.mode!r} but subcommand is {mode!r}")
    return cfg


def _say(phase: str, msg: str, t0: float) -> None:
    print(f"[{phase}] {msg} ({time.perf_counter() - t0:.2f}s)", flush=True)


def _environment(cfg: RunConfig) -> Environment:
    if cfg.environment_file:
        return Environment.from_dict(json.loads(Path(cfg.environment_file).read_text()))
    return environment_from_config(cfg.env)


def _graph(cfg: RunConfig) -> NetworkGraph:
    n = cfg.network
    if n.adjacency is not None:
        return build_weight_matrix(n.adjacency, n.nu)
    return NetworkGraph.from_weights(n.weights)


def _write_map_artifacts(out: Path, name: str, smap, env) -> None:
    io.write_json(out / f"{name}.json", smap.to_dict())
    contours = smap.extract_surface()
    io.write_csv(out / f"{name}_contours.csv", ["class", "line", "vertex", "x", "y"], io.contour_rows(contours))
    io.write_svg(out / f"{name}_contours.svg", env.bbox, env.polygons, contours)


def _metrics_row(label: str, report) -> dict:
    return {"map": label, **report.row()}


def cmd_gen_env(cfg: RunConfig, out: Path) -> None:
    t0 = time.perf_counter()
    env = _environment(cfg)
    io.write_json(out / "environment.json", env.to_dict())
    npoly = sum(len(p) for p in env.polygons.values())
    _say("gen-env", f"{npoly} polygons, {env.num_classes} classes -> {out / 'environment.json'}", t0)


def cmd_map_single(cfg: RunConfig, out: Path, with_dumps: bool = True) -> None:
    t0 = time.perf_counter()
    env = _environment(cfg)
    io.write_json(out / "environment.json", env.to_dict())
    traj_seed, noise_seed = seeds_for(cfg.env.seed, 2)
    s = cfg.sensor
    poses = sample_trajectory(env, traj_seed, s.num_poses, step=s.step, clearance=s.clearance)
    io.write_csv(out / "trajectory.csv", ["t", "x", "y", "theta"], [(t, *p) for t, p in enumerate(poses)])
    _say("setup", f"environment and {len(poses)} poses", t0)
    smap = map_single_robot(env, poses, cfg.map, s, np.random.default_rng(noise_seed))
    npts = sum(len(smap.trees[c].stats) for c in smap.classes)
    _say("map", f"{npts} pseudo points over classes {smap.classes}", t0)
    if with_dumps:
        _write_map_artifacts(out, "map", smap, env)
    report = evaluate_map(smap, env)
    io.write_csv(out / "metrics.csv", ["map"] + REPORT_FIELDS, [_metrics_row("single", report)])
    _say("eval", f"misclassification {report.misclassification_rate:.4f}, "
                 f"precision {report.precision:.4f}, recall {report.recall:.4f}, "
                 f"sdf error {report.sdf_error:.4f}", t0)


def cmd_map_multi(cfg: RunConfig, out: Path) -> None:
    t0 = time.perf_counter()
    env = _environment(cfg)
    graph = _graph(cfg)
    io.write_json(out / "environment.json", env.to_dict())
    s = cfg.sensor
    traj_seeds = seeds_for(cfg.env.seed + 1_000_003, graph.n)
    trajs = [sample_trajectory(env, ts, s.num_poses, step=cfg.network.trajectory_step, clearance=s.clearance)
             for ts in traj_seeds]
    io.write_csv(out / "trajectories.csv", ["robot", "t", "x", "y", "theta"],
                 [(i, t, *p) for i, tr in enumerate(trajs) for t, p in enumerate(tr)])
    _say("setup", f"{graph.n} robots, pi = {np.round(graph.pi, 6).tolist()}", t0)
    res = run_multi_robot(env, trajs, graph, cfg.map, s, cfg.network.protocol,
                          cfg.network.extra_rounds, seed=cfg.env.seed)
    _say("network", f"{cfg.network.protocol}: {len(res.message_log)} messages", t0)
    io.write_csv(out / "mae.csv", ["round", "robot", "mean_mae", "var_mae"], res.mae_log)
    io.write_jsonl(out / "messages.jsonl", res.message_log)
    rows = []
    for i, m in enumerate(res.robot_maps):
        _write_map_artifacts(out, f"robot_{i}", m, env)
        rows.append(_metrics_row(f"robot_{i}", evaluate_map(m, env)))
    _write_map_artifacts(out, "central", res.central_map, env)
    rows.append(_metrics_row("central", evaluate_map(res.central_map, env)))
    io.write_csv(out / "metrics.csv", ["map"] + REPORT_FIELDS, rows)
    final = [r for r in res.mae_log if r[0] == res.mae_log[-1][0]] if res.mae_log else []
    worst = max((r[2] for r in final), default=0.0)
    _say("eval", f"final mean MAE (worst robot) {worst:.3e}", t0)


def cmd_sweep(cfg: RunConfig, out: Path) -> None:
    t0 = time.perf_counter()
    sw = cfg.sweep
    rows = parameter_sweep(sw.parameter, sw.values, sw.seeds, cfg.env, cfg.sensor, cfg.map)
    io.write_csv(out / "sweep.csv", ["parameter", "value", "seed"] + REPORT_FIELDS, rows)
    _say("sweep", f"{len(rows)} rows -> {out / 'sweep.csv'}", t0)


def run_config(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.mode == "gen-env":
        cmd_gen_env(cfg, out)
    elif cfg.mode == "map-single":
        cmd_map_single(cfg, out)
    elif cfg.mode == "eval":
        cmd_map_single(cfg, out, with_dumps=False)
    elif cfg.mode == "map-multi":
        cmd_map_multi(cfg, out)
    elif cfg.mode == "sweep":
        cmd_sweep(cfg, out)
    return 0


def run(config_path: str) -> int:
    """Run the mode named in a JSON config file; returns the exit status."""
    return main(["--config", str(config_path)])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="semtsdf", description="Semantic TSDF mapping with sparse GPs.")
    p.add_argument("mode", nargs="?", choices=["gen-env", "map-single", "map-multi", "eval", "sweep"])
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--seed", type=int, help="override env.seed")
    p.add_argument("--out", help="override output_dir")
    p.add_argument("--protocol", choices=["echo", "echoless"])
    p.add_argument("--rounds", type=int, help="extra rounds after the trajectories end")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.mode is None and args.config is None:
            raise ConfigError("mode", "give a subcommand or a --config file")
        cfg = load_config(args.config, args.mode)
        if args.seed is not None:
            cfg.env.seed = args.seed
        if args.out is not None:
            cfg.output_dir = args.out
        if args.protocol is not None:
            cfg.network.protocol = args.protocol
        if args.rounds is not None:
            cfg.network.extra_rounds = args.rounds
        cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return run_config(cfg)
    except Exception as exc:  # noqa: BLE001 - report and signal failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
