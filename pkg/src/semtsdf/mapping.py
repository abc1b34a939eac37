"""Single-robot mapping pipeline: sense, build training batches, ingest."""

from __future__ import annotations

import numpy as np

from .config import EnvConfig, MapConfig, SensorConfig, fov_radians
from .semantic_map import SemanticMap
from .sensor_sim import (
    Environment,
    build_training_batch_2d,
    generate_environment,
    make_frame,
    observe,
    sample_trajectory,
)


def environment_from_config(cfg: EnvConfig) -> Environment:
    return generate_environment(cfg.seed, bbox=cfg.bbox, num_classes=cfg.num_classes,
                                num_polygons=cfg.num_polygons, radius_range=cfg.radius_range,
                                vertex_range=cfg.vertex_range, margin=cfg.margin,
                                separation=cfg.separation)


def empty_map(env: Environment, cfg: MapConfig) -> SemanticMap:
    return SemanticMap.for_bounds(
        env.lo, env.hi, cfg.voxel_size,
        kernel=cfg.kernel(), sigma2=cfg.sigma2, delta=cfg.delta, max_leaf=cfg.max_leaf,
        prior_mean=cfg.prior_mean, truncation=cfg.truncation_value,
        num_classes=env.num_classes, online=cfg.online,
    )


def sense_batches(env: Environment, pose, map_cfg: MapConfig, sensor_cfg: SensorConfig,
                  rng: np.random.Generator, frame: np.ndarray | None = None) -> dict:
    if frame is None:
        frame = make_frame(sensor_cfg.num_rays, fov_radians(sensor_cfg))
    obs = observe(env, pose, frame, sensor_cfg.noise_var, sensor_cfg.class_error, rng,
                  sensor_cfg.max_range)
    return build_training_batch_2d(obs, map_cfg.voxel_size, map_cfg.frame_size, map_cfg.max_gap,
                                   map_cfg.truncation_value)


def clip_to_map(smap: SemanticMap, batches: dict) -> dict:
    """Drop pseudo points outside the map region (noisy hits can land past the walls)."""
    lo = smap.center - smap.side / 2.0
    hi = smap.center + smap.side / 2.0
    out = {}
    for c, b in batches.items():
        X = b.coords()
        keep = np.all((X >= lo) & (X <= hi), axis=1)
        out[c] = b if keep.all() else b.subset(keep)
    return out


def seeds_for(seed: int, n: int) -> list[int]:
    """Independent child seeds derived from one run seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def map_single_robot(env: Environment, poses, map_cfg: MapConfig, sensor_cfg: SensorConfig,
                     rng: np.random.Generator) -> SemanticMap:
    smap = empty_map(env, map_cfg)
    frame = make_frame(sensor_cfg.num_rays, fov_radians(sensor_cfg))
    for pose in poses:
        smap.ingest(clip_to_map(smap, sense_batches(env, pose, map_cfg, sensor_cfg, rng, frame)))
    return smap


def run_single(env_cfg: EnvConfig, sensor_cfg: SensorConfig, map_cfg: MapConfig,
               seed: int | None = None):
    """Generate an environment and trajectory from seeds and map it. Returns (env, poses, map)."""
    seed = env_cfg.seed if seed is None else seed
    env = environment_from_config(EnvConfig(**{**env_cfg.__dict__, "seed": seed}))
    traj_seed, noise_seed = seeds_for(seed, 2)
    poses = sample_trajectory(env, traj_seed, sensor_cfg.num_poses, step=sensor_cfg.step,
                              clearance=sensor_cfg.clearance)
    smap = map_single_robot(env, poses, map_cfg, sensor_cfg, np.random.default_rng(noise_seed))
    return env, poses, smap
