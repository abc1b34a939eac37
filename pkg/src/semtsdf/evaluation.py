"""Map quality metrics and sweep driver."""

from __future__ import annotations

import dataclasses
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import EnvConfig, MapConfig, SensorConfig
from .semantic_map import SemanticMap
from .sensor_sim import Environment


class MetricError(ValueError):
    pass


@dataclass
class MetricReport:
    misclassification_rate: float = 0.0
    precision: float = 1.0
    recall: float = 1.0
    sdf_error: float = 0.0
    voxel_size: float = 0.1
    mean_mae: float = 0.0
    var_mae: float = 0.0
    num_boundary_points: int = 0
    num_sdf_points: int = 0

    @property
    def fdr(self) -> float:
        return 1.0 - self.precision

    @property
    def fnr(self) -> float:
        return 1.0 - self.recall

    @property
    def normalized_sdf_error(self) -> float:
        return self.sdf_error / self.voxel_size

    def row(self) -> dict:
        d = dataclasses.asdict(self)
        d.update(fdr=self.fdr, fnr=self.fnr, normalized_sdf_error=self.normalized_sdf_error)
        return d


REPORT_FIELDS = ["misclassification_rate", "precision", "recall", "fdr", "fnr", "sdf_error",
                 "normalized_sdf_error", "voxel_size", "mean_mae", "var_mae",
                 "num_boundary_points", "num_sdf_points"]


# -- test point selection -------------------------------------------------------

def boundary_points(env: Environment, spacing: float, rng: np.random.Generator | None = None):
    """Points along every polygon edge, one per ``spacing`` of arc length.

    Deterministic (evenly spaced from each vertex) unless ``rng`` is given, in
    which case the same number of points is drawn uniformly along each edge.
    Returns (points, true class ids).
    """
    pts, labels = [], []
    for c in env.class_ids():
        for a, b in env.edges(c):
            length = float(np.linalg.norm(b - a))
            k = max(1, int(math.ceil(length / spacing - 1e-9)))
            t = rng.uniform(0.0, 1.0, k) if rng is not None else np.arange(k) / k
            pts.append(a + t[:, None] * (b - a))
            labels.append(np.full(k, c))
    if not pts:
        return np.zeros((0, 2)), np.zeros(0, dtype=np.int64)
    return np.concatenate(pts), np.concatenate(labels)


def band_points(env: Environment, cls_id: int, spacing: float, width: float) -> np.ndarray:
    """Grid points (resolution ``spacing``) within ``width`` of a class boundary."""
    lo, hi = env.lo, env.hi
    xs = np.arange(lo[0], hi[0] + 1e-9, spacing)
    ys = np.arange(lo[1], hi[1] + 1e-9, spacing)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    G = np.column_stack([gx.ravel(), gy.ravel()])
    d = env.signed_distance(cls_id, G)
    return G[np.abs(d) <= width]


# -- metrics ----------------------------------------------------------------------

def sdf_error(smap: SemanticMap, env: Environment, spacing: float | None = None,
              width: float | None = None) -> tuple[float, int]:
    """Mean |mu_l - true signed distance| over band points of every class."""
    spacing = 0.5 * smap.voxel_size if spacing is None else spacing
    width = smap.truncation if width is None else width
    errs = []
    for c in env.class_ids():
        X = band_points(env, c, spacing, width)
        if len(X) == 0:
            continue
        mu, _ = smap.predict_many(c, X)
        errs.append(np.abs(mu - env.signed_distance(c, X)))
    if not errs:
        raise MetricError("no SDF test points")
    e = np.concatenate(errs)
    return float(e.mean()), len(e)


def confusion_metrics(true_cls, pred_cls, classes) -> tuple[float, float, float]:
    """(misclassification rate, macro precision, macro recall)."""
    true_cls = np.asarray(true_cls)
    pred_cls = np.asarray(pred_cls)
    if len(true_cls) == 0:
        raise MetricError("no classification test points")
    miss = float(np.mean(true_cls != pred_cls))
    precs, recs = [], []
    for c in classes:
        tp = np.sum((pred_cls == c) & (true_cls == c))
        fp = np.sum((pred_cls == c) & (true_cls != c))
        fn = np.sum((pred_cls != c) & (true_cls == c))
        # a class never predicted and never present does not count against either score
        precs.append(tp / (tp + fp) if tp + fp else 1.0)
        recs.append(tp / (tp + fn) if tp + fn else 1.0)
    return miss, float(np.mean(precs)), float(np.mean(recs))


def predict_classes(smap: SemanticMap, X) -> np.ndarray:
    ids, P = smap.class_posterior_many(X)
    return np.asarray(ids)[np.argmax(P, axis=0)]


def classification_metrics(smap: SemanticMap, env: Environment, points=None, labels=None,
                           rng: np.random.Generator | None = None):
    if points is None:
        points, labels = boundary_points(env, 0.5 * smap.voxel_size, rng)
    if len(points) == 0:
        raise MetricError("no classification test points")
    pred = predict_classes(smap, points)
    miss, prec, rec = confusion_metrics(labels, pred, env.class_ids())
    return miss, prec, rec, len(points)


def mae_vs_centralized(robot: SemanticMap, central: SemanticMap) -> tuple[float, float]:
    """Class-averaged mean |robot - central| of GP mean and variance at central pseudo points."""
    if not central.classes:
        raise MetricError("centralized map is empty")
    mean_terms, var_terms = [], []
    for c in central.classes:
        P = central.trees[c].stats.coords()
        mu_c, var_c = central.predict_many(c, P)
        mu_r, var_r = robot.predict_many(c, P)
        mean_terms.append(np.mean(np.abs(mu_r - mu_c)))
        var_terms.append(np.mean(np.abs(var_r - var_c)))
    return float(np.mean(mean_terms)), float(np.mean(var_terms))


def evaluate_map(smap: SemanticMap, env: Environment, rng=None) -> MetricReport:
    miss, prec, rec, nb = classification_metrics(smap, env, rng=rng)
    err, ns = sdf_error(smap, env)
    return MetricReport(miss, prec, rec, err, smap.voxel_size, num_boundary_points=nb, num_sdf_points=ns)


# -- sweeps -----------------------------------------------------------------------

def worker_count() -> int:
    cap = os.environ.get("SEMTSDF_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return n


def _sweep_cell(args):
    from .mapping import run_single

    parameter, value, seed, env_cfg, sensor_cfg, map_cfg = args
    if hasattr(map_cfg, parameter):
        map_cfg = dataclasses.replace(map_cfg, **{parameter: value})
    else:
        sensor_cfg = dataclasses.replace(sensor_cfg, **{parameter: value})
    env, _, smap = run_single(env_cfg, sensor_cfg, map_cfg, seed=seed)
    return {"parameter": parameter, "value": value, "seed": seed, **evaluate_map(smap, env).row()}


def parameter_sweep(parameter: str, values, seeds, env_cfg: EnvConfig | None = None,
                    sensor_cfg: SensorConfig | None = None, map_cfg: MapConfig | None = None,
                    workers: int | None = None) -> list[dict]:
    """One MetricReport row per (value, seed), in grid order."""
    if len(values) == 0 or len(seeds) == 0:
        raise MetricError("empty sweep grid")
    env_cfg = env_cfg or EnvConfig()
    sensor_cfg = sensor_cfg or SensorConfig()
    map_cfg = map_cfg or MapConfig()
    if not hasattr(map_cfg, parameter) and not hasattr(sensor_cfg, parameter):
        raise MetricError(f"unknown sweep parameter {parameter!r}")
    jobs = [(parameter, v, s, env_cfg, sensor_cfg, map_cfg) for v in values for s in seeds]
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(jobs) == 1:
        return [_sweep_cell(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(_sweep_cell, jobs))
