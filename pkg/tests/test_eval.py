import math

import numpy as np
import pytest

from semtsdf.config import EnvConfig, MapConfig, SensorConfig
from semtsdf.evaluation import (
    MetricError,
    MetricReport,
    boundary_points,
    band_points,
    classification_metrics,
    confusion_metrics,
    mae_vs_centralized,
    parameter_sweep,
    sdf_error,
)
from semtsdf.kernel import KernelSpec
from semtsdf.semantic_map import SemanticMap
from semtsdf.sensor_sim import Environment, generate_environment
from semtsdf.sparse_gp import ObservationBatch

VS = 0.1


class OracleMap:
    """Stand-in map that answers with the ground truth."""

    def __init__(self, env, truncation=0.3):
        self.env = env
        self.voxel_size = VS
        self.truncation = truncation

    def predict_many(self, c, X):
        return self.env.signed_distance(c, X), np.zeros(len(X))

    def class_posterior_many(self, X):
        ids = self.env.class_ids()
        d = np.stack([np.abs(self.env.signed_distance(c, X)) for c in ids])
        P = (d == d.min(axis=0)).astype(float)
        return ids, P / P.sum(axis=0)


class CoinMap(OracleMap):
    def __init__(self, env, seed):
        super().__init__(env)
        self.rng = np.random.default_rng(seed)

    def class_posterior_many(self, X):
        u = self.rng.random(len(X))
        return [1, 2], np.stack([u, 1 - u])


@pytest.fixture(scope="module")
def env():
    return generate_environment(1)


def empty_map(env, prior=0.5):
    return SemanticMap.for_bounds(env.lo, env.hi, VS, kernel=KernelSpec.default(VS), sigma2=1.0,
                                  prior_mean=prior, num_classes=env.num_classes)


def test_report_identities():
    r = MetricReport(0.1, 0.8, 0.7, 0.05, 0.1)
    assert r.fdr == 1 - r.precision and r.fnr == 1 - r.recall
    assert abs(r.normalized_sdf_error - 0.5) < 1e-12
    row = r.row()
    assert row["fdr"] == 1 - row["precision"] and row["fnr"] == 1 - row["recall"]


def test_boundary_points_density(env):
    X, y = boundary_points(env, 0.05)
    expected = sum(max(1, math.ceil(np.linalg.norm(b - a) / 0.05 - 1e-9))
                   for c in env.class_ids() for a, b in env.edges(c))
    assert len(X) == expected
    assert np.all(np.abs(env.signed_distance(1, X[y == 1])) < 1e-9)
    Xr, yr = boundary_points(env, 0.05, np.random.default_rng(0))
    assert len(Xr) == len(X) and np.all(np.abs(env.signed_distance(2, Xr[yr == 2])) < 1e-9)


def test_band_points_within_width(env):
    X = band_points(env, 1, 0.05, 0.3)
    assert len(X) and np.all(np.abs(env.signed_distance(1, X)) <= 0.3)


def test_perfect_predictor_zero_sdf_error(env):
    err, n = sdf_error(OracleMap(env), env)
    assert err < 1e-12 and n > 0


def test_prior_predictor_bound(env):
    m = empty_map(env)
    err, _ = sdf_error(m, env)
    assert err <= m.truncation + 0.5


def test_empty_sdf_set_rejected():
    env = Environment({1: []}, (0, 0, 1, 1), 1)
    with pytest.raises(MetricError):
        sdf_error(OracleMap(env), env)


def test_oracle_classification(env):
    miss, p, r, n = classification_metrics(OracleMap(env), env)
    # vertices of different classes never touch, so ground truth is unambiguous
    assert miss == 0 and p == 1 and r == 1 and n > 0


def test_coin_flip_near_chance(env):
    miss, _, _, n = classification_metrics(CoinMap(env, 0), env)
    assert abs(miss - 0.5) < 4 * math.sqrt(0.25 / n)


def test_confusion_hand_values():
    miss, p, r = confusion_metrics([1, 1, 2, 2], [1, 2, 2, 2], [1, 2])
    assert miss == 0.25
    assert p == pytest.approx((1.0 + 2 / 3) / 2)
    assert r == pytest.approx((0.5 + 1.0) / 2)
    with pytest.raises(MetricError):
        confusion_metrics([], [], [1])


def maps_with(env, stats_a, stats_b):
    a, b = empty_map(env), empty_map(env)
    a.ingest(stats_a)
    b.ingest(stats_b)
    return a, b


def test_mae_identical_maps_zero(env):
    batch = {1: ObservationBatch([(30, 30), (31, 30)], [2, 3], [0.1, -0.1], VS)}
    a, b = maps_with(env, batch, batch)
    assert mae_vs_centralized(a, b) == (0.0, 0.0)


def test_mae_positive_when_stats_differ(env):
    a, b = maps_with(env, {1: ObservationBatch([(30, 30)], [2], [0.1], VS)},
                     {1: ObservationBatch([(30, 30)], [2], [0.2], VS)})
    assert mae_vs_centralized(a, b)[0] > 0
    a, b = maps_with(env, {1: ObservationBatch([(30, 30)], [2], [0.1], VS)},
                     {1: ObservationBatch([(30, 30)], [3], [0.1], VS)})
    mean_mae, var_mae = mae_vs_centralized(a, b)
    assert var_mae > 0


def test_mae_missing_class_uses_prior(env):
    a, b = maps_with(env, {1: ObservationBatch([(30, 30)], [2], [0.1], VS)},
                     {1: ObservationBatch([(30, 30)], [2], [0.1], VS), 2: ObservationBatch([(50, 50)], [4], [0.0], VS)})
    mean_mae, var_mae = mae_vs_centralized(a, b)
    assert mean_mae > 0 and var_mae > 0


def test_mae_empty_central(env):
    with pytest.raises(MetricError):
        mae_vs_centralized(empty_map(env), empty_map(env))


SMALL = dict(sensor_cfg=SensorConfig(num_poses=6, num_rays=60), workers=1)


def test_sweep_single_cell_and_repeatability():
    rows = parameter_sweep("max_leaf", [50], [3], **SMALL)
    assert len(rows) == 1
    again = parameter_sweep("max_leaf", [50], [3], **SMALL)
    assert rows == again


def test_sweep_one_row_per_value():
    vals = [4, 16, 64, 256, 1024, 4096]
    rows = parameter_sweep("max_leaf", vals, [0], **SMALL)
    assert [r["value"] for r in rows] == vals


def test_sweep_sensor_parameter():
    rows = parameter_sweep("noise_var", [0.0, 0.5], [1], **SMALL)
    assert len(rows) == 2 and rows[0]["sdf_error"] != rows[1]["sdf_error"]


def test_sweep_errors():
    with pytest.raises(MetricError):
        parameter_sweep("max_leaf", [], [0])
    with pytest.raises(MetricError):
        parameter_sweep("nonsense", [1], [0])
