import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import norm

from oracles import rejection_class_frequencies
from semtsdf.kernel import KernelSpec
from semtsdf.semantic_map import SemanticMap, class_probabilities
from semtsdf.sensor_sim import Environment, build_training_batch_2d, make_frame, observe
from semtsdf.sparse_gp import ObservationBatch, merge_batch, GpStats

VS = 0.1
K = KernelSpec(0.3, 1.0, 0.9)


def new_map(**kw):
    kw.setdefault("prior_mean", 0.5)
    return SemanticMap(K, 1.0, VS, (0.0, 0.0), 4.0, **kw)


def sdf_batch(X, sdf, reps=3):
    keys = np.rint(X / VS).astype(int)
    return ObservationBatch.from_samples(np.repeat(keys, reps, axis=0), np.repeat(sdf, reps), VS)


def band_grid(fn, half=2.0, width=0.3):
    g = np.arange(-round(half / VS), round(half / VS) + 1) * VS
    gx, gy = np.meshgrid(g, g, indexing="ij")
    G = np.column_stack([gx.ravel(), gy.ravel()])
    d = fn(G)
    return G[np.abs(d) <= width], d[np.abs(d) <= width]


# -- ingestion ------------------------------------------------------------------

def test_ingest_new_class_creates_tree():
    m = new_map(num_classes=3)
    m.ingest({3: ObservationBatch([(0, 0)], [1], [0.0], VS)})
    assert m.classes == [3]


def test_ingest_rejects_bad_class():
    m = new_map(num_classes=2)
    with pytest.raises(ValueError):
        m.ingest({3: ObservationBatch([(0, 0)], [1], [0.0], VS)})


def test_empty_ingest_is_noop():
    m = new_map()
    m.ingest({})
    m.ingest({1: ObservationBatch.empty(VS)})
    assert m.classes == []


def test_sequential_equals_merged_ingest(rng):
    b1 = ObservationBatch.from_samples(rng.integers(-5, 5, (30, 2)), rng.normal(size=30), VS)
    b2 = ObservationBatch.from_samples(rng.integers(-5, 5, (30, 2)), rng.normal(size=30), VS)
    seq, one = new_map(), new_map()
    seq.ingest({1: b1})
    seq.ingest({1: b2})
    merged = merge_batch(merge_batch(GpStats(voxel_size=VS), b1), b2)
    one.ingest({1: ObservationBatch(merged.keys, merged.counts, merged.means, VS)})
    a, b = seq.point_stats(1), one.point_stats(1)
    assert a.keys() == b.keys()
    for k in a:
        assert a[k][0] == b[k][0] and a[k][1] == pytest.approx(b[k][1], abs=1e-12)


# -- queries ------------------------------------------------------------------

def test_unobserved_class_returns_prior():
    m = new_map()
    m.ingest({1: ObservationBatch([(0, 0)], [1], [0.0], VS)})
    assert m.query_tsdf(2, [0.0, 0.0]) == (0.5, 1.0)


def test_far_from_data_returns_prior():
    m = new_map()
    m.ingest({1: ObservationBatch([(0, 0)], [1], [0.0], VS)})
    mu, sd = m.query_tsdf(1, [1.5, 1.5])
    assert mu == 0.5 and sd == 1.0


def test_observed_wall_surface_point():
    wall = np.array([[1.0, -1.5], [1.8, -1.5], [1.8, 1.5], [1.0, 1.5]])
    env = Environment({1: [wall]}, (-2.0, -2.0, 2.0, 2.0), 1)
    m = new_map()
    frame = make_frame(90, math.pi / 2)
    for _ in range(5):
        obs = observe(env, (-1.0, 0.0, 0.0), frame)
        m.ingest(build_training_batch_2d(obs, VS, 10))
    mu, sd = m.query_tsdf(1, [1.0, 0.0])
    assert abs(mu) < sd


# -- class posterior ------------------------------------------------------------

def test_symmetric_classes_split_evenly():
    assert np.allclose(class_probabilities([0.3, 0.3], [0.2, 0.2]), [0.5, 0.5])


def test_single_class_is_certain():
    assert class_probabilities([0.7], [0.1]).tolist() == [1.0]


def test_two_class_closed_form_and_sampling():
    p = class_probabilities([0.0, 1.0], [1.0, 1.0])
    expected = norm.pdf(0) / (norm.pdf(0) + norm.pdf(1))
    assert p[0] == pytest.approx(expected, abs=1e-14)
    assert p[0] == pytest.approx(0.6224, abs=1e-4)
    freq, n = rejection_class_frequencies([0.0, 1.0], [1.0, 1.0], 1e-2, 100_000,
                                          np.random.default_rng(0))
    se = math.sqrt(p[0] * (1 - p[0]) / n)
    assert abs(freq[0] - p[0]) < 3 * se


def test_degenerate_rules():
    # a point mass at zero takes everything
    assert class_probabilities([0.0, 0.1], [0.0, 0.5]).tolist() == [1.0, 0.0]
    # two point masses at zero share
    assert class_probabilities([0.0, 0.0, 1.0], [0.0, 0.0, 1.0]).tolist() == [0.5, 0.5, 0.0]
    # a point mass away from zero contributes nothing
    assert class_probabilities([0.2, 0.1], [0.0, 0.5]).tolist() == [0.0, 1.0]
    # every class degenerate away from zero: uniform
    assert class_probabilities([0.2, 0.1], [0.0, 0.0]).tolist() == [0.5, 0.5]


def test_vectorized_matches_columns(rng):
    mu = rng.normal(size=(3, 8))
    sd = rng.uniform(0.1, 2, (3, 8))
    P = class_probabilities(mu, sd)
    for j in range(8):
        assert np.allclose(P[:, j], class_probabilities(mu[:, j], sd[:, j]), atol=1e-15)


mus = st.lists(st.floats(-3, 3), min_size=1, max_size=5)


@given(mus, st.integers(0, 10**6), st.floats(0.01, 100))
def test_probability_vector_and_common_scaling(mu, seed, c):
    rng = np.random.default_rng(seed)
    mu = np.array(mu)
    sd = rng.uniform(0.05, 3.0, len(mu))
    p = class_probabilities(mu, sd)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) < 1e-12
    assert np.allclose(class_probabilities(c * mu, c * sd), p, atol=1e-12)


def test_map_class_posterior_sums_to_one(rng):
    m = new_map()
    m.ingest({1: ObservationBatch([(0, 0)], [5], [0.0], VS), 2: ObservationBatch([(3, 0)], [5], [0.0], VS)})
    ids, P = m.class_posterior_many(rng.uniform(-1, 1, (20, 2)))
    assert ids == [1, 2]
    assert np.allclose(P.sum(axis=0), 1.0, atol=1e-12)
    with pytest.raises(ValueError):
        new_map().class_posterior([0, 0])


# -- surface extraction -----------------------------------------------------------

def test_circle_contour_within_one_voxel():
    R = 1.0
    X, d = band_grid(lambda G: np.linalg.norm(G, axis=1) - R)
    m = new_map()
    m.ingest({1: sdf_batch(X, d)})
    lines = m.extract_surface()[1]
    assert lines
    pts = np.concatenate(lines)
    assert np.max(np.abs(np.linalg.norm(pts, axis=1) - R)) < VS
    # every part of the circle is close to some contour vertex
    ang = np.linspace(0, 2 * np.pi, 200, endpoint=False)
    circ = R * np.column_stack([np.cos(ang), np.sin(ang)])
    gap = np.min(np.linalg.norm(circ[:, None] - pts[None], axis=-1), axis=1)
    assert gap.max() < VS


def test_straight_wall_single_polyline():
    # truncated distance observed over the whole region
    X, d = band_grid(lambda G: np.clip(G[:, 0] - 0.05, -0.3, 0.3), width=np.inf)
    m = new_map()
    m.ingest({1: sdf_batch(X, d)})
    lines = m.extract_surface()[1]
    assert len(lines) == 1
    assert np.max(np.abs(lines[0][:, 0] - 0.05)) < 0.5 * VS


def test_zero_threshold_gives_no_contour():
    X, d = band_grid(lambda G: G[:, 0])
    m = new_map()
    m.ingest({1: sdf_batch(X, d)})
    assert m.extract_surface(var_threshold=0.0) == {1: []}


def test_surface_extraction_deterministic():
    X, d = band_grid(lambda G: np.linalg.norm(G, axis=1) - 0.8)
    m = new_map()
    m.ingest({1: sdf_batch(X, d)})
    a, b = m.extract_surface()[1], m.extract_surface()[1]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
