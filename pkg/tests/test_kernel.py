import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from semtsdf.kernel import InvalidInputError, KernelSpec, eval as keval, gram


def test_zero_distance_gives_signal_variance():
    assert keval(KernelSpec(1.0, 1.0), [0.3, 0.2], [0.3, 0.2]) == 1.0
    assert keval(KernelSpec(0.5, 2.5, 1.0), [1, 1, 1], [1, 1, 1]) == 2.5


def test_beyond_cutoff_is_exact_zero():
    k = KernelSpec(1.0, 1.0, 2.0)
    assert keval(k, [0, 0], [2.0, 0]) == 0.0
    assert keval(k, [0, 0], [5.0, 1.0]) == 0.0


def test_unit_distance_closed_form():
    expected = (1 + math.sqrt(3)) * math.exp(-math.sqrt(3))
    assert keval(KernelSpec(1.0, 1.0), [0, 0], [1, 0]) == pytest.approx(expected, abs=1e-14)
    assert expected == pytest.approx(0.48335, abs=1e-5)


def test_taper_shrinks_inside_cutoff():
    plain = KernelSpec(0.3, 1.0)
    tapered = KernelSpec(0.3, 1.0, 0.9)
    r = np.linspace(0.01, 0.89, 20)
    assert np.all(tapered.of_distance(r) < plain.of_distance(r))
    assert np.all(tapered.of_distance(r) > 0)


@pytest.mark.parametrize("bad", [[np.nan, 0], [0, np.inf]])
def test_nonfinite_input_rejected(bad):
    with pytest.raises(InvalidInputError):
        keval(KernelSpec(1.0), bad, [0, 0])


@pytest.mark.parametrize("kw", [dict(lengthscale=0), dict(lengthscale=1, signal_variance=-1),
                                dict(lengthscale=1, cutoff_radius=0)])
def test_invalid_spec(kw):
    with pytest.raises(ValueError):
        KernelSpec(**kw)


def test_gram_singleton_and_spaced_points():
    k = KernelSpec(0.5, 2.0, 1.0)
    assert gram(k, [[0.0, 0.0]]).tolist() == [[2.0]]
    P = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    assert np.array_equal(gram(k, P), 2.0 * np.eye(3))


def test_gram_matches_pointwise_eval(rng):
    k = KernelSpec(0.4, 1.3, 1.2)
    A = rng.uniform(-1, 1, (7, 3))
    B = rng.uniform(-1, 1, (5, 3))
    G = gram(k, A, B)
    for i in range(7):
        for j in range(5):
            assert G[i, j] == pytest.approx(keval(k, A[i], B[j]), abs=1e-15)


def test_spec_roundtrip():
    for k in (KernelSpec(0.3, 1.0, 0.9), KernelSpec(1.0, 2.0)):
        assert KernelSpec.from_dict(k.to_dict()) == k


def test_default_hyperparameters():
    k = KernelSpec.default(0.1)
    assert k.lengthscale == pytest.approx(0.3)
    assert k.signal_variance == 1.0
    assert k.cutoff_radius == pytest.approx(0.9)


points = st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2)), min_size=1, max_size=20)


@given(points, st.floats(0.05, 2.0), st.sampled_from([math.inf, 0.5, 1.5]))
def test_gram_symmetric_with_exact_diagonal(pts, ell, cutoff):
    k = KernelSpec(ell, 1.7, cutoff)
    G = gram(k, np.array(pts))
    assert np.array_equal(G, G.T)
    assert np.all(np.diag(G) == 1.7)


@given(points, st.floats(0.05, 2.0))
def test_gram_positive_semidefinite(pts, ell):
    G = gram(KernelSpec(ell, 1.0), np.array(pts))
    np.linalg.cholesky(G + 1e-10 * np.eye(len(G)))


@given(points, st.floats(0.05, 1.0), st.floats(0.1, 2.0))
def test_compact_support_zero_fill(pts, ell, cutoff):
    P = np.array(pts)
    G = gram(KernelSpec(ell, 1.0, cutoff), P)
    D = np.linalg.norm(P[:, None] - P[None], axis=-1)
    assert np.all(G[D >= cutoff] == 0.0)
