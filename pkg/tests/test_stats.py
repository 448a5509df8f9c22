import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dpcore.stats import EPS_STD, DomainStats, compute_stats, softmax_weights, stats_distance


def test_two_point_batch():
    s = compute_stats([[1, 3], [3, 5]])
    np.testing.assert_array_equal(s.mean, [2, 4])
    np.testing.assert_array_equal(s.std, [1, 1])


def test_single_row_hits_floor():
    s = compute_stats([[7, 7]])
    np.testing.assert_array_equal(s.mean, [7, 7])
    np.testing.assert_array_equal(s.std, [EPS_STD, EPS_STD])


def test_gaussian_moments():
    x = np.random.default_rng(0).normal(size=(10_000, 6))
    s = compute_stats(x)
    assert np.max(np.abs(s.mean)) <= 0.05
    assert np.max(np.abs(s.std - 1)) <= 0.05


def test_population_not_sample_std():
    x = np.array([[0.0], [2.0], [4.0]])
    assert compute_stats(x).std[0] == pytest.approx(np.std(x, ddof=0))


@pytest.mark.parametrize("bad", [np.zeros((0, 3)), np.zeros(3), [[1.0, np.nan]]])
def test_compute_stats_rejects(bad):
    with pytest.raises(ValueError):
        compute_stats(bad)


def test_domain_stats_validation():
    with pytest.raises(ValueError):
        DomainStats([0.0, 1.0], [1.0])
    with pytest.raises(ValueError):
        DomainStats([0.0], [-1.0])
    s = DomainStats([1.0, 2.0], [0.5, 0.25])
    back = DomainStats.from_dict(s.to_dict())
    assert np.array_equal(back.mean, s.mean) and np.array_equal(back.std, s.std)


def test_distance_examples():
    a = DomainStats([0.0, 0.0], [1.0, 1.0])
    assert stats_distance(a, a) == 0
    assert stats_distance(a, DomainStats([3.0, 4.0], [1.0, 1.0])) == pytest.approx(5.0)
    assert stats_distance(DomainStats([0.0], [1.0]), DomainStats([0.0], [2.0])) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        stats_distance(a, DomainStats([0.0], [1.0]))


def test_softmax_examples():
    np.testing.assert_allclose(softmax_weights([3.0] * 4, 1.0), [0.25] * 4)
    np.testing.assert_allclose(softmax_weights([5.0], 1.0), [1.0])
    np.testing.assert_allclose(softmax_weights([0.0, 1.0], 1.0), [0.731059, 0.268941], atol=1e-6)
    # direct evaluation as the oracle
    assert softmax_weights([0.0, 1.0], 1.0)[0] == pytest.approx(1 / (1 + np.exp(-1)))


@pytest.mark.parametrize("tau", [0.0, -1.0])
def test_softmax_bad_tau(tau):
    with pytest.raises(ValueError):
        softmax_weights([1.0], tau)


def test_softmax_empty():
    with pytest.raises(ValueError):
        softmax_weights([], 1.0)


def test_softmax_no_overflow():
    w = softmax_weights([0.0, 1e6], 1e-3)
    assert np.all(np.isfinite(w)) and w[0] == 1.0


# a 1/64 grid keeps squared components clear of underflow
vec = arrays(float, 3, elements=st.integers(-3200, 3200).map(lambda k: k / 64))
pos = arrays(float, 3, elements=st.integers(0, 3200).map(lambda k: k / 64))


@settings(max_examples=200, deadline=None)
@given(vec, pos, vec, pos, vec, pos)
def test_distance_is_metric(m1, s1, m2, s2, m3, s3):
    a, b, c = DomainStats(m1, s1), DomainStats(m2, s2), DomainStats(m3, s3)
    ab, bc, ac = stats_distance(a, b), stats_distance(b, c), stats_distance(a, c)
    assert ab >= 0
    assert ab == stats_distance(b, a)
    assert ac <= ab + bc + 1e-9
    if ab == 0:
        assert np.array_equal(m1, m2) and np.array_equal(s1, s2)


dists = st.lists(st.floats(0, 100), min_size=1, max_size=8)


@settings(max_examples=200, deadline=None)
@given(dists, st.floats(-50, 50), st.floats(0.05, 10))
def test_softmax_shift_invariant(d, c, tau):
    w = softmax_weights(d, tau)
    assert w.sum() == pytest.approx(1.0)
    assert np.all(w > 0) or min(d) + 700 * tau < max(d)
    np.testing.assert_allclose(softmax_weights(np.asarray(d) + c, tau), w, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 5), min_size=2, max_size=6), st.floats(0.01, 4))
def test_softmax_monotone(d, delta):
    w = softmax_weights(d, 1.0)
    d2 = list(d)
    d2[0] -= delta
    assert softmax_weights(d2, 1.0)[0] > w[0]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_stats_row_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(9, 4))
    a, b = compute_stats(x), compute_stats(x[rng.permutation(9)])
    np.testing.assert_allclose(a.mean, b.mean, atol=1e-12)
    np.testing.assert_allclose(a.std, b.std, atol=1e-12)
