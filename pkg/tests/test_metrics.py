import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tapknock.metrics import MetricError, ScoreSet, candidate_thresholds, eer, far_frr, granularity_bound, rate_curves

import oracles

POS = [0.9, 0.8, 0.7, 0.2]
NEG = [0.6, 0.3, 0.1, 0.05]


def test_far_frr_examples():
    assert far_frr((POS, NEG), 0.65) == (0.0, 0.25)
    assert far_frr((POS, NEG), 0.0) == (1.0, 0.0)
    assert far_frr((POS, NEG), math.nextafter(1.0, 2.0)) == (0.0, 1.0)


def test_eer_example():
    e, theta = eer((POS, NEG))
    assert e == 0.25
    # FAR = FRR = 0.25 exactly at 0.6 under the accepting boundary
    assert theta == 0.6
    assert far_frr((POS, NEG), theta) == (0.25, 0.25)


def test_separated_scores():
    assert eer(([0.9, 0.8, 0.75], [0.1, 0.3, 0.5, 0.7]))[0] == 0.0


def test_identical_lists():
    xs = list(np.random.default_rng(0).uniform(size=50))
    e, _ = eer((xs, xs))
    assert abs(e - 0.5) <= granularity_bound((xs, xs))


def test_empty_and_out_of_range():
    with pytest.raises(MetricError, match="empty"):
        eer(([], [0.2]))
    with pytest.raises(MetricError):
        ScoreSet([1.2], [0.1])
    with pytest.raises(MetricError):
        ScoreSet([np.nan], [0.1])


def test_candidates_include_a_point_above_one():
    c = candidate_thresholds(([1.0, 0.5], [0.5]))
    assert c[-1] > 1.0 and list(c[:-1]) == [0.5, 1.0]


score_lists = st.lists(st.floats(0, 1), min_size=1, max_size=120)
grid_scores = st.lists(st.integers(0, 20).map(lambda k: k / 20), min_size=1, max_size=120)


@given(st.one_of(score_lists, grid_scores), st.one_of(score_lists, grid_scores))
def test_eer_matches_enumeration(pos, neg):
    assert eer((pos, neg)) == oracles.eer_enumerate(pos, neg)


@given(st.lists(st.floats(0, 1), min_size=2, max_size=240, unique=True), st.data())
def test_granularity_bound(scores, data):
    # the bound holds for tie-free scores; all-equal lists jump from FAR 1 to 0 in one step
    k = data.draw(st.integers(1, len(scores) - 1))
    pos, neg = scores[:k], scores[k:]
    _, theta = eer((pos, neg))
    far, frr = far_frr((pos, neg), theta)
    assert abs(far - frr) <= granularity_bound((pos, neg)) + 1e-12


@given(score_lists, score_lists, st.lists(st.floats(-0.5, 1.5), min_size=2, max_size=30))
def test_rates_monotone(pos, neg, thetas):
    th = np.sort(thetas)
    far, frr = rate_curves((pos, neg), th)
    assert np.all(np.diff(far) <= 0) and np.all(np.diff(frr) >= 0)
    for t, a, r in zip(th, far, frr):
        assert (a, r) == far_frr((pos, neg), t) == oracles.far_frr(pos, neg, t)
