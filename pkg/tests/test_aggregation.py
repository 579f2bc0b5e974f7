import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fiwi.aggregation import (AggregationConfig, AggregationError, Scheme,
                              aggregate_distribution, aggregate_error_prob,
                              frames_per_aggregate, longest_aggregate_mean)
from fiwi.traffic import FrameLengthDist

TRIMODAL = FrameLengthDist.from_pairs([(320, .5), (4640, .25), (12000, .25)])
POINT = FrameLengthDist.point(12000)


def test_reference_frames_per_aggregate():
    assert frames_per_aggregate(POINT, AggregationConfig.amsdu(7935)) == 5


def test_vht_frames_per_aggregate():
    # 1500 B + 14 B header, padded to 1516 B: 7 fit into 11406 B, 8 do not
    assert 7 * 1516 <= 11406 < 8 * 1516
    assert frames_per_aggregate(POINT, AggregationConfig.amsdu(11406)) == 7


def test_frame_filling_whole_aggregate():
    cfg = AggregationConfig.amsdu(1516)
    assert frames_per_aggregate(POINT, cfg) == 1
    with pytest.raises(AggregationError):
        frames_per_aggregate(POINT, AggregationConfig.amsdu(1500))


def test_point_mass_aggregate():
    agg = aggregate_distribution(POINT, AggregationConfig.amsdu(), 5)
    assert agg.lengths == (60000.0,) and agg.probs == (1.0,)
    assert agg.longest_mean == 60000.0


def test_two_point_binomial():
    d = FrameLengthDist.from_pairs([(8000, .5), (16000, .5)])
    agg = aggregate_distribution(d, AggregationConfig.amsdu(), 2)
    assert agg.lengths == (16000.0, 24000.0, 32000.0)
    assert agg.probs == (0.25, 0.5, 0.25)


def test_trimodal_against_monte_carlo():
    n = 3
    agg = aggregate_distribution(TRIMODAL, AggregationConfig.amsdu(), n)
    rng = np.random.default_rng(2024)
    draws = rng.choice(TRIMODAL.lengths, size=(1_000_000, n), p=TRIMODAL.probs)
    values, counts = np.unique(draws.sum(axis=1), return_counts=True)
    empirical = dict(zip(values.tolist(), (counts / counts.sum()).tolist()))
    support = set(empirical) | set(agg.lengths)
    model = dict(zip(agg.lengths, agg.probs))
    tv = 0.5 * sum(abs(model.get(x, 0.0) - empirical.get(x, 0.0)) for x in support)
    assert tv < 0.005


def _max_of_two(lengths, probs):
    return sum(pa * pb * max(a, b)
               for (a, pa), (b, pb) in itertools.product(zip(lengths, probs), repeat=2))


def test_longest_mean_enumeration():
    lengths, probs = (16000, 24000, 32000), (0.25, 0.5, 0.25)
    # nine ordered outcome pairs
    expected = 0.0625 * 16000 + (0.125 * 2 + 0.25) * 24000 \
        + (1 - 0.0625 - 0.5) * 32000
    assert longest_aggregate_mean(lengths, probs) == expected
    assert _max_of_two(lengths, probs) == expected


@settings(max_examples=60)
@given(st.lists(st.tuples(st.integers(1, 50), st.integers(1, 20)),
                min_size=1, max_size=6, unique_by=lambda t: t[0]))
def test_longest_mean_matches_enumeration(pairs):
    lengths = [1000.0 * l for l, _ in pairs]
    weights = [w for _, w in pairs]
    total = sum(weights)
    probs = [w / total for w in weights]
    got = longest_aggregate_mean(lengths, probs)
    assert got == pytest.approx(_max_of_two(lengths, probs), rel=1e-13)
    assert got >= float(np.dot(lengths, probs)) * (1 - 1e-13)


def test_error_probability_values():
    cfg = AggregationConfig.amsdu()
    assert aggregate_error_prob(POINT, cfg, 0.0) == 0.0
    p = aggregate_error_prob(POINT, cfg, 1e-6)
    with mpmath.workdps(40):
        exact = 1 - (1 - mpmath.mpf("1e-6")) ** 60320
    assert p == pytest.approx(float(exact), rel=1e-12)
    assert p == pytest.approx(0.0586, abs=1e-4)


def test_ampdu_single_frame_matches_amsdu():
    msdu = aggregate_error_prob(POINT, AggregationConfig.amsdu(), 1e-5, 1)
    mpdu = aggregate_error_prob(POINT, AggregationConfig.ampdu(), 1e-5, 1)
    assert mpdu == pytest.approx(msdu, rel=1e-14)


def test_ampdu_fails_only_when_every_subframe_fails():
    one = aggregate_error_prob(POINT, AggregationConfig.ampdu(), 1e-5, 1)
    assert aggregate_error_prob(POINT, AggregationConfig.ampdu(), 1e-5, 4) \
        == pytest.approx(one ** 4, rel=1e-12)


@given(st.floats(1e-9, 1e-4))
def test_error_probability_monotone_in_ber(pb):
    cfg = AggregationConfig.amsdu()
    lo = aggregate_error_prob(TRIMODAL, cfg, pb)
    hi = aggregate_error_prob(TRIMODAL, cfg, pb * 2)
    assert 0 < lo < hi < 1


def test_scheme_parsing():
    assert Scheme.parse("a-msdu") is Scheme.A_MSDU
    assert Scheme.parse("A-MPDU") is Scheme.A_MPDU
    with pytest.raises(AggregationError):
        Scheme.parse("none")
    assert math.isclose(AggregationConfig.ampdu().subframe_overhead_bits, 44 * 8)
