import numpy as np
import pytest
from hypothesis import given, strategies as st

from fiwi.traffic import (FrameLengthDist, ScenarioKind, ScenarioSpec,
                          TrafficError, TrafficMatrix, default_hot_set,
                          dist_moments, generate_matrix)

from conftest import fig4, fig4x2


def test_point_mass_moments():
    assert dist_moments(FrameLengthDist.point(12000)) == (12000, 0)


def test_two_point_moments():
    d = FrameLengthDist.from_pairs([(8000, 0.5), (16000, 0.5)])
    assert dist_moments(d) == (12000, 1.6e7)


def test_trimodal_moments():
    d = FrameLengthDist.from_pairs([(320, .5), (4640, .25), (12000, .25)])
    mean = 0.5 * 320 + 0.25 * 4640 + 0.25 * 12000
    var = 0.5 * (320 - mean) ** 2 + 0.25 * (4640 - mean) ** 2 \
        + 0.25 * (12000 - mean) ** 2
    m, v = dist_moments(d)
    assert m == pytest.approx(mean, rel=1e-15)
    assert v == pytest.approx(var, rel=1e-13)


def test_bad_pmf_rejected():
    with pytest.raises(TrafficError):
        FrameLengthDist((100.0,), (0.5,))
    with pytest.raises(TrafficError):
        FrameLengthDist((-1.0,), (1.0,))


def test_b_matrix_entries():
    t = fig4x2()
    S = generate_matrix(ScenarioSpec(ScenarioKind.B_MATRIX, 10, B=100), t).rates
    onu1, onu2, sta1 = t.node_id("ONU1"), t.node_id("ONU2"), t.node_id("STA1")
    assert S[onu1, onu2] == 1000 and S[onu1, sta1] == 10
    assert S[0, onu1] == 1000 and np.all(np.diag(S) == 0)


def test_b_matrix_unit_b_is_flat(tdm):
    S = generate_matrix(ScenarioSpec(ScenarioKind.B_MATRIX, 3.0), tdm).rates
    off = ~np.eye(len(S), dtype=bool)
    assert np.all(S[off] == 3.0)


def test_upstream_rows(tdm):
    S = generate_matrix(ScenarioSpec(ScenarioKind.UPSTREAM, 5), tdm).rates
    for k in tdm.stas():
        assert S[k, 0] == 5
    assert S.sum() == 5 * 16


def test_p2p_rows_sum_to_alpha(tdm):
    S = generate_matrix(ScenarioSpec(ScenarioKind.P2P, 7), tdm).rates
    for k in tdm.stas():
        assert S[k].sum() == pytest.approx(7)
    assert S[:5].sum() == 0 and S[:, :5].sum() == 0


def test_nonuniform_surcharge(tdm):
    spec = ScenarioSpec(ScenarioKind.NONUNIFORM, 10, domain="pon")
    S = generate_matrix(spec, tdm).rates
    hot = default_hot_set(tdm)
    assert 1 in hot and 2 in hot
    assert S[1].sum() == pytest.approx(13) and S[3].sum() == pytest.approx(10)


def test_scenario_validation():
    with pytest.raises(TrafficError):
        ScenarioSpec(ScenarioKind.B_MATRIX, 1.0, B=0.5)
    with pytest.raises(TrafficError):
        ScenarioSpec(ScenarioKind.P2P, -1.0)
    assert ScenarioKind.parse("B") is ScenarioKind.B_MATRIX


def test_matrix_contract():
    with pytest.raises(TrafficError):
        TrafficMatrix(np.ones((3, 3)), 1, 1)
    m = TrafficMatrix(np.array([[0, 1.0], [2.0, 0]]), 1, 0)
    assert m.pairs() == [(0, 1, 1.0), (1, 0, 2.0)]
    assert m.scaled(2).total == 6


@given(st.one_of(st.just(0.0), st.floats(1e-6, 1e4)), st.sampled_from(list(ScenarioKind)))
def test_matrix_linear_in_alpha(alpha, kind):
    t = fig4("TDM")
    base = generate_matrix(ScenarioSpec(kind, 1.0, B=3), t).rates
    S = generate_matrix(ScenarioSpec(kind, alpha, B=3), t).rates
    np.testing.assert_allclose(S, alpha * base, rtol=1e-12)
