import numpy as np
import pytest
from hypothesis import given, strategies as st

from fiwi import pon
from fiwi.topology import PonKind, make_plant
from fiwi.wireless import Saturation

L = 12000.0


def G_of(entries, n_onus=4):
    G = np.zeros((n_onus + 1, n_onus + 1))
    for (i, j), v in entries.items():
        G[i, j] = v
    return G


def test_zero_traffic_zero_intensity():
    for plant in (make_plant("WR", 4, sectors=[2, 2]), make_plant("TDM", 4)):
        load = pon.intensities(np.zeros((5, 5)), plant, L)
        assert load.max_intensity == 0.0


def test_wr_single_sender():
    R = 1000.0
    plant = make_plant("WR", 4, sectors=[2, 2])
    load = pon.wr_intensities(G_of({(1, 0): R}), plant, L)
    assert load.up == (12000 * R / 1e9, 0.0)
    assert load.down == (0.0, 0.0)


def test_wr_symmetric_sectors():
    G = np.ones((5, 5)) - np.eye(5)
    load = pon.wr_intensities(G, make_plant("WR", 4, sectors=[2, 2]), L)
    assert load.up[0] == load.up[1]


def test_channels_halve_intensity():
    G = G_of({(1, 2): 5000.0, (3, 0): 2000.0, (0, 4): 1000.0})
    one = pon.broadcast_intensities(G, make_plant("WDM", 4, channels=1), L)
    two = pon.broadcast_intensities(G, make_plant("WDM", 4, channels=2), L)
    assert two.up[0] == pytest.approx(one.up[0] / 2, rel=1e-15)
    assert two.down[0] == pytest.approx(one.down[0] / 2, rel=1e-15)


def test_all_upstream_half_load():
    rate = 0.5 * 1e9 / L / 4
    G = G_of({(o, 0): rate for o in range(1, 5)})
    load = pon.broadcast_intensities(G, make_plant("TDM", 4), L)
    assert load.up == (pytest.approx(0.5, rel=1e-15),)
    assert load.down == (0.0,)


@pytest.mark.parametrize("rho,stable", [(0.99, True), (1.0, False)])
def test_stability_boundary(rho, stable):
    load = pon.PonLoad(PonKind.WR_MULTISTAGE, (0.1, 0.1), (rho, 0.2))
    assert pon.pon_stable(load).stable is stable


def test_offending_sector_named():
    load = pon.PonLoad(PonKind.WR_MULTISTAGE, (0.1, 1.2), (0.3, 0.2))
    verdict = pon.pon_stable(load)
    assert not verdict.stable and verdict.offending == ("down[2]=1.2",)


def test_pk_phi_values():
    assert pon.pk_phi(0.0, 1e9, L, 0.0) == 0.0
    assert pon.pk_phi(0.5, 1e9, L, 0.0) == pytest.approx(6.0e-6, rel=1e-15)
    with pytest.raises(Saturation):
        pon.pk_phi(1.0, 1e9, L, 0.0)


@given(st.floats(0, 0.999), st.floats(0, 0.999))
def test_pk_phi_monotone(a, b):
    lo, hi = sorted((a, b))
    assert pon.pk_phi(lo, 1e9, L, 1e6) <= pon.pk_phi(hi, 1e9, L, 1e6)


def test_idle_upstream_floor():
    plant = make_plant("WR", 4, sectors=[2, 2], distance_km=20)
    load = pon.wr_intensities(np.zeros((5, 5)), plant, L)
    rep = pon.wr_delays(load, plant, L, 0.0)
    assert rep.up_sector[0] == pytest.approx(4e-4 + 1.2e-5, rel=1e-12)
    assert rep.D_u == pytest.approx(4.12e-4, rel=1e-12)


def test_no_inter_onu_traffic_no_correction():
    plant = make_plant("WR", 4, sectors=[2, 2])
    G = G_of({(0, 1): 3000.0, (0, 3): 4000.0, (2, 0): 1000.0})
    rep = pon.wr_delays(pon.wr_intensities(G, plant, L), plant, L, 0.0)
    assert rep.correction_down == (0.0, 0.0)
    assert rep.down_corrected == rep.down_sector
    tdm = make_plant("TDM", 4)
    rep = pon.broadcast_delays(pon.broadcast_intensities(G, tdm, L), tdm, L, 0.0)
    assert rep.correction_up == 0.0 and rep.correction_down == (0.0,)


def test_symmetric_sectors_share_delay():
    plant = make_plant("WR", 4, sectors=[2, 2])
    G = np.full((5, 5), 2000.0)
    np.fill_diagonal(G, 0)
    rep = pon.wr_delays(pon.wr_intensities(G, plant, L), plant, L, 0.0)
    assert rep.D_d == pytest.approx(rep.down_corrected[0], rel=1e-14)
    assert rep.down_corrected[0] == rep.down_corrected[1]


def test_correction_floor():
    plant = make_plant("TDM", 4)
    G = np.full((5, 5), 5e3)
    G[0, :] = 0
    G[:, 0] = 0
    np.fill_diagonal(G, 0)
    rep = pon.broadcast_delays(pon.broadcast_intensities(G, plant, L), plant, L, 0.0)
    assert rep.D_d >= plant.propagation[0] + L / 1e9
    assert rep.D_u < rep.D_u_uncorrected


def test_channel_count_enters_only_through_intensity():
    G1 = G_of({(1, 2): 6000.0, (3, 0): 3000.0})
    G2 = 2 * G1
    p1, p2 = make_plant("TDM", 4), make_plant("WDM", 4, channels=2)
    r1 = pon.delays(pon.intensities(G1, p1, L), p1, L, 0.0)
    r2 = pon.delays(pon.intensities(G2, p2, L), p2, L, 0.0)
    assert r1 == r2


def test_saturated_pon_raises():
    plant = make_plant("TDM", 4)
    G = G_of({(1, 0): 1e6})
    with pytest.raises(Saturation):
        pon.delays(pon.intensities(G, plant, L), plant, L, 0.0)


def test_upstream_convex_in_load():
    plant = make_plant("TDM", 4)
    rates = np.linspace(0, 0.95 * 1e9 / L / 4, 12)
    D = [pon.delays(pon.intensities(G_of({(o, 0): r for o in range(1, 5)}), plant, L),
                    plant, L, 0.0).D_u_uncorrected for r in rates]
    d1 = np.diff(D)
    assert np.all(d1 > 0) and np.all(np.diff(d1) > 0)
