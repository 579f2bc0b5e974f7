"""Fiber backhaul: traffic intensities, stability and mean delays.

All functions take the fiber rate matrix ``G`` of shape (O+1, O+1), where
``G[a, b]`` is the rate in frames/s entering the PON at endpoint ``a`` (OLT = 0
or ONU a) and leaving it at endpoint ``b``.  Frame moments are per frame;
aggregation is a WLAN feature and does not apply here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .topology import FiberPlant, PonKind
from .wireless import Saturation


@dataclass(frozen=True)
class PonLoad:
    kind: PonKind
    down: tuple[float, ...]        # per sector (one entry for TDM/WDM)
    up: tuple[float, ...]
    cross: tuple[tuple[float, ...], ...] = ()   # WR: cross[u][l] = rho^{u->l}
    inter_onu: float = 0.0                      # broadcast correction argument

    @property
    def max_intensity(self) -> float:
        return max(self.down + self.up, default=0.0)


@dataclass(frozen=True)
class PonVerdict:
    stable: bool
    offending: tuple[str, ...]


@dataclass(frozen=True)
class PonDelayReport:
    down_sector: tuple[float, ...]          # D^{d,l} before correction
    down_corrected: tuple[float, ...]       # after the insertion-buffer term
    up_sector: tuple[float, ...]
    correction_down: tuple[float, ...]      # B^{d,l} (or B^d)
    correction_up: float                    # B^u, broadcast PONs only
    D_d: float
    D_u: float
    D_d_uncorrected: float
    D_u_uncorrected: float
    extrapolated: bool = False              # heterogeneous WR channel rates


def pk_phi(rho: float, c: float, mean: float, var: float) -> float:
    """Pollaczek-Khintchine mean waiting time of an M/G/1 queue."""
    if rho < 0:
        raise ValueError("negative intensity")
    if rho >= 1:
        raise Saturation("PON queue", rho)
    if c <= 0:
        raise ValueError("channel rate must be positive")
    return rho / (2 * c * (1 - rho)) * (var / mean + mean)


def wr_intensities(G: np.ndarray, plant: FiberPlant, mean: float) -> PonLoad:
    G = np.asarray(G, dtype=float)
    down, up = [], []
    for lam in range(1, plant.n_sectors + 1):
        members = list(plant.sector_members(lam))
        c = plant.rates[lam - 1]
        down.append(mean / c * float(G[:, members].sum()))
        up.append(mean / c * float(G[members, :].sum()))
    cross = []
    for ups in range(1, plant.n_sectors + 1):
        src = list(plant.sector_members(ups))
        c = plant.rates[ups - 1]
        cross.append(tuple(
            mean / c * float(G[np.ix_(src, list(plant.sector_members(lam)))].sum())
            for lam in range(1, plant.n_sectors + 1)))
    return PonLoad(plant.kind, tuple(down), tuple(up), tuple(cross))


def broadcast_intensities(G: np.ndarray, plant: FiberPlant, mean: float) -> PonLoad:
    G = np.asarray(G, dtype=float)
    scale = mean / (plant.channels * plant.rates[0])
    up = scale * float(G[1:, :].sum())
    down = scale * float(G[:, 1:].sum())
    inter = scale * float(G[1:, 1:].sum())
    return PonLoad(plant.kind, (down,), (up,), (), inter)


def intensities(G: np.ndarray, plant: FiberPlant, mean: float) -> PonLoad:
    if plant.kind is PonKind.WR_MULTISTAGE:
        return wr_intensities(G, plant, mean)
    return broadcast_intensities(G, plant, mean)


def pon_stable(load: PonLoad) -> PonVerdict:
    bad = []
    for lam, r in enumerate(load.down, start=1):
        if r >= 1:
            bad.append(f"down[{lam}]={r:.4g}")
    for lam, r in enumerate(load.up, start=1):
        if r >= 1:
            bad.append(f"up[{lam}]={r:.4g}")
    return PonVerdict(not bad, tuple(bad))


def _upstream(rho, psi, c, mean, var):
    return (2 * psi * (2 - rho) / (1 - rho) + pk_phi(rho, c, mean, var)
            + mean / c)


def _weighted(weights, values):
    total = sum(weights)
    if total <= 0:
        # idle direction: plain mean of the per-sector no-load values
        return sum(values) / len(values)
    return sum(w * v for w, v in zip(weights, values)) / total


def wr_delays(load: PonLoad, plant: FiberPlant, mean: float,
              var: float) -> PonDelayReport:
    verdict = pon_stable(load)
    if not verdict.stable:
        raise Saturation("WR PON " + ", ".join(verdict.offending),
                         load.max_intensity)
    d_raw, d_cor, u_del, corr = [], [], [], []
    for k in range(plant.n_sectors):
        c, psi = plant.rates[k], plant.propagation[k]
        dd = pk_phi(load.down[k], c, mean, var) + mean / c + psi
        b = sum(pk_phi(load.cross[u][k], c, mean, var)
                for u in range(plant.n_sectors))
        d_raw.append(dd)
        corr.append(b)
        d_cor.append(max(dd - b, psi + mean / c))
        u_del.append(_upstream(load.up[k], psi, c, mean, var))
    return PonDelayReport(
        down_sector=tuple(d_raw),
        down_corrected=tuple(d_cor),
        up_sector=tuple(u_del),
        correction_down=tuple(corr),
        correction_up=0.0,
        D_d=_weighted(load.down, d_cor),
        D_u=_weighted(load.up, u_del),
        D_d_uncorrected=_weighted(load.down, d_raw),
        D_u_uncorrected=_weighted(load.up, u_del),
        extrapolated=plant.heterogeneous,
    )


def broadcast_delays(load: PonLoad, plant: FiberPlant, mean: float,
                     var: float) -> PonDelayReport:
    verdict = pon_stable(load)
    if not verdict.stable:
        raise Saturation("PON " + ", ".join(verdict.offending),
                         load.max_intensity)
    c, psi = plant.rates[0], plant.propagation[0]
    b = pk_phi(load.inter_onu, c, mean, var)
    dd = pk_phi(load.down[0], c, mean, var) + mean / c + psi
    du = _upstream(load.up[0], psi, c, mean, var)
    return PonDelayReport(
        down_sector=(dd,),
        down_corrected=(max(dd - b, psi + mean / c),),
        up_sector=(du - b,),
        correction_down=(b,),
        correction_up=b,
        D_d=max(dd - b, psi + mean / c),
        D_u=du - b,
        D_d_uncorrected=dd,
        D_u_uncorrected=du,
    )


def delays(load: PonLoad, plant: FiberPlant, mean: float,
           var: float) -> PonDelayReport:
    if plant.kind is PonKind.WR_MULTISTAGE:
        return wr_delays(load, plant, mean, var)
    return broadcast_delays(load, plant, mean, var)
