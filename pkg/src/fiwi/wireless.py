"""Aggregate service times, sensing delay and M/M/1 delays in the mesh."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .dcf import DcfParams


class Saturation(ArithmeticError):
    """A queue is at or beyond its stability limit."""

    def __init__(self, element, intensity: float, message: str | None = None):
        super().__init__(message or f"{element} saturated (intensity {intensity:.4g})")
        self.element = element
        self.intensity = intensity


def backoff_series(p: float, W0: int, H: int) -> float:
    """sum_{b>=1} p^b (2^min(b,H) W0 - 1) / 2, in units of empty slots.

    Equals the expected accumulated backoff of the retry chain, because
    sum_j p^j (1-p) sum_{b<=j} w_b = sum_b w_b P(J >= b) = sum_b w_b p^b.
    """
    if not 0 <= p < 1:
        raise Saturation("retry chain", p, "collision probability must be < 1")
    total = 0.0
    pb = 1.0
    for b in range(1, H + 1):
        pb *= p
        total += pb * (2 ** b * W0 - 1) / 2
    # stages beyond H repeat the largest window
    total += (2 ** H * W0 - 1) / 2 * pb * p / (1 - p)
    return total


def service_time_basic(p: float, t_s: float, t_c: float,
                       params: DcfParams) -> float:
    """Mean time to deliver one aggregate with basic access."""
    if not 0 <= p < 1:
        raise Saturation("basic access", p, "p = 1: service time diverges")
    return (t_s + t_c * p / (1 - p)
            + params.slot * backoff_series(p, params.W0, params.H))


def service_time_rtscts(p_e: float, p_c: float, t_s: float, t_c: float,
                        params: DcfParams) -> float:
    """Mean time to deliver one aggregate with RTS/CTS reservation.

    Collisions hit only RTS/CTS; a transmission error repeats the whole
    reservation plus aggregate, so the per-attempt cost scales by 1/(1-p_e).
    """
    if not 0 <= p_e < 1 or not 0 <= p_c < 1:
        raise Saturation("rts/cts access", max(p_e, p_c),
                         "p_e or p_c = 1: service time diverges")
    attempt = (t_s + t_c * p_c / (1 - p_c)
               + params.slot * backoff_series(p_c, params.W0, params.H))
    return attempt / (1 - p_e)


def sensing_delay(sigma: Sequence[float], d_ser: Sequence[float]) -> list[float]:
    """Per-radio sensing delay of one zone.

    Neighbour service times are scaled by their intensity sigma*Delta (the
    printed sigma/(1/Delta) * Delta), first for the one-level component and
    then once more for service plus sensing.
    """
    n = len(sigma)
    busy = [s * d * d for s, d in zip(sigma, d_ser)]
    total = sum(busy)
    d_sen1 = [total - busy[k] for k in range(n)]
    second = [sigma[k] * (d_ser[k] + d_sen1[k]) ** 2 for k in range(n)]
    total2 = sum(second)
    return [total2 - second[k] for k in range(n)]


def mm1_delay(sigma: float, delta: float) -> float:
    """Queueing plus service delay of an M/M/1 queue with service time delta."""
    if sigma * delta >= 1:
        raise Saturation("radio", sigma * delta)
    return 1.0 / (1.0 / delta - sigma)


@dataclass(frozen=True)
class NodeDelay:
    d_ser: float
    d_sen: float
    delta: float
    sigma: float
    intensity: float
    delay: float          # M/M/1 delay, inf when unstable
    corrected: float      # after the ONU/MPP correction
    mpp_correction: float

    @property
    def stable(self) -> bool:
        return self.intensity < 1


def node_delay(sigma: float, delta: float, mpp_correction: float = 0.0,
               d_ser: float | None = None, d_sen: float = 0.0) -> NodeDelay:
    """Nodal delay; ``mpp_correction`` is the fiber-side queueing to subtract."""
    rho = sigma * delta
    if rho >= 1:
        delay = corrected = float("inf")
    else:
        delay = mm1_delay(sigma, delta)
        corrected = max(delay - mpp_correction, delta)
    return NodeDelay(
        d_ser=delta - d_sen if d_ser is None else d_ser,
        d_sen=d_sen,
        delta=delta,
        sigma=sigma,
        intensity=rho,
        delay=delay,
        corrected=corrected,
        mpp_correction=mpp_correction,
    )


def flow_correction(rate: float, delta: float) -> float:
    """Queueing a flow would see from its own traffic at a radio."""
    if rate * delta >= 1:
        raise Saturation("flow", rate * delta)
    return rate * delta / (1.0 / delta - rate)


def path_delay(flows: Sequence[tuple[float, Sequence[int]]],
               nodes: Mapping[int, NodeDelay]) -> tuple[float, float]:
    """Traffic-weighted mean wireless path delay.

    ``flows`` holds (wireless rate in aggregates/s, transmitting radios on the
    path).  Returns (corrected, uncorrected) means; each flow's own queueing
    share is removed per radio, floored at zero.
    """
    total = sum(rate for rate, radios in flows if radios)
    if total <= 0:
        return 0.0, 0.0
    acc = raw = 0.0
    for rate, radios in flows:
        if not radios:
            continue
        s = r = 0.0
        for rid in radios:
            nd = nodes[rid]
            if not nd.stable:
                raise Saturation(rid, nd.intensity)
            s += max(nd.corrected - flow_correction(rate, nd.delta), 0.0)
            r += nd.delay
        acc += rate / total * s
        raw += rate / total * r
    return acc, raw
