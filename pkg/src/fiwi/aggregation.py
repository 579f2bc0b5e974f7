"""A-MSDU / A-MPDU frame aggregation: sizes, collisions and error probability."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .traffic import FrameLengthDist

OCTET = 8
SUPPORT_CAP = 4096


class AggregationError(ValueError):
    pass


class Scheme(enum.Enum):
    A_MSDU = "A-MSDU"
    A_MPDU = "A-MPDU"

    @classmethod
    def parse(cls, text: str) -> "Scheme":
        key = text.strip().upper().replace("_", "-")
        for s in cls:
            if s.value == key:
                return s
        raise AggregationError(f"unknown aggregation scheme {text!r}")


@dataclass(frozen=True)
class AggregationConfig:
    scheme: Scheme = Scheme.A_MSDU
    a_max_bits: float = 7935 * OCTET
    # A-MSDU: 14-byte subframe header.  A-MPDU: 4-byte delimiter plus the
    # MPDU's own MAC header and FCS.
    subframe_overhead_bits: float = 14 * OCTET
    align_bits: int = 4 * OCTET
    mac_header_bits: float = 36 * OCTET
    fcs_bits: float = 4 * OCTET

    def __post_init__(self):
        if self.a_max_bits <= 0:
            raise AggregationError("A_max must be positive")
        if self.align_bits < 0 or self.subframe_overhead_bits < 0:
            raise AggregationError("negative overhead")

    @classmethod
    def amsdu(cls, a_max_octets: float = 7935, **kw) -> "AggregationConfig":
        return cls(Scheme.A_MSDU, a_max_octets * OCTET, **kw)

    @classmethod
    def ampdu(cls, a_max_octets: float = 65535, **kw) -> "AggregationConfig":
        kw.setdefault("subframe_overhead_bits", (4 + 36 + 4) * OCTET)
        return cls(Scheme.A_MPDU, a_max_octets * OCTET, **kw)


@dataclass(frozen=True)
class AggregateDist:
    lengths: tuple[float, ...]
    probs: tuple[float, ...]
    n_frames: int
    mean: float
    longest_mean: float
    scheme: Scheme


def _padded(bits: float, align: int) -> float:
    if align <= 0:
        return bits
    return math.ceil(bits / align) * align


def frames_per_aggregate(dist: FrameLengthDist, cfg: AggregationConfig) -> int:
    """Largest frame count that always fits into one aggregate."""
    sub = _padded(dist.max_length + cfg.subframe_overhead_bits, cfg.align_bits)
    if sub > cfg.a_max_bits:
        raise AggregationError(
            f"a {dist.max_length:.0f}-bit frame does not fit into A_max="
            f"{cfg.a_max_bits:.0f} bits")
    return max(1, int(cfg.a_max_bits // sub))


def _bin_support(lengths: np.ndarray, probs: np.ndarray, cap: int):
    """Merge a sorted support into ``cap`` probability quantile bins.

    Each bin keeps its total mass and is placed at its conditional mean, so
    the overall mean is preserved exactly.
    """
    cdf = np.cumsum(probs)
    edges = np.searchsorted(cdf, np.linspace(0, cdf[-1], cap + 1)[1:-1],
                            side="right")
    out_l, out_p = [], []
    for chunk in np.split(np.arange(len(lengths)), np.unique(edges)):
        if len(chunk) == 0:
            continue
        p = probs[chunk].sum()
        if p <= 0:
            continue
        out_l.append(float((lengths[chunk] * probs[chunk]).sum() / p))
        out_p.append(float(p))
    return np.array(out_l), np.array(out_p)


def convolve_pmf(a_len, a_p, b_len, b_p, cap: int = SUPPORT_CAP):
    sums = np.add.outer(np.asarray(a_len), np.asarray(b_len)).ravel()
    probs = np.multiply.outer(np.asarray(a_p), np.asarray(b_p)).ravel()
    support, inverse = np.unique(sums, return_inverse=True)
    merged = np.bincount(inverse, weights=probs)
    if len(support) > cap:
        support, merged = _bin_support(support, merged, cap)
    return support, merged


def longest_aggregate_mean(lengths, probs) -> float:
    """Mean of the larger of two i.i.d. draws from a discrete pmf."""
    order = np.argsort(lengths)
    x = np.asarray(lengths, dtype=float)[order]
    p = np.asarray(probs, dtype=float)[order]
    cdf = np.cumsum(p)
    cdf_before = cdf - p
    return float(np.sum(x * (cdf ** 2 - cdf_before ** 2)))


def aggregate_distribution(
    dist: FrameLengthDist, cfg: AggregationConfig, n: int | None = None
) -> AggregateDist:
    """n-fold self-convolution of the frame length pmf."""
    if n is None:
        n = frames_per_aggregate(dist, cfg)
    if n < 1:
        raise AggregationError("an aggregate carries at least one frame")
    base_l = np.array(dist.lengths, dtype=float)
    base_p = np.array(dist.probs, dtype=float)
    acc_l, acc_p = base_l, base_p
    for _ in range(n - 1):
        acc_l, acc_p = convolve_pmf(acc_l, acc_p, base_l, base_p)
    acc_p = acc_p / acc_p.sum()
    return AggregateDist(
        lengths=tuple(float(v) for v in acc_l),
        probs=tuple(float(v) for v in acc_p),
        n_frames=n,
        mean=float(np.dot(acc_l, acc_p)),
        longest_mean=longest_aggregate_mean(acc_l, acc_p),
        scheme=cfg.scheme,
    )


def aggregate_error_prob(dist: FrameLengthDist, cfg: AggregationConfig,
                         p_b: float, n: int | None = None) -> float:
    """Probability that a transmitted aggregate is received in error.

    A-MSDU: one FCS protects header plus payload, so any bit error kills it.
    A-MPDU: every MPDU carries its own FCS and the aggregate fails only if all
    subframes fail; frame lengths are taken as i.i.d. draws from ``dist``.
    """
    if not 0 <= p_b < 1:
        raise AggregationError("bit error probability must be in [0, 1)")
    if p_b == 0:
        return 0.0
    if n is None:
        n = frames_per_aggregate(dist, cfg)
    log_ok = math.log1p(-p_b)
    if cfg.scheme is Scheme.A_MSDU:
        agg = aggregate_distribution(dist, cfg, n)
        extra = cfg.mac_header_bits + cfg.fcs_bits
        return sum(p * -math.expm1((l + extra) * log_ok)
                   for l, p in zip(agg.lengths, agg.probs))
    extra = cfg.mac_header_bits + cfg.fcs_bits
    ok = sum(p * math.exp((l + extra) * log_ok)
             for l, p in zip(dist.lengths, dist.probs))
    return (1.0 - ok) ** n
