"""Nonsaturated DCF model per wireless zone and its numerical fixed point.

Per radio the unknowns are the waiting probability q, the collision/error
probability p and the transmission probability tau; per zone the mean slot
duration E.  They are coupled through

    1 - q = exp(-sigma * E)
    1 - p = (1 - p_e) * prod_{others} (1 - tau)
    tau   = tau_of(q, p)
    E     = (1 - P_tr) eps + P_tr (P_s T_s + (1 - P_s) T_c)

with sigma in aggregates per second.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import optimize

from .aggregation import AggregateDist, Scheme

OCTET = 8


class DcfError(RuntimeError):
    pass


class NonConvergence(DcfError):
    def __init__(self, zone, residual, iterations):
        super().__init__(
            f"DCF fixed point for zone {zone} did not converge: residual "
            f"{residual:.3e} after {iterations} iterations")
        self.zone = zone
        self.residual = residual
        self.iterations = iterations


class Access(enum.Enum):
    BASIC = "basic"
    RTS_CTS = "rts/cts"

    @classmethod
    def parse(cls, text: str) -> "Access":
        key = text.strip().lower().replace("_", "/").replace("-", "/")
        if key in ("rts/cts", "rtscts", "rts"):
            return cls.RTS_CTS
        if key == "basic":
            return cls.BASIC
        raise DcfError(f"unknown access mode {text!r}")


@dataclass(frozen=True)
class DcfParams:
    """WLAN MAC/PHY parameters; defaults are the next-generation WLAN values."""

    W0: int = 16
    H: int = 6
    slot: float = 9e-6
    sifs: float = 16e-6
    difs: float = 34e-6
    phy_header: float = 20e-6
    mac_header: float = 36 * OCTET
    rts: float = 20 * OCTET
    cts: float = 14 * OCTET
    ack: float = 14 * OCTET
    fcs: float = 4 * OCTET
    rate: float = 300e6
    prop_delay: float = 1 / 3 * 1e-5  # 1 km between mesh nodes
    access: Access = Access.RTS_CTS

    def __post_init__(self):
        if self.W0 < 2 or self.H < 0:
            raise DcfError("need W0 >= 2 and H >= 0")
        for name in ("slot", "sifs", "difs", "phy_header", "rate"):
            if getattr(self, name) <= 0:
                raise DcfError(f"{name} must be positive")
        if self.prop_delay < 0:
            raise DcfError("negative propagation delay")


@dataclass(frozen=True)
class SolverOptions:
    damping: float = 1.0
    tol_prob: float = 1e-10
    tol_time: float = 1e-12
    rel_tol: float = 1e-12
    max_iter: int = 10_000


def slot_durations(params: DcfParams, agg: AggregateDist) -> tuple[float, float]:
    """Mean durations (T_s, T_c) of a successful and a collided transmission."""
    r, d = params.rate, params.prop_delay
    amsdu = agg.scheme is Scheme.A_MSDU
    if amsdu:
        payload = (params.mac_header + agg.mean + params.fcs) / r
        longest = (params.mac_header + agg.longest_mean + params.fcs) / r
    else:
        payload = agg.mean / r
        longest = agg.longest_mean / r
    if params.access is Access.BASIC:
        theta_s = (params.difs + params.phy_header + params.sifs + d
                   + params.ack / r + d)
        t_c = params.phy_header + params.difs + d + longest
    else:
        theta_s = (params.difs + params.rts / r + params.sifs + d
                   + params.cts / r + params.sifs + d + params.phy_header
                   + params.sifs + d + params.ack / r + d)
        t_c = params.rts / r + params.difs + d
    return theta_s + payload, t_c


def _backoff_bracket(p: float, W0: int, H: int) -> float:
    """2 W0 [1 - p - p (2p)^(H-1)] / (1 - 2p), evaluated without the pole.

    The quotient equals (1 + sum_{k<H} (2p)^k) / 2, which is finite at p = 1/2.
    """
    x = 2.0 * p
    geo = 0.0
    term = 1.0
    for _ in range(H):
        geo += term
        term *= x
    return W0 * (1.0 + geo)


def tau_of(q: float, p: float, W0: int, H: int,
           one_minus_q: float | None = None) -> float:
    """Per-slot transmission probability of a nonsaturated DCF station."""
    if q <= 0.0:
        return 0.0
    u = 1.0 - q if one_minus_q is None else one_minus_q
    if u <= 0.0:
        raise DcfError("q = 1 has no finite transmission probability")
    if p >= 1.0:
        raise DcfError("p = 1 stalls the backoff chain")
    v = 1.0 - p
    if q < 1e-100:
        # first-order limit; the full form underflows here
        return q / v
    # 1 - (1-q)^W0; log1p keeps tiny q from rounding 1-q to 1
    g = -math.expm1(W0 * (math.log1p(-q) if q < 0.5 else math.log(u)))
    qW = q * W0
    eta = (
        qW / g
        + qW * (qW + 3 * q - 2) / (2 * u * g)
        + u
        + q * (W0 + 1) * (p * u - q * v * v) / (2 * u)
        + p * q * q / (2 * u * v) * (W0 / g - v * v)
        * (_backoff_bracket(p, W0, H) + 1)
    )
    num = q * q * W0 / (u * v * g) - q * q * v / u
    return num / eta


def collision_prob(taus: Sequence[float], index: int) -> float:
    """Probability that some other radio of the zone transmits in a slot."""
    ok = 1.0
    for k, t in enumerate(taus):
        if k != index:
            ok *= 1.0 - t
    return 1.0 - ok


def expected_slot(p_tr: float, p_s: float, t_s: float, t_c: float,
                  slot: float) -> float:
    return (1.0 - p_tr) * slot + p_tr * (p_s * t_s + (1.0 - p_s) * t_c)


def zone_probabilities(taus: Sequence[float]) -> tuple[float, float]:
    """(P_tr, P_s) of a zone; P_s is taken as 1 in an idle zone."""
    idle = math.prod(1.0 - t for t in taus)
    p_tr = 1.0 - idle
    if p_tr <= 0.0:
        return 0.0, 1.0
    single = 0.0
    for k, t in enumerate(taus):
        if t > 0:
            single += t * math.prod(1.0 - s for j, s in enumerate(taus) if j != k)
    return p_tr, single / p_tr


@dataclass(frozen=True)
class ZoneSolution:
    zone: int
    radios: tuple[int, ...]
    sigma: tuple[float, ...]
    q: tuple[float, ...]
    p: tuple[float, ...]
    p_c: tuple[float, ...]
    tau: tuple[float, ...]
    E: float
    p_tr: float
    p_s: float
    t_s: float
    t_c: float
    residuals: tuple[float, float, float, float]  # relative: q, p, tau, E
    iterations: int
    method: str


@dataclass(frozen=True)
class DcfContext:
    """Zone-independent inputs of the fixed point."""

    params: DcfParams
    p_e: float
    t_s: float
    t_c: float
    options: SolverOptions = field(default_factory=SolverOptions)


def _rel(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0.0 else abs(a - b) / scale


class _ZoneMap:
    """tau -> tau' map of one zone plus the derived quantities."""

    def __init__(self, sigma, ctx: DcfContext):
        self.sigma = list(sigma)
        self.ctx = ctx

    def derived(self, tau):
        ctx = self.ctx
        p_tr, p_s = zone_probabilities(tau)
        E = expected_slot(p_tr, p_s, ctx.t_s, ctx.t_c, ctx.params.slot)
        p_c = [collision_prob(tau, k) for k in range(len(tau))]
        p = [1.0 - (1.0 - ctx.p_e) * (1.0 - c) for c in p_c]
        u = [math.exp(-s * E) for s in self.sigma]
        q = [-math.expm1(-s * E) for s in self.sigma]
        return p_tr, p_s, E, p_c, p, q, u

    def __call__(self, tau):
        _, _, _, _, p, q, u = self.derived(tau)
        W0, H = self.ctx.params.W0, self.ctx.params.H
        return [tau_of(qk, pk, W0, H, uk) for qk, pk, uk in zip(q, p, u)]


def solve_zone(zone: int, radios: Sequence[int], sigma: Sequence[float],
               ctx: DcfContext, tau0: Sequence[float] | None = None) -> ZoneSolution:
    """Damped Picard iteration on tau with a root-finder fallback.

    ``tau0`` warm-starts the iteration, e.g. from a nearby load.
    """
    opts = ctx.options
    fmap = _ZoneMap(sigma, ctx)
    n = len(sigma)
    W0, H = ctx.params.W0, ctx.params.H

    if all(s == 0 for s in sigma):
        tau = [0.0] * n
        iterations, method = 0, "idle"
    else:
        if tau0 is not None and len(tau0) == n:
            tau = [t if s > 0 else 0.0 for t, s in zip(tau0, sigma)]
        else:
            q0 = [0.1 if s > 0 else 0.0 for s in sigma]
            tau = [tau_of(qk, ctx.p_e, W0, H) for qk in q0]
        damping = opts.damping
        best = math.inf
        stall = 0
        method = "picard"
        iterations = 0
        converged = False
        while iterations < opts.max_iter:
            iterations += 1
            new = fmap(tau)
            err = max(_rel(a, b) for a, b in zip(tau, new))
            if err < opts.rel_tol or max(abs(a - b) for a, b in zip(tau, new)) < 1e-300:
                tau = new
                converged = True
                break
            tau = [(1 - damping) * a + damping * b for a, b in zip(tau, new)]
            if err < best * 0.999:
                best, stall = err, 0
            else:
                stall += 1
                if stall > 50:
                    damping *= 0.5
                    stall = 0
                    if damping < 1e-3:
                        break
        if not converged:
            method = "root"
            sol = optimize.root(lambda t: np.array(fmap(list(t))) - t,
                                np.array(tau), method="hybr", tol=1e-15)
            tau = [float(t) for t in sol.x]
    p_tr, p_s, E, p_c, p, q, u = fmap.derived(tau)
    new = fmap(tau)
    res_tau = max((_rel(a, b) for a, b in zip(tau, new)), default=0.0)
    # the q, p and E relations hold by construction of ``derived``; recheck them
    res_q = max((_rel(1 - qk, math.exp(-s * E)) for qk, s in zip(q, sigma)),
                default=0.0)
    res_p = max((_rel(1 - pk, (1 - ctx.p_e) * (1 - c)) for pk, c in zip(p, p_c)),
                default=0.0)
    res_E = _rel(E, expected_slot(p_tr, p_s, ctx.t_s, ctx.t_c, ctx.params.slot))
    if res_tau > 1e-9 or not all(0.0 <= t <= 1.0 for t in tau):
        raise NonConvergence(zone, res_tau, iterations)
    return ZoneSolution(
        zone=zone,
        radios=tuple(radios),
        sigma=tuple(sigma),
        q=tuple(q),
        p=tuple(p),
        p_c=tuple(p_c),
        tau=tuple(tau),
        E=E,
        p_tr=p_tr,
        p_s=p_s,
        t_s=ctx.t_s,
        t_c=ctx.t_c,
        residuals=(res_q, res_p, res_tau, res_E),
        iterations=iterations,
        method=method,
    )


@dataclass(frozen=True)
class DcfSolution:
    zones: Mapping[int, ZoneSolution]
    radio_zone: Mapping[int, int]

    def radio(self, rid: int) -> dict:
        zs = self.zones[self.radio_zone[rid]]
        k = zs.radios.index(rid)
        return {
            "q": zs.q[k], "p": zs.p[k], "p_c": zs.p_c[k], "tau": zs.tau[k],
            "E": zs.E, "sigma": zs.sigma[k],
        }

    @property
    def max_residual(self) -> float:
        return max((max(z.residuals) for z in self.zones.values()), default=0.0)


def solve_fixed_point(zones: Mapping[int, Sequence[int]],
                      sigma: Mapping[int, float], ctx: DcfContext) -> DcfSolution:
    """Solve every zone; zones couple only through the fixed loads ``sigma``."""
    out = {}
    radio_zone = {}
    for z, radios in zones.items():
        if any(sigma.get(r, 0.0) < 0 for r in radios):
            raise DcfError("negative load")
        out[z] = solve_zone(z, radios, [sigma.get(r, 0.0) for r in radios], ctx)
        for r in radios:
            radio_zone[r] = z
    return DcfSolution(out, radio_zone)
