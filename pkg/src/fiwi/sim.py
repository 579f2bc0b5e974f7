"""Discrete-event simulator of the FiWi network, used to check the analysis.

Wireless zones run slotted CSMA/CA with binary exponential backoff,
post-backoff and frozen counters while the medium is busy.  An aggregate of
``n`` frames is the unit of transmission; corrupted aggregates are repeated
from stage 0, collided ones move one backoff stage up.  The PON upstream is
gated interleaved polling per channel, the downstream a FIFO per channel.

Flows that use the mesh generate Poisson batches of ``n`` frames at rate
S/n; pure fiber flows generate single frames.  A batch that crosses the fiber
is split into frames and re-assembled at the egress ONU before it continues.
"""

from __future__ import annotations

import heapq
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import stats

from .aggregation import AggregationConfig, Scheme, frames_per_aggregate
from .dcf import Access, DcfParams
from .routing import HopKind, Path, RoutingOutcome
from .topology import PonKind, Topology, sector_of
from .traffic import FrameLengthDist, TrafficMatrix


class SimError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    topology: Topology
    matrix: TrafficMatrix
    outcome: RoutingOutcome
    params: DcfParams = field(default_factory=DcfParams)
    aggregation: AggregationConfig = field(default_factory=AggregationConfig.amsdu)
    frames: FrameLengthDist = field(
        default_factory=lambda: FrameLengthDist.point(1500 * 8))
    ber: float = 1e-6
    duration: float = 60.0
    warmup: float = 10.0
    replications: int = 20
    seed: int = 1
    # draw a fresh backoff when a frame finds an idle radio (no post-backoff)
    backoff_on_arrival: bool = False
    # cap on simulated time spent draining queues after ``duration``
    drain: float = 5.0

    def __post_init__(self):
        if not self.duration > self.warmup >= 0:
            raise SimError("need duration > warmup >= 0")
        if self.replications < 1:
            raise SimError("need at least one replication")


@dataclass(frozen=True)
class ReplicationResult:
    D_u: float
    D_d: float
    D_wi: float
    D: float
    e2e: float
    throughput_bps: float
    generated: int
    delivered: int
    backlog: int
    attempts: Mapping[int, int]
    collisions: Mapping[int, int]
    samples: Mapping[str, int]


@dataclass(frozen=True)
class SimResult:
    D_u: float
    D_d: float
    D_wi: float
    D: float
    e2e: float
    throughput_bps: float
    ci: Mapping[str, float]
    collision_prob: Mapping[int, float]         # per radio
    zone_collision_prob: Mapping[int, float]
    replications: tuple[ReplicationResult, ...]
    seed: int

    @property
    def overloaded(self) -> bool:
        return any(r.backlog > 0 for r in self.replications)


class _Draws:
    """Buffered random numbers; numpy scalar calls are slow."""

    def __init__(self, rng: np.random.Generator, size: int = 8192):
        self.rng = rng
        self.size = size
        self._u = rng.random(size)
        self._iu = 0
        self._e = rng.standard_exponential(size)
        self._ie = 0

    def uniform(self) -> float:
        if self._iu == self.size:
            self._u = self.rng.random(self.size)
            self._iu = 0
        v = self._u[self._iu]
        self._iu += 1
        return float(v)

    def expo(self, rate: float) -> float:
        if self._ie == self.size:
            self._e = self.rng.standard_exponential(self.size)
            self._ie = 0
        v = self._e[self._ie]
        self._ie += 1
        return float(v) / rate

    def integer(self, n: int) -> int:
        return min(int(self.uniform() * n), n - 1)


class _Batch:
    __slots__ = ("flow", "bits", "born", "hop", "wireless", "pending", "t_enter")

    def __init__(self, flow, bits, born):
        self.flow = flow
        self.bits = bits            # list of frame lengths
        self.born = born
        self.hop = 0
        self.wireless = 0.0         # accumulated time in the mesh
        self.pending = 0            # frames still in the fiber
        self.t_enter = born


class _Radio:
    __slots__ = ("rid", "zone", "queue", "counter", "stage")

    def __init__(self, rid, zone):
        self.rid = rid
        self.zone = zone
        self.queue: list = []
        self.counter = 0
        self.stage = 0


class _Zone:
    __slots__ = ("zid", "radios", "busy", "idle_since", "version")

    def __init__(self, zid, radios):
        self.zid = zid
        self.radios = radios
        self.busy = False
        self.idle_since = 0.0
        self.version = 0


class _Onu:
    __slots__ = ("queue", "phase", "parked", "channel")

    def __init__(self, channel):
        self.queue: list = []       # (batch, bits, t_arrival, hop index)
        self.phase = 0.0            # ONU-side time of the last report
        self.parked = True
        self.channel = channel


# event kinds
_ARRIVAL, _ZONE_TX, _ZONE_IDLE, _REPORT, _UP_DONE, _DOWN_DONE, _HOP = range(7)


class _Replication:
    def __init__(self, cfg: SimConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.draw = _Draws(rng)
        topo = cfg.topology
        self.topo = topo
        p = cfg.params
        self.p = p
        self.slot = p.slot
        self.n = frames_per_aggregate(cfg.frames, cfg.aggregation)
        self.log_ok = math.log1p(-cfg.ber) if cfg.ber > 0 else 0.0
        self.events: list = []
        self.seq = 0
        self.now = 0.0

        self.radios = {r.rid: _Radio(r.rid, r.zone) for r in topo.radios
                       if r.zone in topo.zones and r.rid in topo.zones[r.zone]}
        self.zones = {z: _Zone(z, [self.radios[r] for r in members])
                      for z, members in topo.zones.items()}

        plant = topo.plant
        self.plant = plant
        if plant is not None:
            if plant.kind is PonKind.WR_MULTISTAGE:
                n_ch = plant.n_sectors
                self.ch_of = {o: sector_of(o, plant) - 1 for o in topo.onus()}
            else:
                n_ch = plant.channels
                self.ch_of = {o: 0 for o in topo.onus()}
            self.up_free = [0.0] * n_ch
            self.down_free = [0.0] * n_ch
            self.onus = {o: _Onu(self.ch_of[o]) for o in topo.onus()}

        self.lengths = np.asarray(cfg.frames.lengths, dtype=float)
        self.cdf = np.cumsum(cfg.frames.probs)
        self.flows = []
        for key, path in cfg.outcome.paths.items():
            s = float(cfg.matrix.rates[key])
            if s <= 0:
                continue
            size = self.n if path.wireless_hops else 1
            self.flows.append((key, path, s / size, size))

        # statistics
        self.sum = {"up": 0.0, "down": 0.0, "wi": 0.0, "e2e": 0.0}
        self.cnt = {"up": 0, "down": 0, "wi": 0, "e2e": 0}
        self.generated = 0
        self.delivered = 0
        self.attempts = {rid: 0 for rid in self.radios}
        self.collisions = {rid: 0 for rid in self.radios}

    # -- helpers ------------------------------------------------------------
    def push(self, t, kind, *payload):
        self.seq += 1
        heapq.heappush(self.events, (t, self.seq, kind, payload))

    def frame_bits(self) -> float:
        if len(self.lengths) == 1:
            return float(self.lengths[0])
        k = int(np.searchsorted(self.cdf, self.draw.uniform(), side="right"))
        return float(self.lengths[min(k, len(self.lengths) - 1)])

    def counted(self, batch) -> bool:
        return self.cfg.warmup <= batch.born <= self.cfg.duration

    def window(self, stage: int) -> int:
        return (2 ** min(stage, self.p.H)) * self.p.W0

    # -- durations -----------------------------------------------------------
    def _payload(self, bits: float) -> float:
        p = self.p
        if self.cfg.aggregation.scheme is Scheme.A_MSDU:
            return (p.mac_header + bits + p.fcs) / p.rate
        return bits / p.rate

    def t_success(self, bits: float) -> float:
        p, d, r = self.p, self.p.prop_delay, self.p.rate
        if p.access is Access.BASIC:
            theta = p.difs + p.phy_header + p.sifs + d + p.ack / r + d
        else:
            theta = (p.difs + p.rts / r + p.sifs + d + p.cts / r + p.sifs + d
                     + p.phy_header + p.sifs + d + p.ack / r + d)
        return theta + self._payload(bits)

    def t_collision(self, longest_bits: float) -> float:
        p, d, r = self.p, self.p.prop_delay, self.p.rate
        if p.access is Access.BASIC:
            return p.phy_header + p.difs + d + self._payload(longest_bits)
        return p.rts / r + p.difs + d

    def corrupted(self, bits_list) -> bool:
        if self.log_ok == 0.0:
            return False
        agg = self.cfg.aggregation
        extra = agg.mac_header_bits + agg.fcs_bits
        if agg.scheme is Scheme.A_MSDU:
            ok = math.exp((sum(bits_list) + extra) * self.log_ok)
            return self.draw.uniform() >= ok
        # A-MPDU: lost only if every MPDU is hit
        return all(self.draw.uniform() >= math.exp((b + extra) * self.log_ok)
                   for b in bits_list)

    # -- wireless MAC ----------------------------------------------------------
    def advance(self, zone: _Zone, t: float):
        # the tolerance absorbs round-off in idle_since after long idle spells
        k = int((t - zone.idle_since) / self.slot + 1e-6)
        if k > 0:
            for r in zone.radios:
                r.counter = max(r.counter - k, 0)
            zone.idle_since += k * self.slot

    def schedule_zone(self, zone: _Zone):
        if zone.busy:
            return
        best = math.inf
        for r in zone.radios:
            if r.queue:
                t = zone.idle_since + r.counter * self.slot
                if t < self.now - 1e-12:
                    # next slot boundary strictly after now
                    k = math.floor((self.now - zone.idle_since) / self.slot + 1e-6) + 1
                    t = zone.idle_since + k * self.slot
                best = min(best, t)
        zone.version += 1
        if best < math.inf:
            self.push(best, _ZONE_TX, zone.zid, zone.version)

    def radio_enqueue(self, rid: int, batch: _Batch):
        radio = self.radios[rid]
        zone = self.zones[radio.zone]
        was_empty = not radio.queue
        radio.queue.append(batch)
        batch.t_enter = self.now
        if not was_empty:
            return
        if zone.busy:
            if radio.counter == 0:
                radio.counter = self.draw.integer(self.window(radio.stage))
            return
        self.advance(zone, self.now)
        if self.cfg.backoff_on_arrival and radio.counter == 0:
            radio.counter = self.draw.integer(self.window(radio.stage))
        self.schedule_zone(zone)

    def zone_tx(self, zid, version):
        zone = self.zones[zid]
        if version != zone.version or zone.busy:
            return
        self.advance(zone, self.now)
        tx = [r for r in zone.radios if r.queue and r.counter == 0]
        if not tx:
            self.schedule_zone(zone)
            return
        zone.busy = True
        for r in tx:
            self.attempts[r.rid] += 1
        if len(tx) == 1:
            r = tx[0]
            batch = r.queue[0]
            dur = self.t_success(sum(batch.bits))
            if self.corrupted(batch.bits):
                r.stage = 0
            else:
                r.queue.pop(0)
                r.stage = 0
                batch.wireless += self.now + dur - batch.t_enter
                self.push(self.now + dur, _HOP, batch)
            r.counter = self.draw.integer(self.window(r.stage))
        else:
            longest = max(sum(r.queue[0].bits) for r in tx)
            dur = self.t_collision(longest)
            for r in tx:
                self.collisions[r.rid] += 1
                r.stage += 1
                r.counter = self.draw.integer(self.window(r.stage))
        self.push(self.now + dur, _ZONE_IDLE, zid)

    def zone_idle(self, zid):
        zone = self.zones[zid]
        zone.busy = False
        zone.idle_since = self.now
        self.schedule_zone(zone)

    # -- PON -------------------------------------------------------------------
    def psi(self, onu: int) -> float:
        plant = self.plant
        return plant.propagation[self.ch_of[onu] if plant.kind is PonKind.WR_MULTISTAGE else 0]

    def rate(self, onu: int) -> float:
        plant = self.plant
        return plant.rates[self.ch_of[onu] if plant.kind is PonKind.WR_MULTISTAGE else 0]

    def upstream_enqueue(self, onu: int, batch: _Batch, bits: float, idx: int):
        o = self.onus[onu]
        o.queue.append((batch, bits, self.now, idx))
        if o.parked:
            # idle ONUs report every 2 psi; wake at the next report instant
            cycle = 2 * self.psi(onu)
            send = self.now
            if cycle > 0:
                k = math.ceil((self.now - o.phase) / cycle - 1e-12)
                send = o.phase + max(k, 0) * cycle
            o.parked = False
            self.push(send + self.psi(onu), _REPORT, onu, send)

    def report(self, onu, sent_at):
        """A REPORT sent by the ONU at ``sent_at`` reaches the OLT (gated)."""
        o = self.onus[onu]
        psi = self.psi(onu)
        count = 0
        for entry in o.queue:
            if entry[2] > sent_at:
                break
            count += 1
        if count == 0:
            if not o.queue:
                o.parked = True
                o.phase = sent_at
                return
            # zero grant: the next report follows one round trip later
            nxt = sent_at + 2 * psi
            self.push(nxt + psi, _REPORT, onu, nxt)
            return
        frames = o.queue[:count]
        del o.queue[:count]
        c = self.rate(onu)
        dur = sum(f[1] for f in frames) / c
        if self.plant.kind is PonKind.WR_MULTISTAGE or self.plant.channels == 1:
            ch = o.channel
        else:
            ch = min(range(len(self.up_free)), key=lambda k: (self.up_free[k], k))
        start = max(self.now + 2 * psi, self.up_free[ch])
        self.up_free[ch] = start + dur
        t = start
        for batch, bits, t_arr, idx in frames:
            t += bits / c
            self.push(t, _UP_DONE, batch, bits, t_arr, idx)
        # the next report leaves the ONU right after its burst
        self.push(start + dur, _REPORT, onu, start + dur - psi)

    def up_done(self, batch, bits, t_arr, idx):
        if self.counted(batch):
            self.sum["up"] += self.now - t_arr
            self.cnt["up"] += 1
        nxt = idx + 1
        if nxt == len(batch.flow[1].hops):
            self.frame_delivered(batch)
        else:
            self.downstream(batch, bits, nxt)

    def downstream(self, batch, bits, idx):
        plant = self.plant
        onu = batch.flow[1].hops[idx].dst
        c, psi = self.rate(onu), self.psi(onu)
        if plant.kind is PonKind.WR_MULTISTAGE or plant.channels == 1:
            ch = self.ch_of[onu]
        else:
            ch = min(range(len(self.down_free)), key=lambda k: (self.down_free[k], k))
        start = max(self.now, self.down_free[ch])
        self.down_free[ch] = start + bits / c
        self.push(start + bits / c + psi, _DOWN_DONE, batch, idx, self.now)

    def down_done(self, batch, idx, t_arr):
        if self.counted(batch):
            self.sum["down"] += self.now - t_arr
            self.cnt["down"] += 1
        nxt = idx + 1
        if nxt == len(batch.flow[1].hops):
            self.frame_delivered(batch)
            return
        batch.pending -= 1
        if batch.pending == 0:
            # the whole batch is back together at the egress ONU
            batch.hop = nxt
            self.forward(batch)

    # -- flow plumbing ---------------------------------------------------------
    def frame_delivered(self, batch):
        self.delivered += 1
        batch.pending -= 1
        if self.counted(batch):
            self.sum["e2e"] += self.now - batch.born
            self.cnt["e2e"] += 1
            if batch.pending == 0 and batch.flow[1].wireless_hops:
                self.sum["wi"] += batch.wireless
                self.cnt["wi"] += 1

    def batch_delivered(self, batch):
        self.delivered += len(batch.bits)
        if self.counted(batch):
            self.sum["e2e"] += len(batch.bits) * (self.now - batch.born)
            self.cnt["e2e"] += len(batch.bits)
            self.sum["wi"] += batch.wireless
            self.cnt["wi"] += 1

    def forward(self, batch: _Batch):
        path: Path = batch.flow[1]
        if batch.hop == len(path.hops):
            self.batch_delivered(batch)
            return
        hop = path.hops[batch.hop]
        if hop.kind is HopKind.WIRELESS:
            self.radio_enqueue(hop.element[1], batch)
            return
        # entering the fiber: split into frames
        batch.pending = len(batch.bits)
        if hop.kind is HopKind.FIBER_UP:
            for bits in batch.bits:
                self.upstream_enqueue(hop.src, batch, bits, batch.hop)
        else:
            for bits in batch.bits:
                self.downstream(batch, bits, batch.hop)

    def arrival(self, k):
        key, path, rate, size = self.flows[k]
        if self.now <= self.cfg.duration:
            self.push(self.now + self.draw.expo(rate), _ARRIVAL, k)
        else:
            return
        batch = _Batch((key, path), [self.frame_bits() for _ in range(size)],
                       self.now)
        self.generated += size
        self.forward(batch)

    # -- main loop ---------------------------------------------------------
    def run(self) -> ReplicationResult:
        for k, (_, _, rate, _) in enumerate(self.flows):
            self.push(self.draw.expo(rate), _ARRIVAL, k)
        horizon = self.cfg.duration + self.cfg.drain
        ev = self.events
        while ev:
            t, _, kind, payload = heapq.heappop(ev)
            if t > horizon:
                break
            self.now = t
            if kind == _ARRIVAL:
                self.arrival(*payload)
            elif kind == _ZONE_TX:
                self.zone_tx(*payload)
            elif kind == _ZONE_IDLE:
                self.zone_idle(*payload)
            elif kind == _HOP:
                batch = payload[0]
                batch.hop += 1
                self.forward(batch)
            elif kind == _REPORT:
                self.report(*payload)
            elif kind == _UP_DONE:
                self.up_done(*payload)
            elif kind == _DOWN_DONE:
                self.down_done(*payload)
        # anything left once arrivals stop is backlog
        backlog = sum(len(r.queue) for r in self.radios.values())
        if self.plant is not None:
            backlog += sum(len(o.queue) for o in self.onus.values())

        def mean(key):
            return self.sum[key] / self.cnt[key] if self.cnt[key] else 0.0

        span = self.cfg.duration - self.cfg.warmup
        mean_bits = float(np.dot(self.cfg.frames.lengths, self.cfg.frames.probs))
        d_u, d_d, d_wi = mean("up"), mean("down"), mean("wi")
        return ReplicationResult(
            D_u=d_u, D_d=d_d, D_wi=d_wi, D=d_u + d_d + d_wi, e2e=mean("e2e"),
            throughput_bps=self.cnt["e2e"] * mean_bits / span,
            generated=self.generated, delivered=self.delivered, backlog=backlog,
            attempts=dict(self.attempts), collisions=dict(self.collisions),
            samples=dict(self.cnt),
        )


def _half_width(values) -> float:
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return 0.0
    return float(stats.t.ppf(0.975, len(values) - 1)
                 * values.std(ddof=1) / math.sqrt(len(values)))


def run_replication(cfg: SimConfig, index: int) -> ReplicationResult:
    child = np.random.SeedSequence(cfg.seed).spawn(index + 1)[index]
    rng = np.random.Generator(np.random.Philox(child))
    return _Replication(cfg, rng).run()


def run_sim(cfg: SimConfig, workers: int | None = None) -> SimResult:
    """Run all replications; ``workers`` > 1 spreads them over processes.

    Each replication owns its substream, so the result does not depend on
    the number of workers.  Defaults to the FIWI_WORKERS environment value.
    """
    if workers is None:
        workers = int(os.environ.get("FIWI_WORKERS", "1") or 1)
    idx = range(cfg.replications)
    if workers > 1 and cfg.replications > 1:
        with ProcessPoolExecutor(min(workers, cfg.replications)) as pool:
            reps = tuple(pool.map(run_replication, [cfg] * len(idx), idx))
    else:
        reps = tuple(run_replication(cfg, k) for k in idx)
    keys = ("D_u", "D_d", "D_wi", "D", "e2e", "throughput_bps")
    means = {k: float(np.mean([getattr(r, k) for r in reps])) for k in keys}
    ci = {k: _half_width([getattr(r, k) for r in reps]) for k in keys}
    att, col = {}, {}
    for r in reps:
        for rid, a in r.attempts.items():
            att[rid] = att.get(rid, 0) + a
            col[rid] = col.get(rid, 0) + r.collisions[rid]
    per_radio = {rid: col[rid] / att[rid] for rid in att if att[rid]}
    per_zone = {}
    for z, members in cfg.topology.zones.items():
        a = sum(att.get(rid, 0) for rid in members)
        if a:
            per_zone[z] = sum(col.get(rid, 0) for rid in members) / a
    return SimResult(
        D_u=means["D_u"], D_d=means["D_d"], D_wi=means["D_wi"], D=means["D"],
        e2e=means["e2e"], throughput_bps=means["throughput_bps"], ci=ci,
        collision_prob=per_radio, zone_collision_prob=per_zone,
        replications=reps, seed=cfg.seed,
    )
