"""End-to-end pipeline: route, solve the fiber and mesh models, compose delays."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from . import pon
from .aggregation import (AggregationConfig, aggregate_distribution,
                          aggregate_error_prob)
from .dcf import (Access, DcfContext, DcfParams, SolverOptions, ZoneSolution,
                  slot_durations, solve_zone)
from .routing import (Algorithm, Hop, HopKind, Loads, Path, RoutingGraph,
                      RoutingOutcome, greedy_reroute, min_hop,
                      min_interference, shortest_path, sum_max_path)
from .topology import PonKind, Topology, sector_of
from .traffic import (FrameLengthDist, ScenarioSpec, TrafficMatrix,
                      dist_moments, generate_matrix)
from .wireless import (NodeDelay, Saturation, flow_correction, node_delay,
                       path_delay, sensing_delay, service_time_basic,
                       service_time_rtscts)

INF = float("inf")
# frames/s per source standing in for alpha -> 0
ZERO_LOAD_ALPHA = 1e-12


@dataclass(frozen=True)
class ModelConfig:
    params: DcfParams = field(default_factory=DcfParams)
    aggregation: AggregationConfig = field(default_factory=AggregationConfig.amsdu)
    frames: FrameLengthDist = field(
        default_factory=lambda: FrameLengthDist.point(1500 * 8))
    ber: float = 1e-6
    solver: SolverOptions = field(default_factory=SolverOptions)
    # OLT/ONU pairs with working fiber may not use the mesh
    pon_pairs_fiber_only: bool = True


@dataclass(frozen=True)
class ZoneDelays:
    solution: ZoneSolution
    d_ser: tuple[float, ...]
    d_sen: tuple[float, ...]


@dataclass
class State:
    """Analysis of one load snapshot."""

    zones: dict[int, ZoneDelays]
    nodes: dict[int, NodeDelay]            # per radio
    pon_load: pon.PonLoad | None
    pon_report: pon.PonDelayReport | None
    pon_verdict: pon.PonVerdict | None
    fiber_matrix: np.ndarray

    @property
    def wireless_stable(self) -> bool:
        return all(nd.stable for nd in self.nodes.values())

    @property
    def pon_stable(self) -> bool:
        return self.pon_verdict is None or self.pon_verdict.stable

    @property
    def stable(self) -> bool:
        return self.wireless_stable and self.pon_stable


class Engine:
    """Caches everything that depends only on topology and configuration."""

    def __init__(self, topology: Topology, config: ModelConfig | None = None):
        self.topology = topology
        self.config = config or ModelConfig()
        cfg = self.config
        self.agg = aggregate_distribution(cfg.frames, cfg.aggregation)
        self.n_frames = self.agg.n_frames
        self.p_e = aggregate_error_prob(cfg.frames, cfg.aggregation, cfg.ber,
                                        self.n_frames)
        self.t_s, self.t_c = slot_durations(cfg.params, self.agg)
        self.ctx = DcfContext(cfg.params, self.p_e, self.t_s, self.t_c, cfg.solver)
        self.mean, self.var = dist_moments(cfg.frames)
        self._zone_cache: dict = {}
        self._last_tau: dict = {}
        self.graph = RoutingGraph(topology, cfg.pon_pairs_fiber_only)

    # -- wireless ---------------------------------------------------------
    def zone(self, z: int, sigma: tuple[float, ...]) -> ZoneDelays:
        key = (z, sigma)
        hit = self._zone_cache.get(key)
        if hit is not None:
            return hit
        radios = self.topology.zones[z]
        sol = solve_zone(z, radios, sigma, self.ctx, self._last_tau.get(z))
        self._last_tau[z] = sol.tau
        params = self.config.params
        if params.access is Access.BASIC:
            d_ser = [service_time_basic(p, self.t_s, self.t_c, params)
                     for p in sol.p]
        else:
            d_ser = [service_time_rtscts(self.p_e, pc, self.t_s, self.t_c, params)
                     for pc in sol.p_c]
        d_sen = sensing_delay(sigma, d_ser)
        out = ZoneDelays(sol, tuple(d_ser), tuple(d_sen))
        if len(self._zone_cache) > 200_000:
            self._zone_cache.clear()
        self._zone_cache[key] = out
        return out

    def _mpp_correction(self, onu: int, inflow: float) -> float:
        plant = self.topology.plant
        if plant is None or inflow <= 0:
            return 0.0
        if plant.kind is PonKind.WR_MULTISTAGE:
            c = plant.rates[sector_of(onu, plant) - 1]
        else:
            c = plant.rates[0]
        rho = self.mean / c * inflow
        if rho >= 1:
            return 0.0
        return pon.pk_phi(rho, c, self.mean, self.var)

    # -- full snapshot ----------------------------------------------------
    def analyze(self, loads: Loads) -> State:
        topo = self.topology
        n = self.n_frames
        zones, nodes = {}, {}
        for z, radios in topo.zones.items():
            sigma = tuple(float(loads.radio_frames[r]) / n for r in radios)
            zd = self.zone(z, sigma)
            zones[z] = zd
            for k, rid in enumerate(radios):
                owner = topo.radios[rid].owner
                corr = 0.0
                if owner in topo.fiber_onus:
                    corr = self._mpp_correction(owner, float(loads.mpp_inflow[owner]))
                nodes[rid] = node_delay(sigma[k], zd.d_ser[k] + zd.d_sen[k], corr,
                                        d_ser=zd.d_ser[k], d_sen=zd.d_sen[k])
        load = report = verdict = None
        plant = topo.plant
        if plant is not None:
            load = pon.intensities(loads.fiber, plant, self.mean)
            verdict = pon.pon_stable(load)
            if verdict.stable:
                report = pon.delays(load, plant, self.mean, self.var)
        return State(zones, nodes, load, report, verdict, loads.fiber.copy())

    # -- per-element views used by the routing searches ---------------------
    def element_rho(self, state: State, element) -> float:
        kind, idx = element
        if kind == "r":
            nd = state.nodes.get(idx)
            return 0.0 if nd is None else nd.intensity
        plant = self.topology.plant
        lam = sector_of(idx, plant) - 1 if plant.kind is PonKind.WR_MULTISTAGE else 0
        return state.pon_load.up[lam] if kind == "u" else state.pon_load.down[lam]

    def element_delay(self, state: State, element) -> float:
        kind, idx = element
        if kind == "r":
            nd = state.nodes.get(idx)
            return INF if nd is None else nd.corrected
        rep = state.pon_report
        if rep is None:
            return INF
        plant = self.topology.plant
        lam = sector_of(idx, plant) - 1 if plant.kind is PonKind.WR_MULTISTAGE else 0
        return rep.up_sector[lam] if kind == "u" else rep.down_corrected[lam]

    def node_rho(self, state: State) -> dict[int, float]:
        """Largest element intensity per node (radios and the ONU/OLT queues)."""
        out: dict[int, float] = {}
        for rid, nd in state.nodes.items():
            owner = self.topology.radios[rid].owner
            out[owner] = max(out.get(owner, 0.0), nd.intensity)
        if state.pon_load is not None:
            for o in self.topology.fiber_onus:
                out[o] = max(out.get(o, 0.0), self.element_rho(state, ("u", o)))
            out[0] = max(state.pon_load.down + (0.0,))
        return out

    # -- routing ----------------------------------------------------------
    def route(self, matrix: TrafficMatrix, algorithm: Algorithm) -> RoutingOutcome:
        if algorithm is Algorithm.MIN_HOP:
            return min_hop(self.topology, matrix, self.n_frames, self.graph)
        if algorithm is Algorithm.MIN_INTERFERENCE:
            return min_interference(self.topology, matrix, self.n_frames,
                                    self.graph)
        if algorithm is Algorithm.MIN_DELAY:
            return min_delay(self.topology, matrix, self)
        if algorithm is Algorithm.OFRA:
            return ofra(self.topology, matrix, self)
        raise ValueError(algorithm)

    def loads_of(self, outcome: RoutingOutcome) -> Loads:
        loads = Loads(self.topology)
        for k, p in outcome.paths.items():
            loads.add(p, outcome.rates[k])
        return loads


def _delay_weight(engine: Engine, state: State, rate: float, current: Path):
    on_path = set(current.elements)
    agg_rate = rate / engine.n_frames

    def weight(hop: Hop) -> float:
        d = engine.element_delay(state, hop.element)
        if not math.isfinite(d):
            return INF
        if hop.kind is HopKind.WIRELESS and hop.element in on_path:
            nd = state.nodes[hop.element[1]]
            if agg_rate * nd.delta >= 1:
                return INF
            d = max(d - flow_correction(agg_rate, nd.delta), 0.0)
        return d
    return weight


def min_delay(topology: Topology, matrix: TrafficMatrix,
              engine: Engine) -> RoutingOutcome:
    """Greedy sweep assigning each pair its lowest-delay path under current loads."""

    def search(graph, i, j, rate, current, state):
        return shortest_path(graph, i, j, _delay_weight(engine, state, rate, current))

    return greedy_reroute(topology, matrix, engine.n_frames, engine.analyze, search,
                          engine.graph)


def ofra(topology: Topology, matrix: TrafficMatrix,
         engine: Engine) -> RoutingOutcome:
    """Greedy sweep minimising sum plus max of element intensities per path."""

    def search(graph, i, j, rate, current, state):
        return sum_max_path(graph, i, j,
                            lambda hop: engine.element_rho(state, hop.element))

    return greedy_reroute(topology, matrix, engine.n_frames, engine.analyze, search,
                          engine.graph)


# ---------------------------------------------------------------------------
# reports

@dataclass(frozen=True)
class DelayReport:
    alpha: float | None
    throughput_bps: float
    D_d: float | None
    D_u: float | None
    D_wi: float | None
    D: float | None
    stable: bool
    pon_stable: bool
    wireless_stable: bool
    offending: tuple[str, ...]
    rho: Mapping[int, float]
    max_rho_node: int | None
    max_rho: float
    D_wi_uncorrected: float | None = None
    D_d_uncorrected: float | None = None
    D_u_uncorrected: float | None = None
    max_residual: float = 0.0
    wireless_share: float = 0.0
    extrapolated: bool = False
    outcome: RoutingOutcome | None = field(default=None, compare=False, repr=False)
    state: State | None = field(default=None, compare=False, repr=False)

    def row(self) -> dict:
        def fmt(v):
            return "" if v is None else repr(float(v))
        return {
            "alpha": "" if self.alpha is None else repr(float(self.alpha)),
            "throughput_bps": repr(float(self.throughput_bps)),
            "D_d_s": fmt(self.D_d),
            "D_u_s": fmt(self.D_u),
            "D_wi_s": fmt(self.D_wi),
            "D_s": fmt(self.D),
            "stable": "1" if self.stable else "0",
            "max_rho_node_id": "" if self.max_rho_node is None else str(self.max_rho_node),
            "max_rho": repr(float(self.max_rho)),
        }


CSV_COLUMNS = ("alpha", "throughput_bps", "D_d_s", "D_u_s", "D_wi_s", "D_s",
               "stable", "max_rho_node_id", "max_rho")


def report_for(engine: Engine, outcome: RoutingOutcome,
               alpha: float | None = None) -> DelayReport:
    topo = engine.topology
    state = engine.analyze(engine.loads_of(outcome))
    rho = engine.node_rho(state)
    max_node = max(rho, key=lambda k: (rho[k], -k)) if rho else None
    max_rho = rho[max_node] if rho else 0.0
    offending = []
    for rid, nd in sorted(state.nodes.items()):
        if not nd.stable:
            offending.append(f"{topo.name(topo.radios[rid].owner)}/radio{rid}"
                             f" sigma*Delta={nd.intensity:.4g}")
    if state.pon_verdict is not None:
        offending.extend(f"PON {x}" for x in state.pon_verdict.offending)
    throughput = sum(outcome.rates.values()) * engine.mean
    residual = max((max(zd.solution.residuals) for zd in state.zones.values()),
                   default=0.0)
    common = dict(
        alpha=alpha, throughput_bps=throughput, rho=rho, max_rho_node=max_node,
        max_rho=max_rho, max_residual=residual,
        wireless_share=outcome.wireless_share(), outcome=outcome, state=state,
        pon_stable=state.pon_stable, wireless_stable=state.wireless_stable,
    )
    D_wi = D_wi_raw = None
    if state.wireless_stable:
        try:
            D_wi, D_wi_raw = path_delay(outcome.flows, state.nodes)
        except Saturation as exc:
            offending.append(f"flow {exc}")
    if not state.stable or D_wi is None:
        return DelayReport(D_d=None, D_u=None, D_wi=None, D=None, stable=False,
                           offending=tuple(offending), **common)
    D_d = D_u = D_d_raw = D_u_raw = 0.0
    extrapolated = False
    if state.pon_load is not None:
        rep = state.pon_report
        extrapolated = rep.extrapolated
        if sum(state.pon_load.down) > 0:
            D_d, D_d_raw = rep.D_d, rep.D_d_uncorrected
        if sum(state.pon_load.up) > 0:
            D_u, D_u_raw = rep.D_u, rep.D_u_uncorrected
    return DelayReport(
        D_d=D_d, D_u=D_u, D_wi=D_wi, D=D_d + D_u + D_wi, stable=True,
        offending=(), D_wi_uncorrected=D_wi_raw, D_d_uncorrected=D_d_raw,
        D_u_uncorrected=D_u_raw, extrapolated=extrapolated, **common)


def evaluate(topology: Topology, matrix: TrafficMatrix,
             algorithm: Algorithm | str = Algorithm.MIN_HOP,
             config: ModelConfig | None = None, *, engine: Engine | None = None,
             alpha: float | None = None) -> DelayReport:
    if isinstance(algorithm, str):
        algorithm = Algorithm.parse(algorithm)
    engine = engine or Engine(topology, config)
    outcome = engine.route(matrix, algorithm)
    return report_for(engine, outcome, alpha)


def evaluate_scenario(engine: Engine, scenario: ScenarioSpec,
                      algorithm: Algorithm) -> DelayReport:
    """Route and analyse one scenario.

    At alpha = 0 there is nothing to average over, so the row reports the
    zero-load limit instead: the scenario is evaluated at a vanishing rate,
    which keeps its traffic pattern as the weights.
    """
    if scenario.alpha == 0:
        probe = scenario.with_alpha(ZERO_LOAD_ALPHA)
        rep = report_for(engine, engine.route(generate_matrix(probe, engine.topology),
                                              algorithm), 0.0)
        return replace(rep, throughput_bps=0.0)
    matrix = generate_matrix(scenario, engine.topology)
    return report_for(engine, engine.route(matrix, algorithm), scenario.alpha)


def sweep(engine: Engine, scenario: ScenarioSpec, alphas: Sequence[float],
          algorithm: Algorithm) -> list[DelayReport]:
    alphas = list(alphas)
    if any(b < a for a, b in zip(alphas, alphas[1:])):
        raise ValueError("alpha grid must be non-decreasing")
    return [evaluate_scenario(engine, scenario.with_alpha(a), algorithm)
            for a in alphas]


@dataclass(frozen=True)
class Capacity:
    alpha: float
    throughput_bps: float
    report: DelayReport


def max_stable(engine: Engine, scenario: ScenarioSpec, algorithm: Algorithm,
               rel_tol: float = 1e-3, alpha_hi: float | None = None) -> Capacity:
    """Largest stable alpha by bisection, to relative width ``rel_tol``."""

    def probe(a):
        return evaluate_scenario(engine, scenario.with_alpha(a), algorithm)

    lo, hi = 0.0, alpha_hi
    lo_rep = probe(0.0)
    if hi is None:
        # grow from a small load until the network saturates
        a = 1.0
        while True:
            rep = probe(a)
            if not rep.stable:
                hi = a
                break
            lo, lo_rep = a, rep
            a *= 4.0
            if a > 1e12:
                raise RuntimeError("no saturation found")
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        rep = probe(mid)
        if rep.stable:
            lo, lo_rep = mid, rep
        else:
            hi = mid
    return Capacity(lo, lo_rep.throughput_bps, lo_rep)
