"""Single-path routing over the fiber and wireless graph, and rate accounting.

A path is a node sequence plus, per hop, the element that transmits it: the
sending radio for a wireless hop, the ONU's upstream queue for a fiber hop to
the OLT, and the downstream queue of the destination ONU's channel for a fiber
hop from the OLT.  All searches break ties by fewer hops, then by the
lexicographically smallest node sequence.
"""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from .topology import Role, Topology
from .traffic import TrafficMatrix


class RoutingError(RuntimeError):
    pass


class HopKind(enum.Enum):
    WIRELESS = "wireless"
    FIBER_UP = "fiber-up"
    FIBER_DOWN = "fiber-down"


class Algorithm(enum.Enum):
    MIN_HOP = "min-hop"
    MIN_INTERFERENCE = "min-interference"
    MIN_DELAY = "min-delay"
    OFRA = "ofra"

    @classmethod
    def parse(cls, text: str) -> "Algorithm":
        key = text.strip().lower().replace("_", "-")
        for a in cls:
            if a.value == key:
                return a
        raise RoutingError(f"unknown routing algorithm {text!r}")


# element keys: ("r", radio id), ("u", onu), ("d", onu)
Element = tuple


@dataclass(frozen=True)
class Hop:
    kind: HopKind
    src: int
    dst: int
    element: Element


@dataclass(frozen=True)
class Path:
    nodes: tuple[int, ...]
    hops: tuple[Hop, ...]

    @property
    def wireless_hops(self) -> int:
        return sum(1 for h in self.hops if h.kind is HopKind.WIRELESS)

    @property
    def fiber_hops(self) -> int:
        return len(self.hops) - self.wireless_hops

    @property
    def radios(self) -> tuple[int, ...]:
        return tuple(h.element[1] for h in self.hops if h.kind is HopKind.WIRELESS)

    @property
    def elements(self) -> tuple[Element, ...]:
        return tuple(h.element for h in self.hops)

    def fiber_segment(self) -> tuple[int, int] | None:
        """(entry, exit) PON endpoints of the fiber part, OLT = 0."""
        fiber = [h for h in self.hops if h.kind is not HopKind.WIRELESS]
        if not fiber:
            return None
        return fiber[0].src, fiber[-1].dst


class RoutingGraph:
    """Directed adjacency of the failure-reduced topology."""

    def __init__(self, topology: Topology, pon_pairs_fiber_only: bool = True):
        self.topology = topology
        self.pon_pairs_fiber_only = pon_pairs_fiber_only
        adj: dict[int, list[tuple[int, Hop]]] = {}
        alive = [n.nid for n in topology.nodes if topology.is_alive(n.nid)]
        for nid in alive:
            adj[nid] = []
        for zone, members in sorted(topology.zones.items()):
            for rid in members:
                u = topology.radios[rid].owner
                for other in members:
                    v = topology.radios[other].owner
                    if v == u:
                        continue
                    # neighbours sharing several zones use the lowest zone id
                    if any(w == v for w, _ in adj[u]):
                        continue
                    adj[u].append((v, Hop(HopKind.WIRELESS, u, v, ("r", rid))))
        for o in sorted(topology.fiber_onus):
            adj[o].append((0, Hop(HopKind.FIBER_UP, o, 0, ("u", o))))
            adj[0].append((o, Hop(HopKind.FIBER_DOWN, 0, o, ("d", o))))
        for nid in adj:
            adj[nid].sort(key=lambda e: e[0])
        self.adj = adj
        self.optical = {0} | set(topology.fiber_onus)

    def can_relay(self, nid: int) -> bool:
        return self.topology.nodes[nid].role is not Role.STA

    def fiber_only(self, src: int, dst: int) -> bool:
        # traffic between PON endpoints never detours through the mesh
        return (self.pon_pairs_fiber_only
                and src in self.optical and dst in self.optical)


Weight = Callable[[Hop], float]


def _additive_search(graph: RoutingGraph, src: int, dst: int,
                     weight: Weight) -> Path | None:
    """Dijkstra on the key (cost, hops, node sequence)."""
    fiber_only = graph.fiber_only(src, dst)
    heap = [(0.0, 0, (src,), ())]
    done = set()
    while heap:
        cost, nh, nodes, hops = heapq.heappop(heap)
        u = nodes[-1]
        if u in done:
            continue
        done.add(u)
        if u == dst:
            return Path(nodes, hops)
        if u != src and not graph.can_relay(u):
            continue
        for v, hop in graph.adj.get(u, ()):
            if v in done or v in nodes:
                continue
            if fiber_only and hop.kind is HopKind.WIRELESS:
                continue
            w = weight(hop)
            if not math.isfinite(w):
                continue
            heapq.heappush(heap, (cost + w, nh + 1, nodes + (v,), hops + (hop,)))
    return None


def _dominates(a, b) -> bool:
    return (a[0] <= b[0] and a[1] <= b[1] and a[2] <= b[2]
            and (a[0] < b[0] or a[2] < b[2] or a[3] <= b[3]))


def _sum_max_search(graph: RoutingGraph, src: int, dst: int,
                    weight: Weight) -> Path | None:
    """Minimise sum + max of hop weights by Pareto label setting.

    Labels are (sum, max, hops, nodes, hops); the heap is ordered by the
    objective, so the first label popped at ``dst`` is optimal.
    """
    fiber_only = graph.fiber_only(src, dst)
    labels: dict[int, list] = {src: []}
    heap = [(0.0, 0, (src,), 0.0, 0.0, ())]
    while heap:
        _, nh, nodes, s, m, hops = heapq.heappop(heap)
        u = nodes[-1]
        if u == dst:
            return Path(nodes, hops)
        if u != src and not graph.can_relay(u):
            continue
        for v, hop in graph.adj.get(u, ()):
            if v in nodes:
                continue
            if fiber_only and hop.kind is HopKind.WIRELESS:
                continue
            w = weight(hop)
            if not math.isfinite(w):
                continue
            cand = (s + w, max(m, w), nh + 1, nodes + (v,))
            here = labels.setdefault(v, [])
            if any(_dominates(old, cand) for old in here):
                continue
            here[:] = [old for old in here if not _dominates(cand, old)]
            here.append(cand)
            heapq.heappush(heap, (cand[0] + cand[1], nh + 1, cand[3],
                                  cand[0], cand[1], hops + (hop,)))
    return None


def _unit(hop: Hop) -> float:
    return 1.0


def _wireless_unit(hop: Hop) -> float:
    return 1.0 if hop.kind is HopKind.WIRELESS else 0.0


def shortest_path(graph: RoutingGraph, src: int, dst: int,
                  weight: Weight = _unit) -> Path | None:
    return _additive_search(graph, src, dst, weight)


def sum_max_path(graph: RoutingGraph, src: int, dst: int,
                 weight: Weight) -> Path | None:
    return _sum_max_search(graph, src, dst, weight)


# ---------------------------------------------------------------------------
# load accounting

class Loads:
    """Mutable per-element loads implied by a path assignment (frames/s)."""

    def __init__(self, topology: Topology):
        self.topology = topology
        self.radio_frames = np.zeros(len(topology.radios))
        self.fiber = np.zeros((topology.n_onus + 1, topology.n_onus + 1))
        self.mpp_inflow = np.zeros(topology.n_onus + 1)

    def add(self, path: Path, rate: float, sign: float = 1.0) -> None:
        r = sign * rate
        for h in path.hops:
            if h.kind is HopKind.WIRELESS:
                self.radio_frames[h.element[1]] += r
        seg = path.fiber_segment()
        if seg is not None:
            a, b = seg
            self.fiber[a, b] += r
            if b != 0 and path.nodes[-1] != b:
                self.mpp_inflow[b] += r

    def move(self, old: Path, new: Path, rate: float) -> None:
        self.add(old, rate, -1.0)
        self.add(new, rate)
        # cancel round-off so idle elements read exactly zero
        self.radio_frames[np.abs(self.radio_frames) < 1e-9 * max(rate, 1.0)] = 0.0
        self.fiber[np.abs(self.fiber) < 1e-9 * max(rate, 1.0)] = 0.0
        self.mpp_inflow[np.abs(self.mpp_inflow) < 1e-9 * max(rate, 1.0)] = 0.0


@dataclass(frozen=True)
class RoutingOutcome:
    paths: Mapping[tuple[int, int], Path]
    rates: Mapping[tuple[int, int], float]          # S_ij, frames/s
    gamma: Mapping[tuple[int, int], float]          # fiber share per pair
    gamma_wireless: Mapping[tuple[int, int], float]
    sigma: Mapping[int, float]                      # aggregates/s per radio
    sigma_frames: Mapping[int, float]
    fiber_matrix: np.ndarray                        # PON endpoint rates
    mpp_inflow: Mapping[int, float]                 # fiber -> mesh, frames/s
    n_frames: int
    dropped: float = 0.0                            # traffic of failed nodes
    rho: Mapping = field(default_factory=dict)      # per-node intensity

    @property
    def flows(self) -> list[tuple[float, tuple[int, ...]]]:
        """(wireless rate in aggregates/s, radios) for every routed pair."""
        return [(self.gamma_wireless[k] / self.n_frames, p.radios)
                for k, p in self.paths.items()]

    def wireless_share(self) -> float:
        """Fraction of routed traffic that never touches the fiber."""
        total = sum(self.rates.values())
        if total <= 0:
            return 0.0
        mesh = sum(s for k, s in self.rates.items()
                   if self.paths[k].fiber_hops == 0)
        return mesh / total


def routable_pairs(topology: Topology, matrix: TrafficMatrix):
    """Pairs with traffic, minus those touching failed nodes, and the loss."""
    keep, lost = [], 0.0
    for i, j, s in matrix.pairs():
        if topology.is_alive(i) and topology.is_alive(j):
            keep.append((i, j, s))
        else:
            lost += s
    return keep, lost


def derive_rates(topology: Topology, paths: Mapping[tuple[int, int], Path],
                 matrix: TrafficMatrix, n_frames: int,
                 dropped: float = 0.0) -> RoutingOutcome:
    if n_frames < 1:
        raise RoutingError("frames per aggregate must be >= 1")
    loads = Loads(topology)
    rates, gamma, gamma_w = {}, {}, {}
    for (i, j), path in paths.items():
        s = float(matrix.rates[i, j])
        rates[(i, j)] = s
        loads.add(path, s)
        gamma[(i, j)] = s if path.fiber_hops else 0.0
        gamma_w[(i, j)] = s if path.wireless_hops else 0.0
    return outcome_from_loads(topology, paths, rates, gamma, gamma_w, loads,
                              n_frames, dropped)


def outcome_from_loads(topology, paths, rates, gamma, gamma_w, loads: Loads,
                       n_frames: int, dropped: float = 0.0) -> RoutingOutcome:
    frames = {r.rid: float(loads.radio_frames[r.rid]) for r in topology.radios}
    return RoutingOutcome(
        paths=dict(paths),
        rates=dict(rates),
        gamma=dict(gamma),
        gamma_wireless=dict(gamma_w),
        sigma={rid: f / n_frames for rid, f in frames.items()},
        sigma_frames=frames,
        fiber_matrix=loads.fiber.copy(),
        mpp_inflow={o: float(loads.mpp_inflow[o]) for o in topology.onus()},
        n_frames=n_frames,
        dropped=dropped,
    )


def _assign(topology: Topology, matrix: TrafficMatrix, weight: Weight,
            graph: RoutingGraph | None = None):
    graph = graph or RoutingGraph(topology)
    pairs, lost = routable_pairs(topology, matrix)
    paths = {}
    for i, j, _ in pairs:
        p = shortest_path(graph, i, j, weight)
        if p is None:
            raise RoutingError(
                f"no route from {topology.name(i)} to {topology.name(j)}")
        paths[(i, j)] = p
    return graph, pairs, paths, lost


def min_hop(topology: Topology, matrix: TrafficMatrix, n_frames: int = 1,
            graph: RoutingGraph | None = None) -> RoutingOutcome:
    _, _, paths, lost = _assign(topology, matrix, _unit, graph)
    return derive_rates(topology, paths, matrix, n_frames, lost)


def min_interference(topology: Topology, matrix: TrafficMatrix,
                     n_frames: int = 1,
                     graph: RoutingGraph | None = None) -> RoutingOutcome:
    _, _, paths, lost = _assign(topology, matrix, _wireless_unit, graph)
    return derive_rates(topology, paths, matrix, n_frames, lost)


def greedy_order(pairs: Iterable[tuple[int, int, float]]):
    return sorted(pairs, key=lambda t: (-t[2], t[0], t[1]))


def greedy_reroute(topology: Topology, matrix: TrafficMatrix, n_frames: int,
                   snapshot: Callable[[Loads], object],
                   search: Callable[[RoutingGraph, int, int, float, Path, object],
                                    Path | None],
                   graph: RoutingGraph | None = None) -> RoutingOutcome:
    """Min-hop start, then one sweep reassigning each pair in turn.

    ``snapshot`` turns the current loads into whatever ``search`` needs; it
    is refreshed after every reassignment.
    """
    graph, pairs, paths, lost = _assign(topology, matrix, _unit, graph)
    loads = Loads(topology)
    for i, j, s in pairs:
        loads.add(paths[(i, j)], s)
    state = snapshot(loads)
    for i, j, s in greedy_order(pairs):
        old = paths[(i, j)]
        new = search(graph, i, j, s, old, state)
        if new is None or new.nodes == old.nodes:
            continue
        paths[(i, j)] = new
        loads.move(old, new, s)
        state = snapshot(loads)
    rates = {(i, j): s for i, j, s in pairs}
    gamma = {k: (rates[k] if p.fiber_hops else 0.0) for k, p in paths.items()}
    gamma_w = {k: (rates[k] if p.wireless_hops else 0.0) for k, p in paths.items()}
    return outcome_from_loads(topology, paths, rates, gamma, gamma_w, loads,
                              n_frames, lost)
