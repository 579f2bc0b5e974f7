"""FiWi network graph: PON fiber plant, wireless zones, radios and node roles.

Node ids follow a fixed layout: the OLT is 0, ONUs are 1..O, stations are
O+1..O+N and mesh points / access points come last.  Traffic matrices index
rows and columns by the first 1+O+N ids, so node ids double as matrix indices.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

FIBER_SPEED_M_S = 2e8  # light in glass, ~5 us/km


class TopologyError(ValueError):
    pass


class Role(enum.Enum):
    OLT = "OLT"
    ONU = "ONU"
    ONU_MPP = "ONU_MPP"
    MP_RELAY = "MP_RELAY"
    MAP = "MAP"
    STA = "STA"


class PonKind(enum.Enum):
    TDM = "TDM"
    WDM_BROADCAST = "WDM"
    WR_MULTISTAGE = "WR"

    @classmethod
    def parse(cls, text: str) -> "PonKind":
        key = text.strip().upper().replace("-", "_")
        aliases = {
            "TDM": cls.TDM,
            "WDM": cls.WDM_BROADCAST,
            "WDM_BROADCAST": cls.WDM_BROADCAST,
            "WR": cls.WR_MULTISTAGE,
            "WR_MULTISTAGE": cls.WR_MULTISTAGE,
        }
        try:
            return aliases[key]
        except KeyError:
            raise TopologyError(f"unknown PON kind {text!r}") from None


@dataclass(frozen=True)
class Node:
    nid: int
    role: Role
    name: str


@dataclass(frozen=True)
class Radio:
    rid: int
    owner: int
    zone: int


@dataclass(frozen=True)
class FiberPlant:
    """Fiber backhaul description.

    ``sector_sizes`` partitions ONUs 1..O into consecutive sectors.  For TDM and
    wavelength-broadcasting PONs there is a single sector and ``channels`` is the
    number of shared wavelengths; for the wavelength-routing PON the number of
    channels equals the number of sectors and rates/propagation delays may vary
    per sector.
    """

    kind: PonKind
    channels: int
    sector_sizes: tuple[int, ...]
    rates: tuple[float, ...]
    propagation: tuple[float, ...]

    def __post_init__(self):
        if self.channels < 1:
            raise TopologyError("a PON needs at least one wavelength channel")
        if self.kind is PonKind.TDM and self.channels != 1:
            raise TopologyError("a TDM PON has exactly one channel")
        if self.kind is PonKind.WR_MULTISTAGE:
            if len(self.sector_sizes) != self.channels:
                raise TopologyError("WR PON needs one sector per channel")
        elif len(self.sector_sizes) != 1:
            raise TopologyError("broadcast PONs have a single sector")
        n = len(self.sector_sizes)
        if len(self.rates) != n or len(self.propagation) != n:
            raise TopologyError("rates/propagation must be given per sector")
        if any(s < 0 for s in self.sector_sizes):
            raise TopologyError("negative sector size")
        if any(c <= 0 for c in self.rates):
            raise TopologyError("channel rates must be positive")
        if any(p < 0 for p in self.propagation):
            raise TopologyError("propagation delays must be non-negative")

    @property
    def n_onus(self) -> int:
        return sum(self.sector_sizes)

    @property
    def n_sectors(self) -> int:
        return len(self.sector_sizes)

    def sector_members(self, sector: int) -> range:
        """ONU ids of a 1-based sector."""
        lo = sum(self.sector_sizes[: sector - 1])
        return range(lo + 1, lo + self.sector_sizes[sector - 1] + 1)

    @property
    def heterogeneous(self) -> bool:
        return len(set(self.rates)) > 1


def sector_of(onu: int, plant: FiberPlant) -> int:
    """1-based sector index of ``onu``."""
    if not 1 <= onu <= plant.n_onus:
        raise TopologyError(f"ONU {onu} out of range 1..{plant.n_onus}")
    upper = 0
    for lam, size in enumerate(plant.sector_sizes, start=1):
        upper += size
        if onu <= upper:
            return lam
    raise AssertionError("unreachable")


def make_plant(
    kind: PonKind | str,
    n_onus: int,
    *,
    channels: int = 1,
    sectors: Sequence[int] | None = None,
    rate: float | Sequence[float] = 1e9,
    distance_km: float | Sequence[float] | None = 20.0,
    propagation: float | Sequence[float] | None = None,
) -> FiberPlant:
    """Convenience constructor; distances are converted at 2e8 m/s."""
    if isinstance(kind, str):
        kind = PonKind.parse(kind)
    if kind is PonKind.WR_MULTISTAGE:
        if sectors is None:
            if n_onus % channels:
                raise TopologyError("cannot split ONUs evenly; give sector sizes")
            sectors = [n_onus // channels] * channels
        channels = len(sectors)
    else:
        if kind is PonKind.TDM:
            channels = 1
        sectors = [n_onus]
    n = len(sectors)
    if sum(sectors) != n_onus:
        raise TopologyError(
            f"sector sizes {list(sectors)} do not cover {n_onus} ONUs")

    def per_sector(value, what):
        if isinstance(value, (int, float)):
            return tuple(float(value) for _ in range(n))
        value = tuple(float(v) for v in value)
        if len(value) != n:
            raise TopologyError(f"{what} must have one entry per sector")
        return value

    if propagation is None:
        if distance_km is None:
            raise TopologyError("need distance_km or propagation")
        dist = per_sector(distance_km, "distance_km")
        propagation = tuple(d * 1e3 / FIBER_SPEED_M_S for d in dist)
    return FiberPlant(
        kind=kind,
        channels=channels,
        sector_sizes=tuple(int(s) for s in sectors),
        rates=per_sector(rate, "rate"),
        propagation=per_sector(propagation, "propagation"),
    )


@dataclass(frozen=True)
class FailureSet:
    failed_distribution_fibers: frozenset[int] = frozenset()
    failed_nodes: frozenset[int] = frozenset()

    @classmethod
    def of(cls, fibers: Iterable[int] = (), nodes: Iterable[int] = ()):
        return cls(frozenset(fibers), frozenset(nodes))


@dataclass(frozen=True)
class Topology:
    nodes: tuple[Node, ...]
    radios: tuple[Radio, ...]
    zones: Mapping[int, tuple[int, ...]]
    n_onus: int
    n_stas: int
    plant: FiberPlant | None
    fiber_onus: frozenset[int]
    failed_nodes: frozenset[int] = frozenset()
    _by_name: Mapping[str, int] = field(default=None, compare=False, repr=False)

    # -- lookups --------------------------------------------------------
    @property
    def n_endpoints(self) -> int:
        return 1 + self.n_onus + self.n_stas

    @property
    def olt(self) -> int:
        return 0

    def onus(self) -> range:
        return range(1, self.n_onus + 1)

    def stas(self) -> range:
        return range(self.n_onus + 1, self.n_onus + self.n_stas + 1)

    def node_id(self, name: str) -> int:
        return self._by_name[name]

    def name(self, nid: int) -> str:
        return self.nodes[nid].name

    def radios_of(self, nid: int) -> tuple[Radio, ...]:
        return tuple(r for r in self.radios if r.owner == nid)

    def zone_members(self, zone: int) -> tuple[int, ...]:
        return self.zones[zone]

    def relay_radios(self, zone: int) -> tuple[int, ...]:
        """Radios of multi-radio relay MPs in ``zone`` (the R_z set)."""
        return tuple(
            rid for rid in self.zones[zone]
            if self.nodes[self.radios[rid].owner].role is Role.MP_RELAY
            and len(self.radios_of(self.radios[rid].owner)) > 1
        )

    def single_radios(self, zone: int) -> tuple[int, ...]:
        relay = set(self.relay_radios(zone))
        return tuple(rid for rid in self.zones[zone] if rid not in relay)

    def has_fiber(self, nid: int) -> bool:
        return nid in self.fiber_onus

    def is_alive(self, nid: int) -> bool:
        return nid not in self.failed_nodes

    @property
    def n_relay_radios(self) -> int:
        return sum(
            1 for r in self.radios
            if self.nodes[r.owner].role is Role.MP_RELAY
        )

    @property
    def wireless_nodes(self) -> tuple[int, ...]:
        return tuple(sorted({r.owner for r in self.radios}))


_NAME_RE = re.compile(r"^(OLT|ONU|STA|MP|MAP)(\d*)$")


def build_topology(spec: Mapping) -> Topology:
    """Build a validated topology from a declarative description.

    ``spec`` keys: ``onus`` (count), ``mpp`` (ONU numbers with a mesh portal),
    ``stations`` (count), ``zones`` (list of member-name lists; each membership
    of a node in a zone is one radio), optional ``maps``/``mps`` counts and an
    optional ``pon`` entry holding a :class:`FiberPlant` (``None`` for a
    WMN-only network).
    """
    n_onus = int(spec.get("onus", 0))
    n_stas = int(spec.get("stations", 0))
    mpp = set(int(o) for o in spec.get("mpp", []))
    zones_spec = [list(z) for z in spec.get("zones", [])]
    plant = spec.get("pon")
    if n_onus < 0 or n_stas < 0:
        raise TopologyError("negative node counts")
    if not mpp <= set(range(1, n_onus + 1)):
        raise TopologyError(f"MPP list {sorted(mpp)} names unknown ONUs")
    if plant is not None and plant.n_onus != n_onus:
        raise TopologyError(
            f"PON sectors cover {plant.n_onus} ONUs but topology has {n_onus}")

    mp_names: set[str] = set()
    map_names: set[str] = set()
    for members in zones_spec:
        for name in members:
            m = _NAME_RE.match(name)
            if m is None:
                raise TopologyError(f"bad node name {name!r}")
            kind, num = m.group(1), m.group(2)
            if kind == "MP":
                mp_names.add(name)
            elif kind == "MAP":
                map_names.add(name)
            elif kind == "ONU":
                if int(num or 0) not in mpp:
                    raise TopologyError(f"{name} has no MPP but sits in a zone")
            elif kind == "STA":
                if not 1 <= int(num or 0) <= n_stas:
                    raise TopologyError(f"unknown station {name}")
            else:
                raise TopologyError("the OLT has no radio")

    def natural(name):
        return int(_NAME_RE.match(name).group(2) or 0)

    nodes = [Node(0, Role.OLT, "OLT")]
    for o in range(1, n_onus + 1):
        nodes.append(Node(o, Role.ONU_MPP if o in mpp else Role.ONU, f"ONU{o}"))
    for s in range(1, n_stas + 1):
        nodes.append(Node(n_onus + s, Role.STA, f"STA{s}"))
    for name in sorted(mp_names, key=natural):
        nodes.append(Node(len(nodes), Role.MP_RELAY, name))
    for name in sorted(map_names, key=natural):
        nodes.append(Node(len(nodes), Role.MAP, name))
    by_name = {n.name: n.nid for n in nodes}

    radios: list[Radio] = []
    zones: dict[int, tuple[int, ...]] = {}
    for zid, members in enumerate(zones_spec):
        if not members:
            raise TopologyError(f"zone {zid} is empty")
        if len(set(members)) != len(members):
            raise TopologyError(f"zone {zid} lists a node twice")
        rids = []
        for name in members:
            radios.append(Radio(len(radios), by_name[name], zid))
            rids.append(radios[-1].rid)
        zones[zid] = tuple(rids)

    per_node: dict[int, int] = {}
    for r in radios:
        per_node[r.owner] = per_node.get(r.owner, 0) + 1
    for nid, count in per_node.items():
        if nodes[nid].role is not Role.MP_RELAY and count > 1:
            raise TopologyError(
                f"single-radio node {nodes[nid].name} appears in {count} zones")
    for o in mpp:
        if per_node.get(o, 0) != 1:
            raise TopologyError(f"MPP of ONU{o} is not placed in a zone")
    for s in range(n_onus + 1, n_onus + n_stas + 1):
        if per_node.get(s, 0) != 1:
            raise TopologyError(f"{nodes[s].name} is not placed in a zone")

    fiber = frozenset(range(1, n_onus + 1)) if plant is not None else frozenset()
    return Topology(
        nodes=tuple(nodes),
        radios=tuple(radios),
        zones=zones,
        n_onus=n_onus,
        n_stas=n_stas,
        plant=plant,
        fiber_onus=fiber,
        _by_name=by_name,
    )


def apply_failures(topology: Topology, failures: FailureSet) -> Topology:
    """Cut distribution fibers and/or take whole nodes down.

    An ONU with a cut fiber keeps its radio and behaves as a plain wireless
    relay; a failed node disappears from both the fiber and the wireless graph.
    """
    known = set(range(len(topology.nodes)))
    for nid in failures.failed_distribution_fibers:
        if nid not in topology.onus():
            raise TopologyError(f"no distribution fiber for node {nid}")
    for nid in failures.failed_nodes:
        if nid not in known:
            raise TopologyError(f"unknown node id {nid}")
        if nid == 0:
            raise TopologyError("the OLT cannot be failed")
    cut = set(failures.failed_distribution_fibers) | (
        set(failures.failed_nodes) & set(topology.onus()))
    nodes = list(topology.nodes)
    for o in failures.failed_distribution_fibers:
        if nodes[o].role is Role.ONU_MPP:
            nodes[o] = replace(nodes[o], role=Role.MP_RELAY)
    dead = set(topology.failed_nodes) | set(failures.failed_nodes)
    # radio ids stay stable; dead radios simply leave their zones
    zones = {
        z: tuple(rid for rid in members if topology.radios[rid].owner not in dead)
        for z, members in topology.zones.items()
    }
    return replace(
        topology,
        nodes=tuple(nodes),
        zones={z: m for z, m in zones.items() if m},
        fiber_onus=topology.fiber_onus - cut,
        failed_nodes=frozenset(dead),
    )


# ---------------------------------------------------------------------------
# reference layouts

def fig4_zones(offset_onu: int = 0, offset_sta: int = 0, offset_mp: int = 0):
    """Zones of the verification layout: four ONU/MPPs, a chain of four MPs.

    Each MP serves its ONU/MPP zone and one station zone (two stations each),
    and neighbouring MPs share a backbone zone; this gives 11 zones and MP
    radio counts 3, 4, 4, 3 from left to right.
    """
    o = [f"ONU{offset_onu + i}" for i in range(1, 5)]
    s = [f"STA{offset_sta + i}" for i in range(1, 17)]
    m = [f"MP{offset_mp + i}" for i in range(1, 5)]
    zones = [[o[i], s[2 * i], s[2 * i + 1], m[i]] for i in range(4)]
    zones += [[m[i], s[8 + 2 * i], s[9 + 2 * i]] for i in range(4)]
    zones += [[m[i], m[i + 1]] for i in range(3)]
    return zones


def fig4_spec(pon: FiberPlant | None = None) -> dict:
    return {
        "onus": 4,
        "mpp": [1, 2, 3, 4],
        "stations": 16,
        "zones": fig4_zones(),
        "pon": pon,
    }


def doubled_spec(pon: FiberPlant | None = None) -> dict:
    """Two copies of the verification layout sharing one PON."""
    zones = fig4_zones() + fig4_zones(4, 16, 4)
    return {
        "onus": 8,
        "mpp": list(range(1, 9)),
        "stations": 32,
        "zones": zones,
        "pon": pon,
    }
