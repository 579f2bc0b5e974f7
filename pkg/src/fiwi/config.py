"""Run configuration: TOML documents with one table per subsystem."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any

import tomli
import tomli_w

from .aggregation import AggregationConfig, Scheme
from .dcf import Access, DcfParams
from .evaluator import ModelConfig
from .routing import Algorithm
from .topology import (FailureSet, PonKind, Topology, apply_failures,
                       build_topology, doubled_spec, fig4_spec, make_plant)
from .traffic import FrameLengthDist, ScenarioKind, ScenarioSpec

PRESETS = ("fig4.cfg", "fig4x2.cfg", "vht.cfg")
MODES = ("analyze", "simulate", "compare")


class ConfigError(ValueError):
    pass


@dataclass
class TopologySection:
    layout: str = "fig4"            # fig4, fig4x2 or custom
    fiber: bool = True              # False: WMN only
    onus: int = 0                   # custom layouts only
    mpp: list = field(default_factory=list)
    stations: int = 0
    zones: list = field(default_factory=list)


@dataclass
class PonSection:
    kind: str = "TDM"
    channels: int = 1
    sectors: list = field(default_factory=list)
    rate_bps: float = 1e9
    distance_km: float = 20.0


@dataclass
class WlanSection:
    rate_bps: float = 300e6
    W0: int = 16
    H: int = 6
    slot_s: float = 9e-6
    sifs_s: float = 16e-6
    difs_s: float = 34e-6
    phy_header_s: float = 20e-6
    prop_delay_s: float = 1 / 3 * 1e-5
    access: str = "rts/cts"
    ber: float = 1e-6


@dataclass
class AggregationSection:
    scheme: str = "A-MSDU"
    a_max_bytes: float = 7935


@dataclass
class TrafficSection:
    frame_bytes: float = 1500
    frame_pmf: list = field(default_factory=list)   # [[bytes, prob], ...]
    scenario: str = "p2p"
    alpha: list = field(default_factory=lambda: [100.0, 500.0, 1000.0])
    B: float = 1.0
    surcharge: float = 0.3
    domain: str = ""


@dataclass
class RoutingSection:
    algorithm: str = "min-interference"
    pon_pairs_fiber_only: bool = True


@dataclass
class FailureSection:
    fibers: list = field(default_factory=list)
    nodes: list = field(default_factory=list)


@dataclass
class SimSection:
    duration_s: float = 60.0
    warmup_s: float = 10.0
    replications: int = 20
    seed: int = 1
    backoff_on_arrival: bool = False


@dataclass
class RunConfig:
    topology: TopologySection = field(default_factory=TopologySection)
    pon: PonSection = field(default_factory=PonSection)
    wlan: WlanSection = field(default_factory=WlanSection)
    aggregation: AggregationSection = field(default_factory=AggregationSection)
    traffic: TrafficSection = field(default_factory=TrafficSection)
    routing: RoutingSection = field(default_factory=RoutingSection)
    failures: FailureSection = field(default_factory=FailureSection)
    sim: SimSection = field(default_factory=SimSection)
    mode: str = "analyze"
    output: str = "-"

    # -- (de)serialisation ----------------------------------------------------
    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        cfg = cls()
        for f in fields(cls):
            if f.name not in doc:
                continue
            value = doc[f.name]
            current = getattr(cfg, f.name)
            if hasattr(current, "__dataclass_fields__"):
                if not isinstance(value, dict):
                    raise ConfigError(f"[{f.name}] must be a table")
                setattr(cfg, f.name, _section(type(current), f.name, value))
            else:
                setattr(cfg, f.name, _coerce(f.name, current, value))
        unknown = set(doc) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")
        cfg.validate()
        return cfg

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        try:
            doc = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        return cls.from_dict(doc)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            bundled = resources.files("fiwi").joinpath("presets", path.name)
            if path.name in PRESETS and bundled.is_file():
                return cls.loads(bundled.read_text())
            raise ConfigError(f"config file not found: {path}")
        return cls.loads(path.read_text())

    # -- checks -----------------------------------------------------------------
    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode: expected one of {MODES}, got {self.mode!r}")
        if not self.traffic.alpha:
            raise ConfigError("[traffic] alpha: grid must not be empty")
        if any(a < 0 for a in self.traffic.alpha):
            raise ConfigError("[traffic] alpha: values must be >= 0")
        if self.topology.layout not in ("fig4", "fig4x2", "custom"):
            raise ConfigError(f"[topology] layout: unknown layout {self.topology.layout!r}")
        for what, parse, value in (
            ("[pon] kind", PonKind.parse, self.pon.kind),
            ("[wlan] access", Access.parse, self.wlan.access),
            ("[aggregation] scheme", Scheme.parse, self.aggregation.scheme),
            ("[traffic] scenario", ScenarioKind.parse, self.traffic.scenario),
            ("[routing] algorithm", Algorithm.parse, self.routing.algorithm),
        ):
            try:
                parse(value)
            except ValueError as exc:
                raise ConfigError(f"{what}: {exc}") from None
            except RuntimeError as exc:
                raise ConfigError(f"{what}: {exc}") from None
        if self.sim.duration_s <= self.sim.warmup_s or self.sim.warmup_s < 0:
            raise ConfigError("[sim] need duration_s > warmup_s >= 0")
        if self.sim.replications < 1:
            raise ConfigError("[sim] replications: must be >= 1")

    # -- builders -----------------------------------------------------------------
    def n_onus(self) -> int:
        return {"fig4": 4, "fig4x2": 8}.get(self.topology.layout, self.topology.onus)

    def plant(self):
        if not self.topology.fiber:
            return None
        p = self.pon
        kind = PonKind.parse(p.kind)
        return make_plant(kind, self.n_onus(), channels=p.channels,
                          sectors=p.sectors or None, rate=p.rate_bps,
                          distance_km=p.distance_km)

    def build_topology(self) -> Topology:
        plant = self.plant()
        t = self.topology
        if t.layout == "fig4":
            spec = fig4_spec(plant)
        elif t.layout == "fig4x2":
            spec = doubled_spec(plant)
        else:
            spec = {"onus": t.onus, "mpp": t.mpp, "stations": t.stations,
                    "zones": t.zones, "pon": plant}
        topo = build_topology(spec)
        f = self.failures
        if f.fibers or f.nodes:
            topo = apply_failures(topo, FailureSet.of(f.fibers, f.nodes))
        return topo

    def frames(self) -> FrameLengthDist:
        if self.traffic.frame_pmf:
            return FrameLengthDist.from_pairs((b * 8, p) for b, p in self.traffic.frame_pmf)
        return FrameLengthDist.point(self.traffic.frame_bytes * 8)

    def model(self) -> ModelConfig:
        w = self.wlan
        params = DcfParams(W0=w.W0, H=w.H, slot=w.slot_s, sifs=w.sifs_s,
                           difs=w.difs_s, phy_header=w.phy_header_s,
                           rate=w.rate_bps, prop_delay=w.prop_delay_s,
                           access=Access.parse(w.access))
        scheme = Scheme.parse(self.aggregation.scheme)
        if scheme is Scheme.A_MSDU:
            agg = AggregationConfig.amsdu(self.aggregation.a_max_bytes)
        else:
            agg = AggregationConfig.ampdu(self.aggregation.a_max_bytes)
        return ModelConfig(params=params, aggregation=agg, frames=self.frames(),
                           ber=w.ber,
                           pon_pairs_fiber_only=self.routing.pon_pairs_fiber_only)

    def scenario(self, alpha: float = 0.0) -> ScenarioSpec:
        t = self.traffic
        return ScenarioSpec(ScenarioKind.parse(t.scenario), alpha, B=t.B,
                            surcharge=t.surcharge, domain=t.domain or None)

    def algorithm(self) -> Algorithm:
        return Algorithm.parse(self.routing.algorithm)


def _coerce(name: str, current: Any, value: Any) -> Any:
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true/false, got {value!r}")
        return value
    if isinstance(current, int) and not isinstance(current, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return value
    if isinstance(current, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        return float(value)
    if isinstance(current, str):
        if not isinstance(value, str):
            raise ConfigError(f"{name}: expected a string, got {value!r}")
        return value
    if isinstance(current, list):
        if not isinstance(value, list):
            raise ConfigError(f"{name}: expected a list, got {value!r}")
        return value
    return value


def _section(kind, name: str, table: dict):
    obj = kind()
    known = {f.name for f in fields(kind)}
    for key, value in table.items():
        if key not in known:
            raise ConfigError(f"[{name}] {key}: unknown field")
        setattr(obj, key, _coerce(f"[{name}] {key}", getattr(obj, key), value))
    if name == "traffic":
        obj.alpha = [float(a) for a in obj.alpha]
    return obj
