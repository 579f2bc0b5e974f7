"""Frame length distributions, traffic matrices and scenario generators."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .topology import Topology

PMF_TOL = 1e-12


class TrafficError(ValueError):
    pass


@dataclass(frozen=True)
class FrameLengthDist:
    """Discrete pmf of frame lengths in bits."""

    lengths: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if not self.lengths:
            raise TrafficError("empty frame length pmf")
        if len(self.lengths) != len(self.probs):
            raise TrafficError("lengths and probabilities differ in size")
        if any(l <= 0 for l in self.lengths):
            raise TrafficError("frame lengths must be positive")
        if any(p < 0 for p in self.probs):
            raise TrafficError("negative probability")
        if abs(sum(self.probs) - 1.0) > PMF_TOL:
            raise TrafficError(f"pmf sums to {sum(self.probs)!r}, not 1")

    @classmethod
    def point(cls, bits: float) -> "FrameLengthDist":
        return cls((float(bits),), (1.0,))

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> "FrameLengthDist":
        pairs = list(pairs)
        if not pairs:
            raise TrafficError("empty frame length pmf")
        merged: dict[float, float] = {}
        for length, p in pairs:
            merged[float(length)] = merged.get(float(length), 0.0) + float(p)
        keys = sorted(merged)
        return cls(tuple(keys), tuple(merged[k] for k in keys))

    @property
    def mean(self) -> float:
        return dist_moments(self)[0]

    @property
    def variance(self) -> float:
        return dist_moments(self)[1]

    @property
    def max_length(self) -> float:
        return max(l for l, p in zip(self.lengths, self.probs) if p > 0)

    def pairs(self) -> list[tuple[float, float]]:
        return list(zip(self.lengths, self.probs))


def dist_moments(dist: FrameLengthDist) -> tuple[float, float]:
    """Mean and variance (bits, bits^2) of a frame length pmf."""
    mean = sum(l * p for l, p in zip(dist.lengths, dist.probs))
    var = sum(p * (l - mean) ** 2 for l, p in zip(dist.lengths, dist.probs))
    return mean, var


@dataclass(frozen=True)
class TrafficMatrix:
    """S[i, j] frames/s from endpoint i to endpoint j (OLT, ONUs, then STAs)."""

    rates: np.ndarray
    n_onus: int
    n_stas: int

    def __post_init__(self):
        s = np.asarray(self.rates, dtype=float)
        n = 1 + self.n_onus + self.n_stas
        if s.shape != (n, n):
            raise TrafficError(f"matrix shape {s.shape} != ({n}, {n})")
        if np.any(s < 0):
            raise TrafficError("negative traffic rate")
        if np.any(np.diag(s) != 0):
            raise TrafficError("diagonal of the traffic matrix must be zero")
        s.setflags(write=False)
        object.__setattr__(self, "rates", s)

    @property
    def total(self) -> float:
        return float(self.rates.sum())

    def pairs(self):
        """(i, j, rate) for every positive entry, row-major."""
        idx = np.argwhere(self.rates > 0)
        return [(int(i), int(j), float(self.rates[i, j])) for i, j in idx]

    def scaled(self, factor: float) -> "TrafficMatrix":
        return TrafficMatrix(self.rates * factor, self.n_onus, self.n_stas)


class ScenarioKind(enum.Enum):
    P2P = "p2p"
    UPSTREAM = "upstream"
    UNIFORM = "uniform"
    NONUNIFORM = "nonuniform"
    B_MATRIX = "b-matrix"

    @classmethod
    def parse(cls, text: str) -> "ScenarioKind":
        key = text.strip().lower().replace("_", "-")
        if key in ("b", "bmatrix"):
            key = "b-matrix"
        for kind in cls:
            if kind.value == key:
                return kind
        raise TrafficError(f"unknown scenario {text!r}")


@dataclass(frozen=True)
class ScenarioSpec:
    kind: ScenarioKind
    alpha: float
    B: float = 1.0
    hot_set: tuple[int, ...] | None = None
    surcharge: float = 0.3
    # which endpoints generate traffic in UNIFORM/NONUNIFORM: "fiwi", "wmn", "pon"
    domain: str | None = None

    def __post_init__(self):
        if self.alpha < 0:
            raise TrafficError("alpha must be non-negative")
        if self.B < 1:
            raise TrafficError("B must be >= 1")
        if self.surcharge < 0:
            raise TrafficError("surcharge must be non-negative")

    def with_alpha(self, alpha: float) -> "ScenarioSpec":
        return ScenarioSpec(self.kind, alpha, self.B, self.hot_set,
                            self.surcharge, self.domain)


def default_hot_set(topology: Topology) -> tuple[int, ...]:
    """ONU1, ONU2 and the stations sharing a zone with their MPPs."""
    hot = [o for o in (1, 2) if o <= topology.n_onus]
    stas = set(topology.stas())
    for o in list(hot):
        for r in topology.radios_of(o):
            for rid in topology.zones.get(r.zone, ()):
                owner = topology.radios[rid].owner
                if owner in stas:
                    hot.append(owner)
    return tuple(sorted(set(hot)))


def _domain(spec: ScenarioSpec, topology: Topology) -> str:
    if spec.domain is not None:
        return spec.domain
    if topology.plant is None:
        return "wmn"
    if topology.n_stas == 0:
        return "pon"
    return "fiwi"


def generate_matrix(spec: ScenarioSpec, topology: Topology) -> TrafficMatrix:
    n_o, n_s = topology.n_onus, topology.n_stas
    n = 1 + n_o + n_s
    S = np.zeros((n, n))
    stas = list(topology.stas())
    onus = list(topology.onus())
    a = float(spec.alpha)

    if spec.kind in (ScenarioKind.P2P, ScenarioKind.UPSTREAM) and n_s == 0:
        raise TrafficError(f"{spec.kind.value} traffic needs stations")

    if spec.kind is ScenarioKind.P2P:
        if n_s < 2:
            raise TrafficError("p2p traffic needs at least two stations")
        share = a / (n_s - 1)
        for i in stas:
            for j in stas:
                if i != j:
                    S[i, j] = share
    elif spec.kind is ScenarioKind.UPSTREAM:
        for i in stas:
            S[i, 0] = a
    elif spec.kind in (ScenarioKind.UNIFORM, ScenarioKind.NONUNIFORM):
        domain = _domain(spec, topology)
        if domain == "wmn":
            sources = stas
        elif domain == "pon":
            sources = onus
        else:
            sources = [0] + onus + stas
        if len(sources) < 2:
            raise TrafficError("uniform traffic needs at least two sources")
        hot = set()
        if spec.kind is ScenarioKind.NONUNIFORM:
            hot = set(spec.hot_set if spec.hot_set is not None
                      else default_hot_set(topology))
        for i in sources:
            rate = a * (1.0 + spec.surcharge) if i in hot else a
            share = rate / (len(sources) - 1)
            for j in sources:
                if i != j:
                    S[i, j] = share
    elif spec.kind is ScenarioKind.B_MATRIX:
        optical = [0] + onus
        S[:, :] = a
        for i in optical:
            for j in optical:
                S[i, j] = spec.B * a
        np.fill_diagonal(S, 0.0)
    else:  # pragma: no cover
        raise TrafficError(spec.kind)
    return TrafficMatrix(S, n_o, n_s)
