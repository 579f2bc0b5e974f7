"""Throughput and delay analysis of fiber-wireless (FiWi) access networks.

The analytical model lives in :mod:`fiwi.evaluator`; :mod:`fiwi.sim` is a
discrete-event simulator used to cross-check it.
"""

__version__ = "0.1.0"

from .aggregation import AggregationConfig, Scheme
from .dcf import Access, DcfParams, NonConvergence
from .evaluator import (DelayReport, Engine, ModelConfig, evaluate,
                        evaluate_scenario, max_stable, sweep)
from .routing import Algorithm
from .topology import (FailureSet, PonKind, apply_failures, build_topology,
                       doubled_spec, fig4_spec, make_plant)
from .traffic import (FrameLengthDist, ScenarioKind, ScenarioSpec,
                      TrafficMatrix, generate_matrix)

__all__ = [
    "Access", "AggregationConfig", "Algorithm", "DcfParams", "DelayReport",
    "Engine", "FailureSet", "FrameLengthDist", "ModelConfig", "NonConvergence",
    "PonKind", "ScenarioKind", "ScenarioSpec", "Scheme", "TrafficMatrix",
    "apply_failures", "build_topology", "doubled_spec", "evaluate",
    "evaluate_scenario", "fig4_spec", "generate_matrix", "make_plant",
    "max_stable", "sweep",
]
