"""Command line entry point: ``fiwi {analyze,simulate,compare}``."""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import __version__
from .config import MODES, ConfigError, RunConfig
from .evaluator import CSV_COLUMNS, Engine, DelayReport, evaluate_scenario
from .sim import SimConfig, run_sim
from .traffic import generate_matrix

WORKERS_ENV = "FIWI_WORKERS"
SIM_COLUMNS = CSV_COLUMNS + ("e2e_s", "ci_D_d_s", "ci_D_u_s", "ci_D_wi_s",
                             "ci_D_s", "ci_e2e_s")
COMPARE_COLUMNS = ("alpha", "throughput_bps", "stable", "D_s", "sim_D_s",
                   "sim_ci_D_s", "rel_err", "D_wi_s", "sim_D_wi_s", "D_u_s",
                   "sim_D_u_s", "D_d_s", "sim_D_d_s", "max_rho")


def _alpha_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad alpha list {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty alpha list")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fiwi",
        description="Capacity and delay analysis of fiber-wireless access networks.")
    parser.add_argument("--version", action="version", version=f"fiwi {__version__}")
    parser.add_argument("command", nargs="?", choices=MODES,
                        help="what to run (overrides --mode and the config)")
    parser.add_argument("--config", required=True,
                        help="TOML config file or a bundled preset name")
    parser.add_argument("--mode", choices=MODES)
    parser.add_argument("--routing",
                        choices=["min-hop", "min-interference", "min-delay", "ofra"])
    parser.add_argument("--scenario",
                        choices=["p2p", "upstream", "uniform", "nonuniform", "b-matrix"])
    parser.add_argument("--alpha", type=_alpha_list,
                        help="comma separated per-source rates in frames/s")
    parser.add_argument("--B", type=float, dest="B")
    parser.add_argument("--fail-fiber", type=int, action="append", default=None,
                        metavar="ONU", help="cut the distribution fiber of ONU")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--replications", type=int)
    parser.add_argument("--duration", type=float, help="simulated seconds")
    parser.add_argument("--warmup", type=float)
    parser.add_argument("--output", help="CSV path, '-' for stdout")
    return parser


def apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.routing:
        cfg.routing.algorithm = args.routing
    if args.scenario:
        cfg.traffic.scenario = args.scenario
    if args.alpha:
        cfg.traffic.alpha = args.alpha
    if args.B is not None:
        cfg.traffic.B = args.B
    if args.fail_fiber:
        cfg.failures.fibers = sorted(set(cfg.failures.fibers) | set(args.fail_fiber))
    if args.seed is not None:
        cfg.sim.seed = args.seed
    if args.replications is not None:
        cfg.sim.replications = args.replications
    if args.duration is not None:
        cfg.sim.duration_s = args.duration
    if args.warmup is not None:
        cfg.sim.warmup_s = args.warmup
    if args.output:
        cfg.output = args.output
    if args.mode:
        cfg.mode = args.mode
    if args.command:
        cfg.mode = args.command
    cfg.validate()
    return cfg


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def _analyze_point(doc: dict, alpha: float) -> dict:
    cfg = RunConfig.from_dict(doc)
    engine = Engine(cfg.build_topology(), cfg.model())
    return evaluate_scenario(engine, cfg.scenario(alpha), cfg.algorithm()).row()


def analyze(cfg: RunConfig) -> list[dict]:
    workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    if workers > 1 and len(cfg.traffic.alpha) > 1:
        doc = cfg.to_dict()
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_analyze_point, [doc] * len(cfg.traffic.alpha),
                                 cfg.traffic.alpha))
    engine = Engine(cfg.build_topology(), cfg.model())
    return [evaluate_scenario(engine, cfg.scenario(a), cfg.algorithm()).row()
            for a in cfg.traffic.alpha]


def _simulate_one(cfg: RunConfig, engine: Engine, alpha: float):
    scenario = cfg.scenario(alpha)
    report: DelayReport = evaluate_scenario(engine, scenario, cfg.algorithm())
    matrix = generate_matrix(scenario, engine.topology)
    m = engine.config
    sim_cfg = SimConfig(
        topology=engine.topology, matrix=matrix, outcome=report.outcome,
        params=m.params, aggregation=m.aggregation, frames=m.frames, ber=m.ber,
        duration=cfg.sim.duration_s, warmup=cfg.sim.warmup_s,
        replications=cfg.sim.replications, seed=cfg.sim.seed,
        backoff_on_arrival=cfg.sim.backoff_on_arrival)
    return report, run_sim(sim_cfg)


def simulate(cfg: RunConfig) -> list[dict]:
    engine = Engine(cfg.build_topology(), cfg.model())
    rows = []
    for a in cfg.traffic.alpha:
        report, res = _simulate_one(cfg, engine, a)
        rows.append({
            "alpha": repr(float(a)),
            "throughput_bps": repr(res.throughput_bps),
            "D_d_s": _fmt(res.D_d), "D_u_s": _fmt(res.D_u),
            "D_wi_s": _fmt(res.D_wi), "D_s": _fmt(res.D),
            "stable": "0" if res.overloaded else "1",
            "max_rho_node_id": "" if report.max_rho_node is None else str(report.max_rho_node),
            "max_rho": repr(float(report.max_rho)),
            "e2e_s": _fmt(res.e2e),
            "ci_D_d_s": _fmt(res.ci["D_d"]), "ci_D_u_s": _fmt(res.ci["D_u"]),
            "ci_D_wi_s": _fmt(res.ci["D_wi"]), "ci_D_s": _fmt(res.ci["D"]),
            "ci_e2e_s": _fmt(res.ci["e2e"]),
        })
    return rows


def compare(cfg: RunConfig) -> list[dict]:
    engine = Engine(cfg.build_topology(), cfg.model())
    rows = []
    for a in cfg.traffic.alpha:
        report, res = _simulate_one(cfg, engine, a)
        rel = None
        if report.D is not None and res.D > 0:
            rel = (report.D - res.D) / res.D
        rows.append({
            "alpha": repr(float(a)),
            "throughput_bps": repr(report.throughput_bps),
            "stable": "1" if report.stable else "0",
            "D_s": _fmt(report.D), "sim_D_s": _fmt(res.D),
            "sim_ci_D_s": _fmt(res.ci["D"]), "rel_err": _fmt(rel),
            "D_wi_s": _fmt(report.D_wi), "sim_D_wi_s": _fmt(res.D_wi),
            "D_u_s": _fmt(report.D_u), "sim_D_u_s": _fmt(res.D_u),
            "D_d_s": _fmt(report.D_d), "sim_D_d_s": _fmt(res.D_d),
            "max_rho": repr(float(report.max_rho)),
        })
    return rows


def write_csv(rows: list[dict], columns, cfg: RunConfig, stream) -> None:
    stream.write(f"# fiwi {__version__} config={cfg.digest()} seed={cfg.sim.seed}\n")
    writer = csv.DictWriter(stream, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = apply_overrides(RunConfig.load(args.config), args)
        runner, columns = {
            "analyze": (analyze, CSV_COLUMNS),
            "simulate": (simulate, SIM_COLUMNS),
            "compare": (compare, COMPARE_COLUMNS),
        }[cfg.mode]
        rows = runner(cfg)
    except ConfigError as exc:
        print(f"fiwi: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"fiwi: invalid input: {exc}", file=sys.stderr)
        return 2
    buf = io.StringIO()
    write_csv(rows, columns, cfg, buf)
    if cfg.output == "-":
        sys.stdout.write(buf.getvalue())
    else:
        with open(cfg.output, "w", newline="") as fh:
            fh.write(buf.getvalue())
    if all(r["stable"] == "0" for r in rows):
        print("fiwi: every point of the sweep is saturated", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
