"""Command line entry point: ``oran-energy generate|solve|run``.

Exit codes: 0 success, 2 invalid configuration or usage, 3 unreadable or
malformed input file, 4 infeasible instance, 5 I/O failure while writing.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import serialization as ser
from .config import PROFILES, SOLVERS, ConfigError, ScenarioConfig
from .control_plane import ControlPlaneError, simulate, trace_records
from .metrics import ReportError, RunSummary, emit_report
from .optimizer import Infeasible, OracleTooLarge, check_feasible, solve
from .rf_env import InvalidScenarioError, generate_stadium

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_INFEASIBLE = 4
EXIT_IO = 5

log = logging.getLogger("oran_energy")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _schedule(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}")


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="configuration file (TOML)")
    common.add_argument("--profile", choices=sorted(PROFILES), default="default",
                        help="named base configuration (default: %(default)s)")
    common.add_argument("--seed", type=_seed)
    common.add_argument("--solver", choices=SOLVERS)
    common.add_argument("--threads", type=int, default=1, help="solver worker threads")
    common.add_argument("--out", type=Path, help="output directory")

    p = argparse.ArgumentParser(prog="oran-energy", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="write a stadium scenario file")
    g.add_argument("--n-orus", type=int)
    g.add_argument("--ue-schedule", type=_schedule)

    s = sub.add_parser("solve", parents=[common], help="solve one instance or scenario file")
    s.add_argument("input", type=Path, help="instance or scenario file")

    r = sub.add_parser("run", parents=[common], help="simulate the control loop")
    r.add_argument("--scenario", type=Path, help="scenario file (generated when omitted)")
    r.add_argument("--epochs", type=int)
    r.add_argument("--ue-schedule", type=_schedule)
    r.add_argument("--jitter", type=_on_off)
    r.add_argument("--n-orus", type=int)
    return p


def _config(args) -> ScenarioConfig:
    cfg = ser.load_config(args.config) if args.config else PROFILES[args.profile]()
    over = {"seed": args.seed, "solver": args.solver,
            "n_orus": getattr(args, "n_orus", None),
            "ue_schedule": getattr(args, "ue_schedule", None),
            "jitter": getattr(args, "jitter", None)}
    if getattr(args, "epochs", None) is not None:
        over["epochs"] = args.epochs
    return cfg.with_overrides(**over).validate()


def _out_dir(args) -> Path:
    out = args.out or Path(".")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise CliError(EXIT_IO, f"{out}: {e.strerror}") from None
    return out


def cmd_generate(args) -> int:
    cfg = _config(args)
    scenario = generate_stadium(cfg, cfg.seed)
    path = _out_dir(args) / "scenario.toml"
    ser.save_scenario(scenario, path)
    log.info("wrote %s (%d O-RUs, %d UEs)", path, len(scenario.orus), len(scenario.ues))
    print(path)
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = ser.load_problem(args.input)
    solver = args.solver or "exact"
    try:
        report = solve(inst, solver, threads=args.threads)
    except Infeasible as e:
        print(json.dumps({"status": "infeasible", "reason": str(e)}, sort_keys=True))
        return EXIT_INFEASIBLE
    except OracleTooLarge as e:
        raise CliError(EXIT_CONFIG, str(e)) from None
    alloc = report.allocation
    violations = check_feasible(inst, alloc)
    out = _out_dir(args) if args.out else None
    if out is not None:
        ser.save_allocation(alloc, out / "allocation.toml")
    print(json.dumps({
        "status": "ok", "solver": solver, "optimality": report.optimality.value,
        "objective_watts": alloc.objective_watts, "active": sorted(alloc.active_z),
        "nodes_explored": report.nodes_explored, "wall_time_s": report.wall_time,
        "violations": len(violations)}, sort_keys=True))
    return EXIT_OK


def cmd_run(args) -> int:
    if args.scenario:
        scenario = ser.load_scenario(args.scenario)
        over = {"seed": args.seed, "solver": args.solver, "jitter": args.jitter,
                "ue_schedule": args.ue_schedule}
        if args.epochs is not None:
            over["epochs"] = args.epochs
        cfg = scenario.config.with_overrides(**over).validate()
        scenario = type(scenario)(cfg, scenario.orus, scenario.ues, scenario.shadow_db)
    else:
        cfg = _config(args)
        scenario = generate_stadium(cfg, cfg.seed)
    epochs = args.epochs if args.epochs is not None else None
    traces = simulate(scenario, cfg.ue_schedule, epochs, cfg.solver, threads=args.threads)
    summary = RunSummary(cfg.solver)
    records = []
    for t in traces:
        summary.add(t, len(scenario.orus))
        records.extend(trace_records(t))
    out = _out_dir(args)
    emit_report(summary, out)
    ser.write_jsonl(records, out / "trace.jsonl")
    failed = [t.epoch for t in traces if t.status == "infeasible"]
    for t in traces:
        log.info("epoch %d: %d UEs, %s, %.4f W, %d handovers", t.epoch, t.n_ues, t.status,
                 t.energy_after, t.handover_count)
    if failed:
        print(f"infeasible epochs: {', '.join(map(str, failed))}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "run": cmd_run}


def main(argv=None) -> int:
    level = os.environ.get("ORAN_ES_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except ser.ParseError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except (ConfigError, InvalidScenarioError, ControlPlaneError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Infeasible as e:
        print(f"error: infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ReportError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
