"""Command-line entry point: ``mipsim run | paths | verify``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from . import acceptance
from .harness import (
    BUILTIN_IDS,
    ConfigError,
    builtin_scenario,
    emit_logs,
    emit_plotdata,
    load_scenario,
    parse_strategies,
    run_scenario,
)
from .protocol import ProtocolError
from .engine import SimulationFault
from .topology import (
    AddressError,
    NodeKind,
    Strategy,
    TopologyError,
    format_path,
    load_topology,
    parse_address,
    strategy_route,
)

STRATEGY_CHOICES = [s.label for s in Strategy] + ["all"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mipsim",
        description="Mobile IP route-optimization simulator (original, one level up, two levels up).")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write CSV reports and figures")
    run.add_argument("--scenario", required=True, help="built-in id A-E or a scenario YAML file")
    run.add_argument("--strategy", choices=STRATEGY_CHOICES, default="all")
    run.add_argument("--out", required=True, type=Path, help="output directory")
    run.add_argument("--seed", type=int)
    run.add_argument("--topology", type=Path, help="topology YAML (default: bundled network)")
    run.add_argument("--terminates-at", choices=["interceptor", "home_agent"],
                     help="where registration requests terminate")
    run.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    run.add_argument("--logs", action="store_true", help="also write full trace and table logs")

    paths = sub.add_parser("paths", help="print the data path for a strategy")
    paths.add_argument("--cn", required=True)
    paths.add_argument("--coa", required=True)
    paths.add_argument("--strategy", choices=STRATEGY_CHOICES, required=True)
    paths.add_argument("--ha", help="home agent (default: the topology's only HomeAgent)")
    paths.add_argument("--topology", type=Path)

    sub.add_parser("verify", help="run the acceptance checks")
    return parser


def _scenario(parser, value: str):
    if value.upper() in BUILTIN_IDS:
        return builtin_scenario(value)
    if Path(value).is_file():
        return load_scenario(value)
    parser.error(f"--scenario: {value!r} is neither one of {', '.join(BUILTIN_IDS)} nor a file")


def cmd_run(parser, args) -> int:
    cfg = _scenario(parser, args.scenario)
    if args.strategy != "all" or cfg.strategies is None:
        cfg.strategies = parse_strategies(args.strategy)
    if args.seed is not None:
        cfg.seed, cfg.seed_fixed = args.seed, True
    if args.topology is not None:
        cfg.topology = str(args.topology)
    if args.terminates_at:
        cfg.registration_terminates_at = args.terminates_at
    report = run_scenario(cfg)
    files = emit_plotdata(report, args.out)
    if args.logs:
        files += emit_logs(report, args.out)
    if not args.no_figures:
        from .plotting import render_figures
        files += render_figures(report, args.out)
    print(report.summary())
    for s in report.strategies:
        c = report[s].conservation
        print(f"  {s.label}: sent={c['sent']} received={c['received']} "
              f"lost={c['dropped']} in_flight={c['in_flight']}")
    for f in files:
        print(f"wrote {f}")
    return 0


def cmd_paths(parser, args) -> int:
    topo = load_topology(args.topology)
    if args.ha:
        ha = parse_address(args.ha)
    else:
        agents = topo.of_kind(NodeKind.HOME_AGENT)
        if len(agents) != 1:
            parser.error("--ha is required when the topology has no single HomeAgent")
        ha = agents[0]
    cn, coa = parse_address(args.cn), parse_address(args.coa)
    strategies = list(Strategy) if args.strategy == "all" else [Strategy.from_label(args.strategy)]
    for s in strategies:
        path = format_path(strategy_route(topo, cn, ha, coa, s))
        print(path if len(strategies) == 1 else f"{s.label}: {path}")
    return 0


def cmd_verify(parser, args) -> int:
    results = acceptance.run_all()
    for c in results:
        print(c.line())
    failed = [c for c in results if not c.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return 1 if failed else 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"run": cmd_run, "paths": cmd_paths, "verify": cmd_verify}[args.command]
    try:
        return handler(parser, args)
    except (AddressError, ConfigError) as exc:
        parser.error(str(exc))
    except (TopologyError, ProtocolError, SimulationFault, OSError) as exc:
        print(f"mipsim: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
