"""Scenario definitions, metrics extraction and report files."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from statistics import mean
from typing import Dict, List, Optional, Sequence, Tuple

import yaml

from .agents import INTERCEPTOR, RegistrationRecord, TABLE_COLUMNS, TableEvent, World, registration_flow
from .engine import SimParams, TraceLog
from .protocol import EncapMode, RegistrationRequest
from .topology import (
    HierAddress,
    Strategy,
    Topology,
    hop_count,
    load_topology,
    parse_address,
    strategy_route,
)

ALL_STRATEGIES = (Strategy.ORIGINAL, Strategy.ONE_LEVEL_UP, Strategy.TWO_LEVEL_UP)
BUILTIN_IDS = ("A", "B", "C", "D", "E")
HOME_ADDRESS = parse_address("1.2.1")
HOME_AGENT_ADDRESS = parse_address("1.2.0")
HANDOFF_AT = 16.0

_TARGETS = {"A": "1.3.0", "B": "1.5.0", "C": "0.2.1", "D": "0.1.0"}


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    id: str = "custom"
    topology: Optional[str] = None
    cn: Optional[HierAddress] = None
    mobile: HierAddress = HOME_ADDRESS
    initial_attachment: Optional[HierAddress] = None
    handoffs: List[Tuple[float, HierAddress]] = field(default_factory=list)
    strategies: Tuple[Strategy, ...] = ALL_STRATEGIES
    seed: int = 0
    params: SimParams = field(default_factory=SimParams)
    registration_terminates_at: str = INTERCEPTOR
    encapsulation: EncapMode = EncapMode.IP_IN_IP
    handoff_window: Tuple[float, float] = (16.0, 18.0)
    seed_fixed: bool = False      # an explicit seed beats MIPSIM_SEED

    def validate(self) -> None:
        if not self.strategies:
            raise ConfigError("no strategies requested")
        if len(set(self.strategies)) != len(self.strategies):
            raise ConfigError("duplicate strategies requested")
        lo, hi = self.handoff_window
        if hi < lo:
            raise ConfigError("handoff window ends before it starts")
        for t, _ in self.handoffs:
            if not 0 <= t <= self.params.sim_time:
                raise ConfigError(f"handoff time {t} outside [0, {self.params.sim_time}]")

    def load_topology(self) -> Topology:
        return load_topology(self.topology, self.params.link_delay, self.params.bandwidth,
                             self.params.wireless_delay)


def builtin_scenario(sid: str) -> ScenarioConfig:
    """Scenarios A to E of the evaluation.

    A-D start the mobile host at home and move it to one foreign agent at
    16 s; E starts it registered at 1.5.0 and brings it home at 16 s.
    """
    sid = sid.upper()
    if sid in _TARGETS:
        return ScenarioConfig(id=sid, handoffs=[(HANDOFF_AT, parse_address(_TARGETS[sid]))])
    if sid == "E":
        return ScenarioConfig(id="E", initial_attachment=parse_address("1.5.0"),
                              handoffs=[(HANDOFF_AT, HOME_AGENT_ADDRESS)])
    raise ConfigError(f"unknown scenario {sid!r} (expected one of A-E or a file path)")


def parse_strategies(value) -> Tuple[Strategy, ...]:
    if value is None or value == "all":
        return ALL_STRATEGIES
    if isinstance(value, str):
        value = [value]
    try:
        return tuple(Strategy.from_label(v) for v in value)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_scenario(path) -> ScenarioConfig:
    """Read a scenario YAML file.

    Keys: ``id``, ``base`` (a built-in id to start from), ``topology``,
    ``strategy`` (label, list or ``all``), ``cn``, ``mn``,
    ``initial_attachment``, ``handoffs`` (list of ``[time_s, agent]``),
    ``registration_terminates_at``, ``lifetime``, ``encapsulation``,
    ``seed``, ``handoff_window`` and ``params`` (run-parameter overrides).
    """
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    known = {"id", "base", "topology", "strategy", "cn", "mn", "initial_attachment", "handoffs",
             "registration_terminates_at", "lifetime", "encapsulation", "seed",
             "handoff_window", "params"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(sorted(unknown))}")
    cfg = builtin_scenario(doc["base"]) if "base" in doc else ScenarioConfig()
    cfg.id = str(doc.get("id", "custom" if "base" not in doc else cfg.id))
    if "topology" in doc:
        topo = Path(doc["topology"])
        cfg.topology = str(topo if topo.is_absolute() else path.parent / topo)
    try:
        if "params" in doc:
            cfg.params = SimParams.from_mapping(doc["params"] or {})
        if "lifetime" in doc:
            cfg.params = replace(cfg.params, lifetime=float(doc["lifetime"]))
        if "cn" in doc:
            cfg.cn = parse_address(doc["cn"])
        if "mn" in doc:
            cfg.mobile = parse_address(doc["mn"])
        if "initial_attachment" in doc:
            cfg.initial_attachment = parse_address(doc["initial_attachment"])
        if "handoffs" in doc:
            cfg.handoffs = [(float(t), parse_address(a)) for t, a in doc["handoffs"]]
        if "encapsulation" in doc:
            cfg.encapsulation = EncapMode.from_label(doc["encapsulation"])
        if "handoff_window" in doc:
            lo, hi = doc["handoff_window"]
            cfg.handoff_window = (float(lo), float(hi))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if "strategy" in doc:
        cfg.strategies = parse_strategies(doc["strategy"])
    if "registration_terminates_at" in doc:
        cfg.registration_terminates_at = str(doc["registration_terminates_at"])
    if "seed" in doc:
        cfg.seed = int(doc["seed"])
    return cfg


def resolve_seed(cfg: ScenarioConfig) -> int:
    env = os.environ.get("MIPSIM_SEED")
    if cfg.seed_fixed or env is None or env == "":
        return cfg.seed
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"MIPSIM_SEED must be an integer, got {env!r}") from None


# -- metrics --------------------------------------------------------------------

def improvement(baseline_s: float, candidate_s: float) -> float:
    """Percent reduction of ``candidate_s`` relative to ``baseline_s``.

    >>> round(improvement(0.808378, 0.406199), 6)
    49.751354
    """
    if not baseline_s > 0:
        raise ArithmeticError(f"baseline must be positive, got {baseline_s}")
    return (baseline_s - candidate_s) / baseline_s * 100.0


@dataclass
class StrategyMetrics:
    strategy: Strategy
    delays: List[Tuple[float, float, int]]          # (send time, delay, seq)
    loss_times: List[float]
    loss_total: int
    loss_in_handoff_window: int
    registration_time_s: Optional[float]
    registrations: List[RegistrationRecord]
    data_path_hops: int
    registration_rtt_hops: int
    handoff_delay_s: Optional[float]
    steady_delay_s: Optional[float]
    tunneled_after_final_registration: int
    final_attachment: HierAddress
    conservation: Dict[str, int]
    trace: TraceLog = field(repr=False)
    table_events: List[TableEvent] = field(repr=False)

    @property
    def conserved(self) -> bool:
        c = self.conservation
        return c["sent"] == c["received"] + c["dropped"] + c["in_flight"]


@dataclass
class MetricsReport:
    scenario: str
    strategies: Tuple[Strategy, ...]
    per_strategy: Dict[Strategy, StrategyMetrics]
    improvements: Dict[str, float]
    handoff_window: Tuple[float, float]
    horizon: float

    def __getitem__(self, strategy: Strategy) -> StrategyMetrics:
        return self.per_strategy[strategy]

    def summary(self) -> str:
        lines = [f"scenario {self.scenario}"]
        header = (f"  {'strategy':<10}{'reg_time_s':>12}{'steady_delay_s':>16}{'handoff_delay_s':>17}"
                  f"{'loss_window':>13}{'loss_total':>12}{'path_hops':>11}{'reg_rtt_hops':>14}")
        lines.append(header)
        for s in self.strategies:
            m = self.per_strategy[s]
            lines.append(
                f"  {s.label:<10}{_fmt(m.registration_time_s):>12}{_fmt(m.steady_delay_s):>16}"
                f"{_fmt(m.handoff_delay_s):>17}{m.loss_in_handoff_window:>13}{m.loss_total:>12}"
                f"{m.data_path_hops:>11}{m.registration_rtt_hops:>14}")
        for name, value in self.improvements.items():
            lines.append(f"  {name}: {value:.6f}%")
        return "\n".join(lines)


def _fmt(x: Optional[float]) -> str:
    return "-" if x is None else f"{x:.6f}"


def build_world(cfg: ScenarioConfig, strategy: Strategy, topo: Optional[Topology] = None) -> World:
    topo = topo or cfg.load_topology()
    return World(topo, strategy, cfg.mobile, cn=cfg.cn,
                 initial_attachment=cfg.initial_attachment, handoffs=cfg.handoffs,
                 params=cfg.params, seed=resolve_seed(cfg), mode=cfg.encapsulation,
                 terminates_at=cfg.registration_terminates_at)


def extract_metrics(world: World, cfg: ScenarioConfig) -> StrategyMetrics:
    trace = world.trace
    lo, hi = cfg.handoff_window
    delays = [(r.time - r.value, r.value, r.seq) for r in trace.where("recv")]
    delays.sort()
    loss_times = sorted(r.time for r in trace.where("drop", "Data"))
    first_handoff = min((t for t, _ in cfg.handoffs), default=None)

    handoff_regs = [r for r in world.registrations
                    if r.accepted and (first_handoff is None or r.t_request >= first_handoff)]
    reg = handoff_regs[0] if handoff_regs else None
    final = cfg.handoffs[-1][1] if cfg.handoffs else (cfg.initial_attachment or world.home_agent)

    handoff_delay = None
    steady = None
    if reg is not None:
        after = [d for t, d, _ in delays if t + d >= reg.t_reply]
        handoff_delay = after[0] if after else None
    settled = [d for t, d, _ in delays if t >= hi]
    if settled:
        steady = mean(settled)
    elif first_handoff is None and delays:
        steady = mean(d for _, d, _ in delays)

    tunneled_after = 0
    last = world.registrations[-1] if world.registrations else None
    if last is not None:
        tunneled_after = sum(1 for r in trace.where("encap") if r.time > last.t_reply)

    topo = world.topo
    path = strategy_route(topo, world.cn, world.home_agent, final, world.strategy)
    probe = RegistrationRequest(world.mobile, world.home_agent, final, cfg.params.lifetime, 0)
    rtt = registration_flow(topo, world.strategy, probe, final,
                            cfg.registration_terminates_at).wired_rtt_hops
    return StrategyMetrics(
        strategy=world.strategy,
        delays=delays,
        loss_times=loss_times,
        loss_total=len(loss_times),
        loss_in_handoff_window=sum(1 for t in loss_times if lo <= t <= hi),
        registration_time_s=None if reg is None else reg.duration,
        registrations=list(world.registrations),
        data_path_hops=hop_count(path),
        registration_rtt_hops=rtt,
        handoff_delay_s=handoff_delay,
        steady_delay_s=steady,
        tunneled_after_final_registration=tunneled_after,
        final_attachment=final,
        conservation=world.data_summary(),
        trace=trace,
        table_events=list(world.table_events),
    )


def run_scenario(cfg: ScenarioConfig) -> MetricsReport:
    cfg.validate()
    topo = cfg.load_topology()
    # surface config/topology mistakes before any run starts
    for s in cfg.strategies:
        build_world(cfg, s, topo)
    per = {}
    for s in cfg.strategies:
        world = build_world(cfg, s, topo)
        world.run()
        per[s] = extract_metrics(world, cfg)
    improvements = {}
    reg = {s: per[s].registration_time_s for s in cfg.strategies}
    for base, label in ((Strategy.ORIGINAL, "improvement_vs_original"),
                        (Strategy.ONE_LEVEL_UP, "improvement_vs_onelevel")):
        if base in reg and Strategy.TWO_LEVEL_UP in reg and reg[base] and reg[Strategy.TWO_LEVEL_UP] is not None:
            improvements[label] = improvement(reg[base], reg[Strategy.TWO_LEVEL_UP])
    return MetricsReport(cfg.id, tuple(cfg.strategies), per, improvements,
                         cfg.handoff_window, cfg.params.sim_time)


# -- files ----------------------------------------------------------------------------

def _write_csv(path: Path, header: Sequence[str], rows) -> Path:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _cumulative(times: List[float], t: float) -> int:
    return sum(1 for x in times if x <= t)


def emit_plotdata(report: MetricsReport, out_dir) -> List[Path]:
    """Write the delay, loss and registration CSVs for ``report``."""
    if not report.strategies:
        raise ConfigError("report has no strategies")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"cannot write to output directory {out}: {exc}") from None
    sid = report.scenario
    written = []
    for s in report.strategies:
        m = report[s]
        rows = [(f"{t:.6f}", f"{d:.6f}", seq) for t, d, seq in m.delays]
        written.append(_write_csv(out / f"delay_{sid}_{s.label}.csv", ("send_time_s", "delay_s", "seq"), rows))

    times = sorted({0.0, report.horizon, *(t for s in report.strategies for t in report[s].loss_times)})
    rows = [(f"{t:.6f}", *(_cumulative(report[s].loss_times, t) for s in report.strategies))
            for t in times]
    written.append(_write_csv(out / f"loss_{sid}.csv", ("time_s", *(s.label for s in report.strategies)), rows))

    header = ["via_fa", *(s.label for s in report.strategies), *report.improvements]
    via = {str(report[s].final_attachment) for s in report.strategies}
    row = [",".join(sorted(via))]
    row += [_fmt(report[s].registration_time_s) for s in report.strategies]
    row += [f"{v:.6f}" for v in report.improvements.values()]
    written.append(_write_csv(out / f"registration_{sid}.csv", header, [row]))
    return written


def emit_logs(report: MetricsReport, out_dir) -> List[Path]:
    """Full trace and table-event logs, one pair per strategy."""
    out = Path(out_dir)
    written = []
    for s in report.strategies:
        m = report[s]
        p = out / f"trace_{report.scenario}_{s.label}.csv"
        p.write_text(m.trace.to_csv())
        written.append(p)
        written.append(_write_csv(out / f"table_{report.scenario}_{s.label}.csv", TABLE_COLUMNS,
                                  [e.row() for e in m.table_events]))
    return written

