"""Exit criteria for the simulator, runnable from pytest or ``mipsim verify``.

Every check compares the simulator against values worked out independently:
a brute-force BFS over the tree for paths, hand arithmetic for link
latency, and the published registration-time tables for ratios.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, List, Tuple

from .agents import HOME_AGENT, INTERCEPTOR, World
from .engine import SimParams
from .harness import ALL_STRATEGIES, MetricsReport, builtin_scenario, improvement, run_scenario
from .protocol import BASE_HEADER_BYTES, EncapMode, Packet, decapsulate, encapsulate
from .topology import (
    HierAddress,
    NodeKind,
    Strategy,
    Topology,
    hop_count,
    load_topology,
    parse_address,
    strategy_route,
)

O, L1, L2 = Strategy.ORIGINAL, Strategy.ONE_LEVEL_UP, Strategy.TWO_LEVEL_UP
A = parse_address

REF_ORIGINAL_PATH = [A(x) for x in "0.0.0 1.0.0 1.1.0 1.2.0 1.1.0 1.0.0 1.4.0 1.5.0".split()]
REF_SHA_PATH = [A(x) for x in "0.0.0 1.0.0 1.4.0 1.5.0".split()]

# (Original, OneLevel, TwoLevel) data-path edge counts per foreign agent
HOP_MATRIX = {"1.3.0": (5, 3, 3), "1.5.0": (7, 5, 3), "0.2.1": (8, 6, 4), "0.1.0": (7, 5, 3)}

# registration times (s) from the published comparison tables
REF_REG = {
    "1.5.0": {"original": 0.808378, "onelevel": 0.606031, "twolevel": 0.406199},
    "0.2.1": {"original": 1.206543, "onelevel": 1.00670, "twolevel": 0.803992},
    "0.1.0": {"original": 0.808922, "onelevel": 0.60673, "twolevel": 0.40611},
}
RATIO_TOLERANCE = 0.10          # relative
DELAY_EQUAL_TOLERANCE = 0.001   # s; resolution of the published delay readings
HOP_LATENCY_220B = 0.02088      # 0.020 + 220*8/2e6, by hand
CBR_PACKETS = 98                # floor((20-0.5)*5)+1
RANDOM_CASES = 100


@dataclass(frozen=True)
class Criterion:
    number: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number}. {self.name}: {self.detail}"


def bfs_path(topo: Topology, src: HierAddress, dst: HierAddress) -> List[HierAddress]:
    """Brute-force BFS with lexicographic frontier; independent of tree walking."""
    prev = {src: None}
    frontier = deque([src])
    while frontier:
        cur = frontier.popleft()
        if cur == dst:
            break
        for nxt in sorted(topo.neighbors(cur)):
            if nxt not in prev:
                prev[nxt] = cur
                frontier.append(nxt)
    if dst not in prev:
        raise ValueError(f"{dst} unreachable from {src}")
    path = [dst]
    while prev[path[-1]] is not None:
        path.append(prev[path[-1]])
    return path[::-1]


def bfs_strategy_hops(topo: Topology, cn, ha, coa, levels: int) -> int:
    via = ha
    for _ in range(levels):
        via = topo.node(via).parent
    return len(bfs_path(topo, cn, via)) - 1 + len(bfs_path(topo, via, coa)) - 1


@lru_cache(maxsize=None)
def scenario_report(sid: str, terminates_at: str = INTERCEPTOR) -> MetricsReport:
    cfg = builtin_scenario(sid)
    cfg.registration_terminates_at = terminates_at
    return run_scenario(cfg)


# -- criteria -------------------------------------------------------------------------

def check_paths() -> Criterion:
    topo = load_topology()
    orig = strategy_route(topo, A("0.0.0"), A("1.2.0"), A("1.5.0"), O)
    sha = strategy_route(topo, A("0.0.0"), A("1.2.0"), A("1.5.0"), L2)
    ok = orig == REF_ORIGINAL_PATH and sha == REF_SHA_PATH
    fmt = lambda p: "(" + ", ".join(map(str, p)) + ")"
    return Criterion(1, "path reproduction", ok, f"original={fmt(orig)} twolevel={fmt(sha)}")


def check_hop_matrix() -> Criterion:
    topo = load_topology()
    cn, ha = A("0.0.0"), A("1.2.0")
    bad = []
    for fa, expected in HOP_MATRIX.items():
        got = tuple(hop_count(strategy_route(topo, cn, ha, A(fa), s)) for s in ALL_STRATEGIES)
        oracle = tuple(bfs_strategy_hops(topo, cn, ha, A(fa), s.levels_above) for s in ALL_STRATEGIES)
        if got != expected or oracle != expected:
            bad.append(f"{fa}: got {got}, bfs {oracle}, expected {expected}")
    a_equal = HOP_MATRIX["1.3.0"][1] == HOP_MATRIX["1.3.0"][2]
    ok = not bad and a_equal
    return Criterion(2, "hop-count matrix", ok, "; ".join(bad) or "all four FAs match the BFS oracle")


def check_delay_ordering() -> Criterion:
    parts, ok = [], True
    for sid in "ABCD":
        rep = scenario_report(sid)
        o, l1, l2 = (rep[s].steady_delay_s for s in ALL_STRATEGIES)
        if sid == "A":
            good = abs(l2 - l1) < DELAY_EQUAL_TOLERANCE and l1 < o - DELAY_EQUAL_TOLERANCE
        else:
            good = l2 < l1 < o
        ok &= good
        parts.append(f"{sid}:{o:.6f}/{l1:.6f}/{l2:.6f}{'' if good else ' !'}")
    return Criterion(3, "delay ordering (orig/one/two)", ok, " ".join(parts))


def check_registration_ratios() -> Criterion:
    def within(value, target):
        return abs(value - target) <= RATIO_TOLERANCE * target

    b, d = scenario_report("B"), scenario_report("D")
    reg = lambda rep, s: rep[s].registration_time_s
    r_b = reg(b, L2) / reg(b, O)
    r_d = reg(d, L2) / reg(d, O)
    r_b1 = reg(b, L1) / reg(b, O)
    t_b = REF_REG["1.5.0"]["twolevel"] / REF_REG["1.5.0"]["original"]
    t_d = REF_REG["0.1.0"]["twolevel"] / REF_REG["0.1.0"]["original"]
    t_b1 = REF_REG["1.5.0"]["onelevel"] / REF_REG["1.5.0"]["original"]
    imp1 = improvement(REF_REG["1.5.0"]["original"], REF_REG["1.5.0"]["twolevel"])
    imp2 = improvement(REF_REG["1.5.0"]["onelevel"], REF_REG["1.5.0"]["twolevel"])
    arith = f"{imp1:.4g}" == f"{49.75135395:.4g}" and f"{imp2:.4g}" == f"{32.97389077:.4g}"
    ok = within(r_b, t_b) and within(r_d, t_d) and within(r_b1, t_b1) and arith
    detail = (f"two/orig@1.5.0={r_b:.4f} (target {t_b:.4f}), two/orig@0.1.0={r_d:.4f} "
              f"(target {t_d:.4f}), one/orig@1.5.0={r_b1:.4f} (target {t_b1:.4f}), "
              f"improvement={imp1:.8f}%/{imp2:.8f}%")
    return Criterion(4, "registration-time ratios", ok, detail)


def check_loss_dominance() -> Criterion:
    parts, ok = [], True
    for sid in "ABCDE":
        rep = scenario_report(sid)
        o, l1, l2 = (rep[s].loss_in_handoff_window for s in ALL_STRATEGIES)
        good = l2 <= l1 <= o
        if sid in "BCD":
            good = good and l2 < l1 < o
        ok &= good
        parts.append(f"{sid}:{o}/{l1}/{l2}{'' if good else ' !'}")
    return Criterion(5, "handoff loss dominance (orig/one/two)", ok, " ".join(parts))


def random_case(rng: random.Random) -> Tuple[Topology, dict]:
    """A random tree (<= 4 levels, <= 50 wired nodes) with one HA, FAs and a mobile."""
    topo = Topology()
    counter = [0]

    def fresh():
        counter[0] += 1
        n = counter[0]
        return f"{n // 100}.{(n // 10) % 10}.{n % 10}"

    root = fresh()
    topo.add_node(root, None, NodeKind.CORRESPONDENT)
    levels = {0: [root]}
    size = rng.randint(6, 30)
    wired = [root]
    while len(wired) < size:
        parent = rng.choice([a for lvl in (0, 1, 2) for a in levels.get(lvl, [])])
        level = topo.node(parent).level + 1
        addr = fresh()
        topo.add_node(addr, parent, NodeKind.ROUTER)
        levels.setdefault(level, []).append(addr)
        wired.append(addr)
    deep = levels.get(2, []) + levels.get(3, [])
    if not deep:
        a1 = fresh()
        topo.add_node(a1, root, NodeKind.ROUTER)
        a2 = fresh()
        topo.add_node(a2, a1, NodeKind.ROUTER)
        deep = [a2]
        wired += [a1, a2]
    ha = A(rng.choice(deep))
    topo.nodes[ha].kind = NodeKind.HOME_AGENT
    others = [A(w) for w in wired if A(w) != ha and A(w) != A(root)]
    fas = rng.sample(others, k=min(len(others), rng.randint(1, 4)))
    for fa in fas:
        topo.nodes[fa].kind = NodeKind.FOREIGN_AGENT
    mobile = A(fresh())
    topo.add_node(mobile, ha, NodeKind.MOBILE, delay=0.002)
    plain = [A(w) for w in wired if topo.node(w).kind in (NodeKind.ROUTER, NodeKind.CORRESPONDENT)]
    sim_time = rng.choice([4.0, 6.0, 10.0])
    params = SimParams(rate=rng.choice([2.0, 5.0, 10.0]), sim_time=sim_time,
                       traffic_start=rng.choice([0.0, 0.5, 1.0]),
                       packet_size=rng.choice([64, 200, 512]))
    at, current, handoffs = 0.0, ha, []
    for _ in range(rng.randint(0, 3)):
        at = round(at + rng.uniform(0.5, sim_time / 3), 3)
        if at >= sim_time:
            break
        target = rng.choice([a for a in fas + [ha] if a != current])
        handoffs.append((at, target))
        current = target
    return topo, dict(
        mobile=mobile, cn=rng.choice(plain), handoffs=handoffs, params=params,
        seed=rng.randint(0, 2**31), mode=rng.choice(list(EncapMode)),
        terminates_at=rng.choice([INTERCEPTOR, HOME_AGENT]),
        strategy=rng.choice(ALL_STRATEGIES),
    )


def check_conservation_determinism(cases: int = RANDOM_CASES, seed: int = 20240) -> Criterion:
    rng = random.Random(seed)
    failures = []
    for i in range(cases):
        topo, kw = random_case(rng)
        strategy = kw.pop("strategy")
        runs = []
        for _ in range(2):
            w = World(topo, strategy, **kw)
            w.run()
            runs.append(w)
        s = runs[0].data_summary()
        if s["sent"] != s["received"] + s["dropped"] + s["in_flight"]:
            failures.append(f"case {i}: conservation {s}")
        if runs[0].trace.to_csv() != runs[1].trace.to_csv():
            failures.append(f"case {i}: trace differs between replays")
        pkt = Packet(A("0.0.0"), kw["mobile"], rng.randint(0, 1500), i, float(i))
        for mode in EncapMode:
            x, y = rng.choice(list(topo.nodes)), rng.choice(list(topo.nodes))
            if decapsulate(encapsulate(pkt, mode, x, y), y) != pkt:
                failures.append(f"case {i}: {mode.label} round-trip")
    ok = not failures
    return Criterion(6, "conservation & determinism", ok,
                     f"{cases} random cases" + ("" if ok else ": " + "; ".join(failures[:5])))


def check_traffic_arithmetic() -> Criterion:
    topo = load_topology()
    w = World(topo, O, A("1.2.1"))
    w.run()
    sent = len(w.trace.where("send"))
    link = topo.link(A("0.0.0"), A("1.0.0"))
    latency = link.latency(200 + BASE_HEADER_BYTES)
    ok = sent == CBR_PACKETS and abs(latency - HOP_LATENCY_220B) < 1e-12
    return Criterion(7, "traffic arithmetic", ok, f"{sent} packets, 220-byte hop {latency:.6f} s")


def check_at_home() -> Criterion:
    topo = load_topology()
    traces = []
    for s in ALL_STRATEGIES:
        w = World(topo, s, A("1.2.1"))
        w.run()
        traces.append(w.trace)
    identical = traces[0].to_csv() == traces[1].to_csv() == traces[2].to_csv()
    no_tunnel = all(not t.where("encap") for t in traces)

    # scenario E after every strategy has finished deregistering
    rep = scenario_report("E")
    settle = max(r.t_reply for s in ALL_STRATEGIES for r in rep[s].registrations if r.deregistration)
    post = []
    for s in ALL_STRATEGIES:
        recs = [(r.seq, round(r.time, 9), r.wire_bytes) for r in rep[s].trace.where("recv")
                if r.time - r.value > settle]
        post.append(recs)
    e_same = post[0] == post[1] == post[2] and all(rep[s].tunneled_after_final_registration == 0
                                                   for s in ALL_STRATEGIES)
    ok = identical and no_tunnel and e_same
    return Criterion(8, "at-home transparency", ok,
                     f"traces identical={identical}, tunnels={not no_tunnel}, "
                     f"scenario E post-return identical={e_same} ({len(post[0])} packets)")


CHECKS: List[Callable[[], Criterion]] = [
    check_paths, check_hop_matrix, check_delay_ordering, check_registration_ratios,
    check_loss_dominance, check_conservation_determinism, check_traffic_arithmetic, check_at_home,
]


def run_all() -> List[Criterion]:
    return [check() for check in CHECKS]
