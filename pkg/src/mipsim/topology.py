"""Hierarchical addressing, the network tree and tree routing.

Every node carries a three-level ``domain.cluster.node`` address.  The
wired part of the network is a single tree; the mobile host hangs off
whichever agent it is currently attached to by a wireless link.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional

import yaml

MAX_WIRED_LEVEL = 3


class AddressError(ValueError):
    pass


class TopologyError(Exception):
    pass


class InsufficientDepth(TopologyError):
    def __init__(self, address: "HierAddress", levels: int, available: int):
        self.address = address
        self.levels = levels
        self.available = available
        super().__init__(
            f"insufficient depth: {address} has {available} ancestor(s), {levels} requested"
        )


@dataclass(frozen=True, order=True)
class HierAddress:
    domain: int
    cluster: int
    node: int

    def __str__(self) -> str:
        return f"{self.domain}.{self.cluster}.{self.node}"

    @classmethod
    def parse(cls, text: str) -> "HierAddress":
        return parse_address(text)


def parse_address(text) -> HierAddress:
    """Parse ``"d.c.n"`` into a :class:`HierAddress`.

    >>> parse_address("1.2.1")
    HierAddress(domain=1, cluster=2, node=1)
    """
    if isinstance(text, HierAddress):
        return text
    text = str(text).strip()
    parts = text.split(".")
    if len(parts) != 3:
        raise AddressError(f"{text!r}: expected 3 components, got {len(parts)}")
    values = []
    for name, part in zip(("domain", "cluster", "node"), parts):
        if not re.fullmatch(r"[0-9]+", part):
            raise AddressError(f"{text!r}: {name} component {part!r} is not a non-negative integer")
        values.append(int(part))
    return HierAddress(*values)


class NodeKind(str, enum.Enum):
    ROUTER = "Router"
    HOME_AGENT = "HomeAgent"
    FOREIGN_AGENT = "ForeignAgent"
    CORRESPONDENT = "CorrespondentHost"
    MOBILE = "MobileHost"


class Strategy(enum.Enum):
    """Where traffic for a roaming host is intercepted and tunneled."""

    ORIGINAL = ("original", 0)
    ONE_LEVEL_UP = ("onelevel", 1)
    TWO_LEVEL_UP = ("twolevel", 2)

    def __init__(self, label: str, levels_above: int):
        self.label = label
        self.levels_above = levels_above

    @classmethod
    def from_label(cls, label: str) -> "Strategy":
        for s in cls:
            if s.label == label:
                return s
        raise ValueError(f"unknown strategy {label!r} (expected one of original, onelevel, twolevel)")


@dataclass
class TopologyNode:
    address: HierAddress
    parent: Optional[HierAddress]
    kind: NodeKind
    level: int

    @property
    def is_mobile(self) -> bool:
        return self.kind is NodeKind.MOBILE


@dataclass(frozen=True)
class Link:
    a: HierAddress
    b: HierAddress
    delay: float
    bandwidth: float
    wireless: bool = False

    def __post_init__(self):
        if self.delay <= 0 or self.bandwidth <= 0:
            raise TopologyError(f"link {self.a}-{self.b}: delay and bandwidth must be positive")

    @property
    def endpoints(self) -> FrozenSet[HierAddress]:
        return frozenset((self.a, self.b))

    def latency(self, wire_bytes: int) -> float:
        """Propagation delay plus serialization of ``wire_bytes``."""
        return self.delay + wire_bytes * 8 / self.bandwidth


@dataclass
class Topology:
    nodes: Dict[HierAddress, TopologyNode] = field(default_factory=dict)
    links: Dict[FrozenSet[HierAddress], Link] = field(default_factory=dict)

    def __post_init__(self):
        self._children: Dict[HierAddress, List[HierAddress]] = {}

    # construction -------------------------------------------------------

    def add_node(self, address, parent, kind: NodeKind, delay: float = 0.020,
                 bandwidth: float = 2_000_000, wireless: bool = False) -> TopologyNode:
        address = parse_address(address)
        if address in self.nodes:
            raise TopologyError(f"duplicate node {address}")
        if parent is None:
            if any(n.parent is None and not n.is_mobile for n in self.nodes.values()):
                raise TopologyError(f"{address}: a root already exists")
            node = TopologyNode(address, None, kind, 0)
        else:
            parent = parse_address(parent)
            if parent not in self.nodes:
                raise TopologyError(f"{address}: unknown parent {parent}")
            if self.nodes[parent].is_mobile:
                raise TopologyError(f"{address}: a mobile host cannot be a parent")
            level = self.nodes[parent].level + 1
            if kind is not NodeKind.MOBILE and level > MAX_WIRED_LEVEL:
                raise TopologyError(
                    f"{address}: depth {level} exceeds the 4-level hierarchy"
                )
            node = TopologyNode(address, parent, kind, level)
            self.links[frozenset((address, parent))] = Link(
                parent, address, delay, bandwidth, wireless or kind is NodeKind.MOBILE
            )
            self._children.setdefault(parent, []).append(address)
        self.nodes[address] = node
        return node

    def add_link(self, a, b, delay: float, bandwidth: float, wireless: bool = False) -> None:
        a, b = parse_address(a), parse_address(b)
        if a in self.nodes and b in self.nodes:
            raise TopologyError(f"link {a}-{b} would create a cycle")
        raise TopologyError(f"link {a}-{b}: links are created with their child node")

    def override_link(self, a, b, delay=None, bandwidth=None, wireless=None) -> None:
        a, b = parse_address(a), parse_address(b)
        key = frozenset((a, b))
        if key not in self.links:
            if a in self.nodes and b in self.nodes:
                raise TopologyError(f"link {a}-{b} would create a cycle")
            raise TopologyError(f"link {a}-{b}: unknown endpoint")
        old = self.links[key]
        self.links[key] = Link(
            old.a, old.b,
            old.delay if delay is None else float(delay),
            old.bandwidth if bandwidth is None else float(bandwidth),
            old.wireless if wireless is None else bool(wireless),
        )

    # mobility -----------------------------------------------------------

    def detach(self, mobile: HierAddress) -> Optional[Link]:
        node = self.node(mobile)
        if not node.is_mobile:
            raise TopologyError(f"{mobile} is not a mobile host")
        if node.parent is None:
            return None
        link = self.links.pop(frozenset((mobile, node.parent)))
        self._children[node.parent].remove(mobile)
        node.parent = None
        return link

    def attach(self, mobile: HierAddress, agent: HierAddress, delay: float, bandwidth: float) -> Link:
        node = self.node(mobile)
        if not node.is_mobile:
            raise TopologyError(f"{mobile} is not a mobile host")
        target = self.node(agent)
        if target.kind not in (NodeKind.HOME_AGENT, NodeKind.FOREIGN_AGENT):
            raise TopologyError(f"{agent} is not a mobility agent")
        self.detach(mobile)
        node.parent = agent
        node.level = target.level + 1
        link = Link(agent, mobile, delay, bandwidth, True)
        self.links[link.endpoints] = link
        self._children.setdefault(agent, []).append(mobile)
        return link

    # queries ------------------------------------------------------------

    def node(self, address) -> TopologyNode:
        address = parse_address(address)
        try:
            return self.nodes[address]
        except KeyError:
            raise TopologyError(f"unknown address {address}") from None

    def children(self, address: HierAddress) -> List[HierAddress]:
        return sorted(self._children.get(address, []))

    def neighbors(self, address: HierAddress) -> List[HierAddress]:
        node = self.node(address)
        out = list(self.children(address))
        if node.parent is not None:
            out.append(node.parent)
        return sorted(out)

    def link(self, a: HierAddress, b: HierAddress) -> Link:
        try:
            return self.links[frozenset((a, b))]
        except KeyError:
            raise TopologyError(f"no link {a}-{b}") from None

    @property
    def root(self) -> HierAddress:
        roots = [n.address for n in self.nodes.values() if n.parent is None and not n.is_mobile]
        if len(roots) != 1:
            raise TopologyError(f"expected exactly one root, found {len(roots)}")
        return roots[0]

    def of_kind(self, kind: NodeKind) -> List[HierAddress]:
        return sorted(a for a, n in self.nodes.items() if n.kind is kind)

    def ancestors(self, address: HierAddress) -> List[HierAddress]:
        """Chain from ``address`` up to the root, inclusive of both."""
        chain = [parse_address(address)]
        node = self.node(address)
        while node.parent is not None:
            chain.append(node.parent)
            node = self.nodes[node.parent]
        return chain

    def validate(self) -> None:
        self.root
        for node in self.nodes.values():
            if node.parent is None:
                continue
            parent = self.nodes[node.parent]
            if node.level != parent.level + 1:
                raise TopologyError(f"{node.address}: level {node.level} inconsistent with parent")
            if frozenset((node.address, node.parent)) not in self.links:
                raise TopologyError(f"{node.address}: missing link to parent")
        if len(self.links) != sum(1 for n in self.nodes.values() if n.parent is not None):
            raise TopologyError("link count does not match parent relations")

    def copy(self) -> "Topology":
        other = Topology()
        for addr, n in self.nodes.items():
            other.nodes[addr] = TopologyNode(n.address, n.parent, n.kind, n.level)
        other.links = dict(self.links)
        other._children = {k: list(v) for k, v in self._children.items()}
        return other


def load_topology(path=None, link_delay: float = 0.020, bandwidth: float = 2_000_000,
                  wireless_delay: float = 0.002) -> Topology:
    """Build a :class:`Topology` from a YAML node list.

    With no ``path`` the bundled reconstruction of the experiment network
    is used.
    """
    if path is None:
        text = resources.files("mipsim.data").joinpath("network.yaml").read_text()
        source = "<bundled network>"
    else:
        text = Path(path).read_text()
        source = str(path)
    try:
        doc = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise TopologyError(f"{source}: {exc}") from None
    topo = Topology()
    pending = list(doc.get("nodes") or [])
    if not pending:
        raise TopologyError(f"{source}: no nodes")
    # parents may be listed after their children
    while pending:
        progressed = False
        for rec in list(pending):
            parent = rec.get("parent", "root")
            parent = None if parent in (None, "root") else parse_address(parent)
            if parent is not None and parent not in topo.nodes:
                continue
            try:
                kind = NodeKind(rec.get("kind", "Router"))
            except ValueError:
                raise TopologyError(f"{source}: unknown node kind {rec.get('kind')!r}") from None
            wireless = kind is NodeKind.MOBILE
            topo.add_node(rec["address"], parent, kind,
                          wireless_delay if wireless else link_delay, bandwidth, wireless)
            pending.remove(rec)
            progressed = True
        if not progressed:
            names = ", ".join(str(r.get("address")) for r in pending)
            raise TopologyError(f"{source}: unreachable or cyclic nodes: {names}")
    for rec in doc.get("links") or []:
        topo.override_link(rec["a"], rec["b"], rec.get("delay"), rec.get("bandwidth"),
                           rec.get("wireless"))
    topo.validate()
    return topo


def ancestor_above(topo: Topology, addr, levels: int) -> HierAddress:
    if levels < 1:
        raise ValueError("levels must be positive")
    chain = topo.ancestors(addr)
    if levels >= len(chain):
        raise InsufficientDepth(parse_address(addr), levels, len(chain) - 1)
    return chain[levels]


def interception_point(topo: Topology, ha, strategy: Strategy) -> HierAddress:
    if strategy.levels_above == 0:
        return parse_address(ha)
    return ancestor_above(topo, ha, strategy.levels_above)


def shortest_path(topo: Topology, src, dst) -> List[HierAddress]:
    """Unique tree path from ``src`` to ``dst``, both endpoints included."""
    up = topo.ancestors(src)
    down = topo.ancestors(dst)
    on_down = {a: i for i, a in enumerate(down)}
    for i, a in enumerate(up):
        if a in on_down:
            return up[: i + 1] + list(reversed(down[: on_down[a]]))
    raise TopologyError(f"{src} and {dst} are not connected")


def _join(first: List[HierAddress], second: List[HierAddress]) -> List[HierAddress]:
    return first + second[1:]


def strategy_route(topo: Topology, cn, ha, coa, strategy: Strategy) -> List[HierAddress]:
    """Data path from a correspondent to the care-of address under ``strategy``."""
    cn, ha, coa = parse_address(cn), parse_address(ha), parse_address(coa)
    if coa == ha:
        return shortest_path(topo, cn, ha)
    via = interception_point(topo, ha, strategy)
    return _join(shortest_path(topo, cn, via), shortest_path(topo, via, coa))


def hop_count(path: Iterable[HierAddress]) -> int:
    return max(len(list(path)) - 1, 0)


def format_path(path: Iterable[HierAddress]) -> str:
    return " ".join(str(a) for a in path)
