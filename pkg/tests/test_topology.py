from collections import deque

import pytest
from hypothesis import given, settings, strategies as st

from mipsim.topology import (
    AddressError,
    HierAddress,
    InsufficientDepth,
    NodeKind,
    Strategy,
    Topology,
    TopologyError,
    ancestor_above,
    format_path,
    hop_count,
    load_topology,
    parse_address,
    shortest_path,
    strategy_route,
)

A = parse_address


def path(text):
    return [A(x) for x in text.split()]


def bfs(topo, src, dst):
    prev = {src: None}
    q = deque([src])
    while q:
        cur = q.popleft()
        for nxt in topo.neighbors(cur):
            if nxt not in prev:
                prev[nxt] = cur
                q.append(nxt)
    out = [dst]
    while prev[out[-1]] is not None:
        out.append(prev[out[-1]])
    return out[::-1]


@pytest.mark.parametrize("text,expected", [("1.2.1", (1, 2, 1)), ("0.0.0", (0, 0, 0)),
                                           (" 10.20.30 ", (10, 20, 30))])
def test_parse_address(text, expected):
    assert A(text) == HierAddress(*expected)


@pytest.mark.parametrize("text,component", [("1.2", "3 components"), ("1.x.3", "cluster"),
                                            ("-1.0.0", "domain"), ("1.2.3.4", "3 components"),
                                            ("1.2.", "node")])
def test_parse_address_errors_name_component(text, component):
    with pytest.raises(AddressError, match=component):
        A(text)


@given(st.integers(0, 999), st.integers(0, 999), st.integers(0, 999))
def test_render_parse_round_trip(d, c, n):
    addr = HierAddress(d, c, n)
    assert A(str(addr)) == addr


def test_ancestor_above(topo):
    assert ancestor_above(topo, A("1.2.0"), 2) == A("1.0.0")
    assert ancestor_above(topo, A("1.2.0"), 1) == A("1.1.0")
    with pytest.raises(InsufficientDepth) as exc:
        ancestor_above(topo, A("0.0.0"), 1)
    assert exc.value.available == 0
    with pytest.raises(InsufficientDepth) as exc:
        ancestor_above(topo, A("1.2.0"), 4)
    assert exc.value.available == 3


def test_ancestor_composition(topo):
    for addr in topo.nodes:
        depth = len(topo.ancestors(addr)) - 1
        for i in range(1, depth):
            for j in range(1, depth - i + 1):
                assert ancestor_above(topo, ancestor_above(topo, addr, i), j) == \
                    ancestor_above(topo, addr, i + j)


def test_shortest_path_examples(topo):
    assert shortest_path(topo, A("0.0.0"), A("1.5.0")) == path("0.0.0 1.0.0 1.4.0 1.5.0")
    assert shortest_path(topo, A("1.2.0"), A("1.2.0")) == [A("1.2.0")]
    assert shortest_path(topo, A("1.2.0"), A("0.2.1")) == path("1.2.0 1.1.0 1.0.0 0.0.0 0.2.0 0.2.1")
    with pytest.raises(TopologyError):
        shortest_path(topo, A("0.0.0"), A("9.9.9"))


def test_shortest_path_matches_bfs_on_bundled_tree(topo):
    for a in topo.nodes:
        for b in topo.nodes:
            assert shortest_path(topo, a, b) == bfs(topo, a, b)


@st.composite
def trees(draw):
    size = draw(st.integers(1, 50))
    topo = Topology()
    topo.add_node(HierAddress(0, 0, 0), None, NodeKind.ROUTER)
    addrs = [HierAddress(0, 0, 0)]
    for i in range(1, size):
        candidates = [a for a in addrs if topo.node(a).level < 3]
        parent = draw(st.sampled_from(candidates))
        addr = HierAddress(i // 100, (i // 10) % 10, i % 10)
        topo.add_node(addr, parent, NodeKind.ROUTER)
        addrs.append(addr)
    a = draw(st.sampled_from(addrs))
    b = draw(st.sampled_from(addrs))
    return topo, a, b


@settings(max_examples=200, deadline=None)
@given(trees())
def test_shortest_path_equals_bfs_on_random_trees(case):
    topo, a, b = case
    p = shortest_path(topo, a, b)
    assert p == bfs(topo, a, b)
    assert p[0] == a and p[-1] == b
    assert len(set(p)) == len(p)
    assert shortest_path(topo, b, a) == p[::-1]


def test_strategy_route_examples(topo):
    cn, ha, fa = A("0.0.0"), A("1.2.0"), A("1.5.0")
    assert strategy_route(topo, cn, ha, fa, Strategy.ORIGINAL) == \
        path("0.0.0 1.0.0 1.1.0 1.2.0 1.1.0 1.0.0 1.4.0 1.5.0")
    assert strategy_route(topo, cn, ha, fa, Strategy.TWO_LEVEL_UP) == path("0.0.0 1.0.0 1.4.0 1.5.0")
    assert strategy_route(topo, cn, ha, fa, Strategy.ONE_LEVEL_UP) == \
        path("0.0.0 1.0.0 1.1.0 1.0.0 1.4.0 1.5.0")
    for s in Strategy:
        assert strategy_route(topo, cn, ha, ha, s) == path("0.0.0 1.0.0 1.1.0 1.2.0")


@pytest.mark.parametrize("fa,expected", [("1.3.0", (5, 3, 3)), ("1.5.0", (7, 5, 3)),
                                         ("0.2.1", (8, 6, 4)), ("0.1.0", (7, 5, 3))])
def test_hop_matrix_and_dominance(topo, fa, expected):
    got = tuple(hop_count(strategy_route(topo, A("0.0.0"), A("1.2.0"), A(fa), s))
                for s in (Strategy.ORIGINAL, Strategy.ONE_LEVEL_UP, Strategy.TWO_LEVEL_UP))
    assert got == expected
    assert got[2] <= got[1] <= got[0]


def test_bundled_tree_shape(topo):
    topo.validate()
    assert topo.root == A("0.0.0")
    assert topo.of_kind(NodeKind.HOME_AGENT) == [A("1.2.0")]
    assert sorted(topo.of_kind(NodeKind.FOREIGN_AGENT)) == [A("0.1.0"), A("0.2.1"), A("1.3.0"), A("1.5.0")]
    assert topo.node("1.2.1").parent == A("1.2.0")
    assert topo.link(A("0.0.0"), A("1.0.0")).delay == pytest.approx(0.020)
    assert topo.link(A("1.2.0"), A("1.2.1")).wireless


def test_cycle_and_depth_rejected(topo):
    with pytest.raises(TopologyError, match="cycle"):
        topo.add_link("1.5.0", "0.2.1", 0.02, 2e6)
    with pytest.raises(TopologyError, match="4-level"):
        topo.add_node("1.2.9", "1.2.0", NodeKind.ROUTER)
    with pytest.raises(TopologyError, match="duplicate"):
        topo.add_node("1.2.0", "1.1.0", NodeKind.ROUTER)


def test_link_parameters_validated():
    topo = Topology()
    topo.add_node("0.0.0", None, NodeKind.ROUTER)
    with pytest.raises(TopologyError, match="positive"):
        topo.add_node("0.0.1", "0.0.0", NodeKind.ROUTER, delay=0.0)


def test_attach_and_detach_move_the_mobile(topo):
    mn = A("1.2.1")
    topo.attach(mn, A("1.5.0"), 0.002, 2e6)
    assert topo.node(mn).parent == A("1.5.0")
    assert mn in topo.children(A("1.5.0")) and mn not in topo.children(A("1.2.0"))
    topo.detach(mn)
    assert topo.node(mn).parent is None
    with pytest.raises(TopologyError):
        topo.attach(mn, A("1.4.0"), 0.002, 2e6)


def test_yaml_loader_override_and_errors(tmp_path):
    f = tmp_path / "t.yaml"
    f.write_text(
        "nodes:\n"
        "  - {address: 0.0.1, parent: 0.0.0, kind: HomeAgent}\n"
        "  - {address: 0.0.0, kind: CorrespondentHost}\n"
        "  - {address: 0.0.2, parent: 0.0.0, kind: ForeignAgent}\n"
        "  - {address: 0.0.3, parent: 0.0.1, kind: MobileHost}\n"
        "links:\n  - {a: 0.0.0, b: 0.0.2, delay: 0.05}\n")
    topo = load_topology(f)
    assert topo.link(A("0.0.0"), A("0.0.2")).delay == 0.05
    assert topo.link(A("0.0.0"), A("0.0.1")).delay == 0.020
    f.write_text("nodes:\n  - {address: 0.0.1, parent: 0.0.9}\n")
    with pytest.raises(TopologyError, match="unreachable"):
        load_topology(f)
    f.write_text("nodes:\n  - {address: 0.0.0, kind: Spaceship}\n")
    with pytest.raises(TopologyError, match="kind"):
        load_topology(f)


def test_format_path():
    assert format_path(path("0.0.0 1.0.0")) == "0.0.0 1.0.0"
    assert hop_count([]) == 0
