import pytest
from hypothesis import given, strategies as st

from mipsim.protocol import (
    BindingTable,
    DuplicateRegistration,
    EncapMode,
    MisdeliveryError,
    Packet,
    ProtocolError,
    RegStatus,
    RegistrationRequest,
    TunnelingError,
    VisitorEntry,
    VisitorList,
    accept,
    binding_update,
    decapsulate,
    deny,
    encapsulate,
    expire,
    visitor_admit,
    visitor_confirm,
)
from mipsim.topology import HierAddress, parse_address

A = parse_address
HOME, HA = A("1.2.1"), A("1.2.0")


def data(size=200):
    return Packet(A("0.0.0"), HOME, size, 7, 1.5)


def test_encapsulate_example():
    p = encapsulate(data(), EncapMode.IP_IN_IP, A("1.0.0"), A("1.5.0"))
    assert p.wire_size == 240
    assert len(p.encap_stack) == 1
    assert p.next_dst == A("1.5.0")
    inner = decapsulate(p, A("1.5.0"))
    assert inner.wire_size == 220 and inner == data()


@pytest.mark.parametrize("mode,wire", [(EncapMode.IP_IN_IP, 240), (EncapMode.MINIMAL, 232),
                                       (EncapMode.GRE, 244)])
def test_overheads(mode, wire):
    assert encapsulate(data(), mode, HA, A("1.5.0")).wire_size == wire


addresses = st.builds(HierAddress, st.integers(0, 9), st.integers(0, 9), st.integers(0, 9))


@given(st.integers(0, 1500), st.sampled_from(list(EncapMode)), addresses, addresses, addresses)
def test_round_trip(size, mode, src, a, b):
    p = Packet(src, HOME, size, 0, 0.0)
    assert decapsulate(encapsulate(p, mode, a, b), b) == p


def test_depth_limit():
    p = encapsulate(data(), EncapMode.GRE, HA, A("1.5.0"))
    p = encapsulate(p, EncapMode.MINIMAL, A("1.1.0"), HA)
    with pytest.raises(TunnelingError):
        encapsulate(p, EncapMode.IP_IN_IP, A("1.0.0"), A("1.1.0"))


def test_decapsulate_errors():
    with pytest.raises(ProtocolError):
        decapsulate(data(), A("1.5.0"))
    tunneled = encapsulate(data(), EncapMode.IP_IN_IP, A("1.0.0"), A("1.5.0"))
    with pytest.raises(MisdeliveryError):
        decapsulate(tunneled, A("1.3.0"))


def test_binding_update_examples():
    t = binding_update(BindingTable(), HOME, A("1.5.0"), 90)
    assert len(t) == 1 and t.lookup(HOME).lifetime_remaining == 90
    t = binding_update(t, HOME, A("1.3.0"), 135)
    assert len(t) == 1
    assert t.lookup(HOME).coa == A("1.3.0") and t.lookup(HOME).lifetime_remaining == 135
    t = binding_update(t, HOME, A("1.3.0"), 0)
    assert len(t) == 0
    with pytest.raises(ProtocolError):
        binding_update(t, HOME, A("1.3.0"), -1)


def test_expire_examples():
    t = binding_update(BindingTable(), HOME, A("1.5.0"), 90)
    assert HOME not in expire(t, 90)

    vl = VisitorList()
    vl.entries[A("1.2.1")] = VisitorEntry(A("1.2.1"), HA, "aa", 120.0)
    vl.entries[A("1.2.2")] = VisitorEntry(A("1.2.2"), HA, "bb", 160.0)
    expire(vl, 130)
    assert list(vl.entries) == [A("1.2.2")]
    assert vl.entries[A("1.2.2")].lifetime_remaining == pytest.approx(30)

    t = binding_update(BindingTable(), HOME, A("1.5.0"), 90)
    assert expire(t, 0).lookup(HOME).lifetime_remaining == 90


@given(st.floats(1, 500), st.lists(st.floats(0, 100), max_size=6))
def test_lifetime_never_increases_without_update(lifetime, steps):
    t = binding_update(BindingTable(), HOME, A("1.5.0"), lifetime)
    last = lifetime
    for dt in steps:
        expire(t, dt)
        entry = t.lookup(HOME)
        if entry is None:
            break
        assert entry.lifetime_remaining <= last
        last = entry.lifetime_remaining


def test_table_sink_records_actions():
    events = []
    t = BindingTable(sink=lambda *a: events.append(a[0]))
    binding_update(t, HOME, A("1.5.0"), 10)
    expire(t, 10)
    assert events == ["binding_update", "expire"]


def test_visitor_admit_and_confirm():
    req = RegistrationRequest(HOME, HA, A("1.5.0"), 120, 1)
    vl, decision = visitor_admit(VisitorList(), req, "mn-link", relay_to=A("1.0.0"))
    assert 1 in vl.pending and decision.relay_to == A("1.0.0")
    with pytest.raises(DuplicateRegistration):
        visitor_admit(vl, req, "mn-link")
    entry = visitor_confirm(vl, accept(req, 1800))
    assert entry.lifetime_remaining == 120 and vl.lookup(HOME) is entry
    assert not vl.pending


def test_visitor_denial_leaves_no_entry():
    req = RegistrationRequest(HOME, HA, A("1.5.0"), 120, 2)
    vl, _ = visitor_admit(VisitorList(), req, "mn-link")
    assert visitor_confirm(vl, deny(req, RegStatus.DENIED_BY_HA)) is None
    assert HOME not in vl
    with pytest.raises(ProtocolError):
        visitor_confirm(vl, accept(req, 1800))


def test_accept_caps_lifetime():
    req = RegistrationRequest(HOME, HA, A("1.5.0"), 5000, 3)
    assert accept(req, 1800).granted_lifetime == 1800
    with pytest.raises(ProtocolError):
        RegistrationRequest(HOME, HA, A("1.5.0"), -1, 4)
    assert RegistrationRequest(HOME, HA, HA, 0, 5).is_deregistration
