"""Mobile IP control messages, tunnel headers and the two mobility tables."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Optional, Tuple

from .topology import HierAddress

BASE_HEADER_BYTES = 20
CONTROL_PAYLOAD_BYTES = 48
MAX_ENCAP_DEPTH = 2
DEFAULT_LIFETIME = 120.0
# absorbs float residue when a timer fires exactly at expiry
LIFETIME_EPS = 1e-9


class ProtocolError(Exception):
    pass


class TunnelingError(ProtocolError):
    pass


class MisdeliveryError(ProtocolError):
    pass


class DuplicateRegistration(ProtocolError):
    pass


class EncapMode(enum.Enum):
    IP_IN_IP = ("IpInIp", 20)
    MINIMAL = ("Minimal", 12)
    GRE = ("Gre", 24)

    def __init__(self, label: str, overhead: int):
        self.label = label
        self.overhead = overhead

    @classmethod
    def from_label(cls, label: str) -> "EncapMode":
        for m in cls:
            if m.label.lower() == str(label).lower():
                return m
        raise ValueError(f"unknown encapsulation mode {label!r}")


@dataclass(frozen=True)
class EncapsulationHeader:
    mode: EncapMode
    outer_src: HierAddress
    outer_dst: HierAddress

    @property
    def overhead(self) -> int:
        return self.mode.overhead


class PacketKind(enum.Enum):
    DATA = "Data"
    ADVERTISEMENT = "Advertisement"
    SOLICITATION = "Solicitation"
    REG_REQUEST = "RegRequest"
    REG_REPLY = "RegReply"
    BINDING_FORWARD = "BindingForward"


@dataclass(frozen=True)
class Packet:
    src: HierAddress
    dst: HierAddress
    payload_size: int
    seq: int
    sent_at: float
    kind: PacketKind = PacketKind.DATA
    encap_stack: Tuple[EncapsulationHeader, ...] = ()
    body: object = None
    uid: int = 0

    @property
    def wire_size(self) -> int:
        return self.payload_size + BASE_HEADER_BYTES + sum(h.overhead for h in self.encap_stack)

    @property
    def next_dst(self) -> HierAddress:
        """Address the routers forward on: the outermost tunnel end, else ``dst``."""
        return self.encap_stack[-1].outer_dst if self.encap_stack else self.dst

    @property
    def tunneled(self) -> bool:
        return bool(self.encap_stack)


def encapsulate(pkt: Packet, mode: EncapMode, tunnel_src: HierAddress,
                tunnel_dst: HierAddress) -> Packet:
    if len(pkt.encap_stack) >= MAX_ENCAP_DEPTH:
        raise TunnelingError(f"packet {pkt.uid}: encapsulation depth would exceed {MAX_ENCAP_DEPTH}")
    header = EncapsulationHeader(mode, tunnel_src, tunnel_dst)
    return replace(pkt, encap_stack=pkt.encap_stack + (header,))


def decapsulate(pkt: Packet, at: HierAddress) -> Packet:
    if not pkt.encap_stack:
        raise ProtocolError(f"packet {pkt.uid}: nothing to decapsulate at {at}")
    top = pkt.encap_stack[-1]
    if top.outer_dst != at:
        raise MisdeliveryError(f"packet {pkt.uid}: tunnel for {top.outer_dst} reached {at}")
    return replace(pkt, encap_stack=pkt.encap_stack[:-1])


# -- messages ---------------------------------------------------------------

@dataclass(frozen=True)
class AgentAdvertisement:
    agent: HierAddress
    offered_coa: HierAddress
    is_home_agent: bool
    is_foreign_agent: bool
    lifetime: float
    sequence: int

    def __post_init__(self):
        if self.lifetime <= 0:
            raise ProtocolError("advertisement lifetime must be positive")


@dataclass(frozen=True)
class AgentSolicitation:
    mobile: HierAddress


@dataclass(frozen=True)
class RegistrationRequest:
    home_address: HierAddress
    home_agent: HierAddress
    coa: HierAddress
    requested_lifetime: float
    id: int

    def __post_init__(self):
        if self.requested_lifetime < 0:
            raise ProtocolError("requested lifetime must be >= 0")

    @property
    def is_deregistration(self) -> bool:
        return self.requested_lifetime == 0


class RegStatus(enum.Enum):
    ACCEPTED = "Accepted"
    DENIED_BY_FA = "DeniedByFA"
    DENIED_BY_HA = "DeniedByHA"


@dataclass(frozen=True)
class RegistrationReply:
    id: int
    granted_lifetime: float
    status: RegStatus
    home_address: HierAddress
    coa: HierAddress

    @property
    def accepted(self) -> bool:
        return self.status is RegStatus.ACCEPTED


@dataclass(frozen=True)
class BindingForward:
    home_address: HierAddress
    coa: HierAddress
    lifetime: float


def accept(request: RegistrationRequest, max_lifetime: float) -> RegistrationReply:
    return RegistrationReply(request.id, min(request.requested_lifetime, max_lifetime),
                             RegStatus.ACCEPTED, request.home_address, request.coa)


def deny(request: RegistrationRequest, status: RegStatus) -> RegistrationReply:
    return RegistrationReply(request.id, 0.0, status, request.home_address, request.coa)


# -- tables -----------------------------------------------------------------

# (action, home_address, coa, lifetime)
TableSink = Callable[[str, HierAddress, Optional[HierAddress], float], None]


@dataclass
class MobilityBinding:
    home_address: HierAddress
    coa: HierAddress
    lifetime_remaining: float


@dataclass
class VisitorEntry:
    home_address: HierAddress
    home_agent: HierAddress
    link_layer_id: str
    lifetime_remaining: float


@dataclass
class BindingTable:
    """Home address to care-of address map kept by a home agent or interceptor."""

    entries: Dict[HierAddress, MobilityBinding] = field(default_factory=dict)
    sink: Optional[TableSink] = field(default=None, repr=False, compare=False)

    def _emit(self, action, home, coa, lifetime):
        if self.sink is not None:
            self.sink(action, home, coa, lifetime)

    def lookup(self, home_address: HierAddress) -> Optional[MobilityBinding]:
        return self.entries.get(home_address)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, home_address):
        return home_address in self.entries


@dataclass
class VisitorList:
    entries: Dict[HierAddress, VisitorEntry] = field(default_factory=dict)
    pending: Dict[int, Tuple[RegistrationRequest, str]] = field(default_factory=dict)
    sink: Optional[TableSink] = field(default=None, repr=False, compare=False)

    def _emit(self, action, home, coa, lifetime):
        if self.sink is not None:
            self.sink(action, home, coa, lifetime)

    def lookup(self, home_address: HierAddress) -> Optional[VisitorEntry]:
        return self.entries.get(home_address)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, home_address):
        return home_address in self.entries


def binding_update(table: BindingTable, home_address: HierAddress, coa: HierAddress,
                   lifetime: float) -> BindingTable:
    """Upsert a binding; a zero lifetime deregisters."""
    if lifetime < 0:
        raise ProtocolError("binding lifetime must be >= 0")
    if lifetime == 0:
        old = table.entries.pop(home_address, None)
        if old is not None:
            table._emit("binding_remove", home_address, old.coa, 0.0)
        return table
    table.entries[home_address] = MobilityBinding(home_address, coa, float(lifetime))
    table._emit("binding_update", home_address, coa, float(lifetime))
    return table


def expire(table, elapsed: float):
    """Age every entry of a binding table or visitor list by ``elapsed`` seconds."""
    if elapsed < 0:
        raise ValueError("elapsed must be >= 0")
    if elapsed == 0:
        return table
    for key in sorted(table.entries):
        entry = table.entries[key]
        entry.lifetime_remaining -= elapsed
        if entry.lifetime_remaining <= LIFETIME_EPS:
            del table.entries[key]
            coa = getattr(entry, "coa", None)
            table._emit("expire", key, coa, 0.0)
    return table


@dataclass(frozen=True)
class RelayDecision:
    request: RegistrationRequest
    relay_to: Optional[HierAddress]


def visitor_admit(vlist: VisitorList, request: RegistrationRequest, link_layer_id: str,
                  relay_to: Optional[HierAddress] = None) -> Tuple[VisitorList, RelayDecision]:
    if request.id in vlist.pending:
        raise DuplicateRegistration(f"registration id {request.id} already pending")
    vlist.pending[request.id] = (request, link_layer_id)
    vlist._emit("visitor_pending", request.home_address, request.coa, request.requested_lifetime)
    return vlist, RelayDecision(request, relay_to)


def visitor_confirm(vlist: VisitorList, reply: RegistrationReply) -> Optional[VisitorEntry]:
    """Settle the pending request matching ``reply``.

    Accepted replies create (or refresh) the visitor entry; a deregistration
    or denial leaves no entry behind.
    """
    request, link_id = vlist.pending.pop(reply.id, (None, None))
    if request is None:
        raise ProtocolError(f"reply for unknown registration id {reply.id}")
    if not reply.accepted or reply.granted_lifetime == 0:
        if vlist.entries.pop(request.home_address, None) is not None:
            vlist._emit("visitor_remove", request.home_address, request.coa, 0.0)
        return None
    entry = VisitorEntry(request.home_address, request.home_agent, link_id,
                         float(reply.granted_lifetime))
    vlist.entries[request.home_address] = entry
    vlist._emit("visitor_confirm", request.home_address, request.coa, entry.lifetime_remaining)
    return entry


def control_packet(kind: PacketKind, src: HierAddress, dst: HierAddress, body,
                   sent_at: float, uid: int, seq: int = 0) -> Packet:
    return Packet(src, dst, CONTROL_PAYLOAD_BYTES, seq, sent_at, kind, (), body, uid)

