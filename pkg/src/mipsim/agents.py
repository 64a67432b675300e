"""Mobile node, agent and interceptor behaviour, and the simulated world.

The routing strategy only changes *where* a roaming host's traffic is
caught and tunneled: at the home agent, or one or two levels above it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .engine import Drop, Event, EventKind, SimParams, SimulationFault, Simulator, CbrSource, cbr_tick, transmit
from .protocol import (
    AgentAdvertisement,
    BindingForward,
    BindingTable,
    EncapMode,
    Packet,
    PacketKind,
    ProtocolError,
    RegStatus,
    RegistrationReply,
    RegistrationRequest,
    VisitorList,
    accept,
    binding_update,
    control_packet,
    decapsulate,
    deny,
    encapsulate,
    expire,
    visitor_admit,
    visitor_confirm,
)
from .topology import (
    HierAddress,
    NodeKind,
    Strategy,
    Topology,
    TopologyError,
    hop_count,
    interception_point,
    parse_address,
    shortest_path,
)

__all__ = [
    "Strategy", "Location", "MnState", "InterceptorState", "AgentState",
    "on_advertisement", "on_registration_reply", "registration_flow",
    "intercept_and_tunnel", "fa_deliver", "World", "RegistrationRecord",
    "TableEvent", "INTERCEPTOR", "HOME_AGENT",
]

INTERCEPTOR = "interceptor"
HOME_AGENT = "home_agent"


class Location(enum.Enum):
    AT_HOME = "AtHome"
    FOREIGN = "Foreign"
    DETACHED = "Detached"


@dataclass
class MnState:
    home_address: HierAddress
    home_agent: HierAddress
    location: Location = Location.AT_HOME
    current_coa: Optional[HierAddress] = None
    pending: Optional[RegistrationRequest] = None
    requested_at: float = 0.0
    attached_to: Optional[HierAddress] = None
    next_id: int = 1

    @property
    def pending_registration(self) -> Optional[int]:
        return None if self.pending is None else self.pending.id

    @property
    def reachable(self) -> bool:
        return self.location is not Location.DETACHED


@dataclass
class InterceptorState:
    address: HierAddress
    bindings: BindingTable = field(default_factory=BindingTable)


@dataclass
class AgentState(InterceptorState):
    is_home_agent: bool = False
    is_foreign_agent: bool = False
    visitors: VisitorList = field(default_factory=VisitorList)
    adv_seq: int = 0


def _new_request(mn: MnState, coa: HierAddress, lifetime: float) -> RegistrationRequest:
    req = RegistrationRequest(mn.home_address, mn.home_agent, coa, lifetime, mn.next_id)
    mn.next_id += 1
    mn.pending = req
    return req


def on_advertisement(mn: MnState, adv: AgentAdvertisement, lifetime: float = 120.0,
                     now: float = 0.0, retry_after: float = math.inf
                     ) -> Tuple[MnState, Optional[RegistrationRequest]]:
    """Decide whether an advertisement calls for a (de)registration."""
    stale = mn.pending is not None and now - mn.requested_at >= retry_after
    if adv.is_home_agent and adv.agent == mn.home_agent:
        if mn.pending is not None and mn.pending.is_deregistration and not stale:
            return mn, None
        if mn.location is Location.AT_HOME and mn.pending is None:
            return mn, None
        mn.current_coa = None
        return mn, _new_request(mn, mn.home_agent, 0.0)
    if not adv.is_foreign_agent:
        return mn, None
    coa = adv.offered_coa
    if mn.location is Location.FOREIGN and mn.current_coa == coa and mn.pending is None:
        return mn, None
    if mn.pending is not None and mn.pending.coa == coa and not stale:
        return mn, None
    mn.current_coa = coa
    return mn, _new_request(mn, coa, lifetime)


def on_registration_reply(mn: MnState, reply: RegistrationReply) -> MnState:
    if mn.pending is None or reply.id != mn.pending.id:
        return mn
    request = mn.pending
    mn.pending = None
    if not reply.accepted:
        mn.location = Location.DETACHED
        return mn
    if request.is_deregistration:
        mn.location = Location.AT_HOME
        mn.current_coa = None
    else:
        mn.location = Location.FOREIGN
        mn.current_coa = request.coa
    return mn


@dataclass(frozen=True)
class Itinerary:
    request_path: List[HierAddress]
    reply_path: List[HierAddress]
    binding_forward_path: List[HierAddress]
    target: HierAddress

    @property
    def wired_rtt_hops(self) -> int:
        # first and last legs are the wireless MN<->agent hop
        return hop_count(self.request_path[1:]) + hop_count(self.reply_path[:-1])


def registration_flow(topo: Topology, strategy: Strategy, request: RegistrationRequest,
                      relay: HierAddress, terminates_at: str = INTERCEPTOR) -> Itinerary:
    """Control-plane hops for one registration relayed by ``relay``."""
    interceptor = interception_point(topo, request.home_agent, strategy)
    target = interceptor if terminates_at == INTERCEPTOR else request.home_agent
    other = request.home_agent if target == interceptor else interceptor
    wired = shortest_path(topo, relay, target)
    forward = [] if other == target else shortest_path(topo, target, other)
    request_path = [request.home_address] + wired
    return Itinerary(request_path, list(reversed(request_path)), forward, target)


@dataclass(frozen=True)
class ForwardAction:
    action: str                 # "tunnel" or "native"
    packet: Packet
    path: List[HierAddress]


def intercept_and_tunnel(state: InterceptorState, pkt: Packet, topo: Topology,
                         home_agent: HierAddress,
                         mode: EncapMode = EncapMode.IP_IN_IP) -> ForwardAction:
    binding = state.bindings.lookup(pkt.dst)
    if binding is None:
        return ForwardAction("native", pkt, shortest_path(topo, state.address, home_agent))
    tunneled = encapsulate(pkt, mode, state.address, binding.coa)
    return ForwardAction("tunnel", tunneled, shortest_path(topo, state.address, binding.coa))


@dataclass(frozen=True)
class DeliveryAction:
    action: str                 # "deliver" or "drop"
    packet: Packet
    reason: str = ""


def fa_deliver(state: AgentState, pkt: Packet) -> DeliveryAction:
    inner = decapsulate(pkt, state.address)
    if state.visitors.lookup(inner.dst) is None:
        return DeliveryAction("drop", inner, "no visitor entry")
    return DeliveryAction("deliver", inner)


@dataclass(frozen=True)
class RegistrationRecord:
    t_request: float
    t_reply: float
    via_fa: HierAddress
    strategy: Strategy
    accepted: bool
    deregistration: bool

    @property
    def duration(self) -> float:
        return self.t_reply - self.t_request


@dataclass(frozen=True)
class TableEvent:
    time: float
    node: HierAddress
    action: str
    home_address: Optional[HierAddress]
    coa: Optional[HierAddress]
    lifetime: float

    def row(self):
        return (f"{self.time:.9f}", str(self.node), self.action,
                "" if self.home_address is None else str(self.home_address),
                "" if self.coa is None else str(self.coa), f"{self.lifetime:.6f}")


TABLE_COLUMNS = ("time_s", "node", "action", "home_address", "coa", "lifetime")


class World(Simulator):
    """One simulation run: a topology, one mobile host, one CBR flow."""

    def __init__(self, topo: Topology, strategy: Strategy, mobile: HierAddress,
                 cn: Optional[HierAddress] = None,
                 initial_attachment: Optional[HierAddress] = None,
                 handoffs: Sequence[Tuple[float, HierAddress]] = (),
                 params: Optional[SimParams] = None, seed: int = 0,
                 traffic: bool = True, mode: EncapMode = EncapMode.IP_IN_IP,
                 terminates_at: str = INTERCEPTOR):
        params = params or SimParams()
        super().__init__(params, seed)
        if terminates_at not in (INTERCEPTOR, HOME_AGENT):
            raise ValueError(f"registration_terminates_at must be {INTERCEPTOR!r} or {HOME_AGENT!r}")
        self.topo = topo.copy()
        self.strategy = strategy
        self.mode = mode
        self.terminates_at = terminates_at
        self.mobile = parse_address(mobile)
        mnode = self.topo.node(self.mobile)
        if not mnode.is_mobile:
            raise TopologyError(f"{self.mobile} is not a mobile host")
        if mnode.parent is None:
            raise TopologyError(f"{self.mobile} has no home agent")
        self.home_agent = mnode.parent
        if self.topo.node(self.home_agent).kind is not NodeKind.HOME_AGENT:
            raise TopologyError(f"{self.mobile}: parent {self.home_agent} is not a HomeAgent")
        self.interceptor = interception_point(self.topo, self.home_agent, strategy)
        self.cn = parse_address(cn) if cn is not None else self.topo.root

        self.states: Dict[HierAddress, InterceptorState] = {}
        for addr, node in sorted(self.topo.nodes.items()):
            if node.kind in (NodeKind.HOME_AGENT, NodeKind.FOREIGN_AGENT):
                self.states[addr] = AgentState(
                    addr, is_home_agent=node.kind is NodeKind.HOME_AGENT,
                    is_foreign_agent=node.kind is NodeKind.FOREIGN_AGENT)
        if self.interceptor not in self.states:
            self.states[self.interceptor] = InterceptorState(self.interceptor)
        self.table_events: List[TableEvent] = []
        self._last_aged: Dict[HierAddress, float] = {}
        for addr, st in self.states.items():
            st.bindings.sink = self._sink(addr)
            if isinstance(st, AgentState):
                st.visitors.sink = self._sink(addr)
            self._last_aged[addr] = 0.0

        self.mn = MnState(self.mobile, self.home_agent)
        self.registrations: List[RegistrationRecord] = []
        self._relay_of: Dict[int, HierAddress] = {}
        self._next_hop: Dict[Tuple[HierAddress, HierAddress], HierAddress] = {}

        start = parse_address(initial_attachment) if initial_attachment is not None else self.home_agent
        self._attach(start)
        self.mn.location = Location.AT_HOME if start == self.home_agent else Location.DETACHED

        for addr in sorted(self.states):
            if isinstance(self.states[addr], AgentState):
                self.schedule(self._jitter(0.0), EventKind.ADVERTISEMENT_TICK, addr, True)
        self.source: Optional[CbrSource] = None
        if traffic:
            self.source = CbrSource(self.cn, self.mobile, params.rate, params.packet_size,
                                    params.traffic_start, params.stop)
            if self.source.packet_count > 0:
                self.schedule(params.traffic_start, EventKind.TRAFFIC_TICK, self.cn)
        for at, agent in handoffs:
            self.handoff(parse_address(agent), float(at))

    # -- setup helpers ------------------------------------------------------

    def _sink(self, addr: HierAddress):
        def emit(action, home, coa, lifetime):
            ev = TableEvent(self.clock.now, addr, action, home, coa, lifetime)
            self.table_events.append(ev)
            self.record(addr, "table", detail=f"{action};home={home};coa={coa or ''};lifetime={lifetime:.6f}")
            if lifetime > 0:
                self.schedule(self.clock.now + lifetime, EventKind.TIMER_FIRE, addr, "expire")
        return emit

    def _jitter(self, t: float) -> float:
        if self.params.adv_jitter > 0:
            return t + self.rng.uniform(0.0, self.params.adv_jitter)
        return t

    def _attach(self, agent: HierAddress) -> None:
        self.topo.attach(self.mobile, agent, self.params.wireless_delay, self.params.bandwidth)
        self.mn.attached_to = agent

    def handoff(self, to_agent: HierAddress, at: float) -> Tuple[Event, Event]:
        """Schedule a move of the mobile host to ``to_agent`` at time ``at``."""
        node = self.topo.node(to_agent)
        if node.kind not in (NodeKind.HOME_AGENT, NodeKind.FOREIGN_AGENT):
            raise TopologyError(f"handoff target {to_agent} is not a mobility agent")
        if at > self.clock.horizon:
            raise ValueError(f"handoff at {at} is beyond the horizon {self.clock.horizon}")
        detach = self.schedule(at, EventKind.DETACH, self.mobile)
        attach = self.schedule(at + self.params.attach_latency, EventKind.ATTACH, self.mobile, to_agent)
        return detach, attach

    # -- routing --------------------------------------------------------------

    def next_hop(self, node: HierAddress, dest: HierAddress) -> HierAddress:
        key = (node, dest)
        if key not in self._next_hop:
            path = shortest_path(self.topo, node, dest)
            if len(path) < 2:
                raise SimulationFault(self.clock.now, node, f"no next hop toward {dest}")
            self._next_hop[key] = path[1]
        return self._next_hop[key]

    def send(self, node: HierAddress, nxt: HierAddress, pkt: Packet) -> None:
        try:
            link = self.topo.link(node, nxt)
        except TopologyError:
            self.drop(node, pkt, "mobile not attached")
            return
        up = True
        if nxt == self.mobile and pkt.kind is PacketKind.DATA:
            up = self.mn.reachable
        out = transmit(link, pkt, self.clock.now, node, up)
        if isinstance(out, Drop):
            self.drop(node, pkt, out.reason)
            return
        self.schedule(out.time, EventKind.PACKET_ARRIVAL, out.target, out.payload)

    def drop(self, node, pkt: Packet, reason: str) -> None:
        self.record(node, "drop", pkt, reason)

    def send_control(self, src: HierAddress, dst: HierAddress, kind: PacketKind, body) -> None:
        pkt = control_packet(kind, src, dst, body, self.clock.now, self.next_uid())
        self.record(src, "ctrl_send", pkt, f"dst={dst}")
        self.forward(src, pkt)

    def forward(self, node: HierAddress, pkt: Packet) -> None:
        """Route ``pkt`` one step from ``node`` (or consume it here)."""
        if pkt.tunneled:
            if pkt.next_dst == node:
                self.tunnel_exit(node, pkt)
            else:
                self.send(node, self.next_hop(node, pkt.next_dst), pkt)
            return
        if pkt.dst == node:
            self.handle_control(node, pkt)
            return
        if pkt.dst == self.mobile and pkt.kind is PacketKind.DATA:
            self.route_to_mobile(node, pkt)
            return
        if pkt.dst == self.mobile:
            self.send(node, self.mobile, pkt)
            return
        self.send(node, self.next_hop(node, pkt.dst), pkt)

    def route_to_mobile(self, node: HierAddress, pkt: Packet) -> None:
        st = self.states.get(node)
        if st is not None and st.bindings.lookup(pkt.dst) is not None:
            action = intercept_and_tunnel(st, pkt, self.topo, self.home_agent, self.mode)
            self.record(node, "encap", action.packet, f"coa={action.path[-1]}")
            self.forward(node, action.packet)
            return
        if node == self.home_agent:
            if self.mn.attached_to == self.home_agent:
                self.send(node, self.mobile, pkt)
            else:
                self.drop(node, pkt, "no binding")
            return
        self.send(node, self.next_hop(node, self.home_agent), pkt)

    def tunnel_exit(self, node: HierAddress, pkt: Packet) -> None:
        st = self.states.get(node)
        if not isinstance(st, AgentState) or not st.is_foreign_agent:
            raise SimulationFault(self.clock.now, node, "tunnel ends at a node that is not a foreign agent")
        try:
            result = fa_deliver(st, pkt)
        except ProtocolError as exc:
            raise SimulationFault(self.clock.now, node, str(exc)) from None
        self.record(node, "decap", result.packet)
        if result.action == "drop":
            self.drop(node, result.packet, result.reason)
        else:
            self.send(node, self.mobile, result.packet)

    # -- control plane ----------------------------------------------------------

    def _age(self, node: HierAddress) -> None:
        st = self.states[node]
        elapsed = self.clock.now - self._last_aged[node]
        self._last_aged[node] = self.clock.now
        if elapsed > 0:
            expire(st.bindings, elapsed)
            if isinstance(st, AgentState):
                expire(st.visitors, elapsed)

    def registration_target(self) -> HierAddress:
        return self.interceptor if self.terminates_at == INTERCEPTOR else self.home_agent

    def handle_control(self, node: HierAddress, pkt: Packet) -> None:
        st = self.states.get(node)
        if st is None:
            raise SimulationFault(self.clock.now, node, f"{pkt.kind.value} addressed to a node without mobility support")
        self._age(node)
        body = pkt.body
        if pkt.kind is PacketKind.REG_REQUEST:
            if pkt.src == self.mobile:
                self.relay_request(st, body)
            else:
                self.process_registration(st, body, relay=pkt.src)
        elif pkt.kind is PacketKind.REG_REPLY:
            self.relay_reply(st, body)
        elif pkt.kind is PacketKind.BINDING_FORWARD:
            binding_update(st.bindings, body.home_address, body.coa, body.lifetime)
        else:
            raise SimulationFault(self.clock.now, node, f"unexpected {pkt.kind.value}")

    def relay_request(self, st: AgentState, request: RegistrationRequest) -> None:
        try:
            visitor_admit(st.visitors, request, f"mn-{request.home_address}", self.registration_target())
        except ProtocolError as exc:
            raise SimulationFault(self.clock.now, st.address, str(exc)) from None
        if st.is_foreign_agent and request.requested_lifetime > self.params.max_lifetime:
            self.relay_reply(st, deny(request, RegStatus.DENIED_BY_FA))
            return
        target = self.registration_target()
        if target == st.address:
            self.process_registration(st, request, relay=st.address)
        else:
            self.send_control(st.address, target, PacketKind.REG_REQUEST, request)

    def process_registration(self, st: InterceptorState, request: RegistrationRequest,
                             relay: HierAddress) -> None:
        if request.home_agent != self.home_agent or request.home_address != self.mobile:
            reply = deny(request, RegStatus.DENIED_BY_HA)
        else:
            reply = accept(request, self.params.max_lifetime)
            binding_update(st.bindings, request.home_address, request.coa, reply.granted_lifetime)
        if relay == st.address:
            self.relay_reply(st, reply)
        else:
            self.send_control(st.address, relay, PacketKind.REG_REPLY, reply)
        if reply.accepted:
            other = self.home_agent if st.address == self.interceptor else self.interceptor
            if other != st.address:
                fwd = BindingForward(request.home_address, request.coa, reply.granted_lifetime)
                self.send_control(st.address, other, PacketKind.BINDING_FORWARD, fwd)

    def relay_reply(self, st: AgentState, reply: RegistrationReply) -> None:
        if reply.id in st.visitors.pending:
            visitor_confirm(st.visitors, reply)
        pkt = control_packet(PacketKind.REG_REPLY, st.address, self.mobile, reply,
                             self.clock.now, self.next_uid())
        self.record(st.address, "ctrl_send", pkt, f"dst={self.mobile}")
        self.send(st.address, self.mobile, pkt)

    def mobile_receive(self, pkt: Packet) -> None:
        if pkt.tunneled or pkt.dst != self.mobile:
            raise SimulationFault(self.clock.now, self.mobile, f"packet {pkt.uid} for {pkt.dst} delivered to {self.mobile}")
        if pkt.kind is PacketKind.DATA:
            self.record(self.mobile, "recv", pkt, value=self.clock.now - pkt.sent_at)
        elif pkt.kind is PacketKind.ADVERTISEMENT:
            adv = pkt.body
            if adv.agent != self.mn.attached_to:
                return
            _, request = on_advertisement(self.mn, adv, self.params.lifetime, self.clock.now,
                                          retry_after=self.params.adv_interval)
            if request is not None:
                self.mn.requested_at = self.clock.now
                self._relay_of[request.id] = adv.agent
                out = control_packet(PacketKind.REG_REQUEST, self.mobile, adv.agent, request,
                                     self.clock.now, self.next_uid())
                self.record(self.mobile, "reg_request", out,
                            f"id={request.id};coa={request.coa};lifetime={request.requested_lifetime:.6f}")
                self.send(self.mobile, adv.agent, out)
        elif pkt.kind is PacketKind.REG_REPLY:
            reply = pkt.body
            request = self.mn.pending
            if request is None or request.id != reply.id:
                return
            on_registration_reply(self.mn, reply)
            rec = RegistrationRecord(self.mn.requested_at, self.clock.now, self._relay_of[reply.id],
                                     self.strategy, reply.accepted, request.is_deregistration)
            self.registrations.append(rec)
            self.record(self.mobile, "reg_reply", pkt,
                        f"id={reply.id};status={reply.status.value};via={rec.via_fa}",
                        value=rec.duration)

    # -- event dispatch -----------------------------------------------------------

    def dispatch(self, event: Event) -> None:
        kind = event.kind
        if kind is EventKind.PACKET_ARRIVAL:
            sender, pkt = event.payload
            self.record(event.target, "arrive", pkt, f"from={sender}")
            if event.target == self.mobile:
                self.mobile_receive(pkt)
            else:
                self.forward(event.target, pkt)
        elif kind is EventKind.TRAFFIC_TICK:
            pkt, nxt = cbr_tick(self.source, self.clock, self.next_uid())
            self.record(event.target, "send", pkt)
            if nxt is not None:
                self.schedule(nxt, EventKind.TRAFFIC_TICK, event.target)
            self.forward(event.target, pkt)
        elif kind is EventKind.ADVERTISEMENT_TICK:
            self.advertise(event.target, periodic=bool(event.payload))
        elif kind is EventKind.DETACH:
            self.topo.detach(self.mobile)
            self.mn.attached_to = None
            self.mn.location = Location.DETACHED
            self.record(self.mobile, "detach")
        elif kind is EventKind.ATTACH:
            self._attach(event.payload)
            self.record(self.mobile, "attach", detail=f"agent={event.payload}")
            self.schedule(self.clock.now, EventKind.ADVERTISEMENT_TICK, event.payload, False)
        elif kind is EventKind.TIMER_FIRE:
            self._age(event.target)
        else:
            raise SimulationFault(self.clock.now, event.target, f"unhandled event {kind}")

    def advertise(self, agent: HierAddress, periodic: bool) -> None:
        st = self.states[agent]
        st.adv_seq += 1
        self.record(agent, "adv_tick", detail=f"seq={st.adv_seq}")
        if periodic:
            self.schedule(self._jitter(self.clock.now + self.params.adv_interval),
                          EventKind.ADVERTISEMENT_TICK, agent, True)
        if self.mn.attached_to != agent:
            return
        adv = AgentAdvertisement(agent, agent, st.is_home_agent, st.is_foreign_agent,
                                 self.params.lifetime, st.adv_seq)
        pkt = control_packet(PacketKind.ADVERTISEMENT, agent, self.mobile, adv,
                             self.clock.now, self.next_uid(), st.adv_seq)
        self.send(agent, self.mobile, pkt)

    # -- accounting ------------------------------------------------------------------

    def data_summary(self) -> Dict[str, int]:
        sent = {r.uid for r in self.trace.where("send")}
        received = {r.uid for r in self.trace.where("recv")}
        dropped = {r.uid for r in self.trace.where("drop", "Data")}
        in_flight = {p.uid for p in self.in_flight() if p.kind is PacketKind.DATA}
        return {"sent": len(sent), "received": len(received), "dropped": len(dropped),
                "in_flight": len(in_flight)}
