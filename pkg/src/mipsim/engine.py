"""Deterministic discrete-event core.

Events run in ``(time, insertion order)`` order, so two runs of the same
world produce the same trace line for line.
"""

from __future__ import annotations

import csv
import enum
import heapq
import io
import math
import random
from dataclasses import dataclass, field, fields
from typing import Any, Iterator, List, Optional, Tuple, Union

from .protocol import Packet, PacketKind
from .topology import HierAddress, Link

TIME_EPS = 1e-9


class SimulationFault(RuntimeError):
    """An invariant broke mid-run; carries the event time and node."""

    def __init__(self, time: float, node, message: str):
        self.time = time
        self.node = node
        super().__init__(f"t={time:.6f} node={node}: {message}")


@dataclass
class SimParams:
    """Run parameters; defaults are the Table 3 experiment values."""

    link_delay: float = 0.020
    bandwidth: float = 2_000_000
    wireless_delay: float = 0.002
    rate: float = 5.0
    packet_size: int = 200
    sim_time: float = 20.0
    traffic_start: float = 0.5
    traffic_stop: Optional[float] = None
    adv_interval: float = 1.0
    adv_jitter: float = 0.0
    attach_latency: float = 0.1
    lifetime: float = 120.0
    max_lifetime: float = 1800.0

    @classmethod
    def from_mapping(cls, data) -> "SimParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
        return cls(**data)

    @property
    def stop(self) -> float:
        return self.sim_time if self.traffic_stop is None else self.traffic_stop


class EventKind(enum.Enum):
    PACKET_ARRIVAL = "PacketArrival"
    TIMER_FIRE = "TimerFire"
    DETACH = "Detach"
    ATTACH = "Attach"
    TRAFFIC_TICK = "TrafficTick"
    ADVERTISEMENT_TICK = "AdvertisementTick"


@dataclass
class Event:
    time: float
    seq: int
    kind: EventKind
    target: HierAddress
    payload: Any = None


@dataclass
class SimClock:
    now: float = 0.0
    horizon: float = 20.0

    def advance(self, t: float) -> None:
        if t < self.now - TIME_EPS:
            raise SimulationFault(t, "-", f"clock moved backwards from {self.now}")
        self.now = max(self.now, t)


class EventQueue:
    def __init__(self):
        self._heap: List[Tuple[float, int, Event]] = []
        self._counter = 0

    def __len__(self):
        return len(self._heap)

    def push(self, time: float, kind: EventKind, target: HierAddress, payload=None) -> Event:
        ev = Event(time, self._counter, kind, target, payload)
        self._counter += 1
        heapq.heappush(self._heap, (ev.time, ev.seq, ev))
        return ev

    def peek(self) -> Optional[Event]:
        return self._heap[0][2] if self._heap else None

    def pop(self) -> Event:
        return heapq.heappop(self._heap)[2]

    def pending(self) -> Iterator[Event]:
        return (entry[2] for entry in sorted(self._heap))


def schedule(queue: EventQueue, clock: SimClock, time: float, kind: EventKind,
             target: HierAddress, payload=None) -> Event:
    if time < clock.now - TIME_EPS:
        raise SimulationFault(clock.now, target, f"event {kind.value} scheduled in the past ({time})")
    return queue.push(time, kind, target, payload)


# -- trace --------------------------------------------------------------------

TRACE_COLUMNS = ("time_s", "node", "event_kind", "seq", "pkt_kind", "wire_bytes", "detail")


@dataclass(frozen=True)
class TraceRecord:
    time: float
    node: str
    event_kind: str
    seq: int = -1
    pkt_kind: str = ""
    wire_bytes: int = 0
    detail: str = ""
    uid: int = -1
    value: float = math.nan

    def row(self) -> Tuple[str, ...]:
        return (f"{self.time:.9f}", self.node, self.event_kind, str(self.seq),
                self.pkt_kind, str(self.wire_bytes), self.detail)


@dataclass
class TraceLog:
    records: List[TraceRecord] = field(default_factory=list)

    def add(self, record: TraceRecord) -> None:
        self.records.append(record)

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def where(self, event_kind: Optional[str] = None, pkt_kind: Optional[str] = None):
        return [r for r in self.records
                if (event_kind is None or r.event_kind == event_kind)
                and (pkt_kind is None or r.pkt_kind == pkt_kind)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for r in self.records:
            writer.writerow(r.row())
        return buf.getvalue()


# -- traffic and links ----------------------------------------------------------

@dataclass
class CbrSource:
    src: HierAddress
    dst_home_address: HierAddress
    rate: float
    packet_size: int
    start: float
    stop: float
    emitted: int = 0

    @property
    def packet_count(self) -> int:
        if self.stop < self.start:
            return 0
        return math.floor((self.stop - self.start) * self.rate + TIME_EPS) + 1

    def tick_time(self, k: int) -> float:
        return self.start + k / self.rate


def cbr_tick(source: CbrSource, clock: SimClock, uid: int = 0) -> Tuple[Packet, Optional[float]]:
    """Emit the next data packet; returns it with the next tick time (or None)."""
    if clock.now < source.start - TIME_EPS or clock.now > source.stop + TIME_EPS:
        raise SimulationFault(clock.now, source.src, "CBR tick outside its active interval")
    pkt = Packet(source.src, source.dst_home_address, source.packet_size,
                 source.emitted, clock.now, PacketKind.DATA, (), None, uid)
    source.emitted += 1
    nxt = source.tick_time(source.emitted)
    if source.emitted >= source.packet_count or nxt > source.stop + TIME_EPS:
        return pkt, None
    return pkt, nxt


@dataclass(frozen=True)
class Drop:
    time: float
    node: HierAddress
    packet: Packet
    reason: str


def transmit(link: Link, pkt: Packet, at: float, sender: HierAddress,
             receiver_up: bool = True) -> Union[Event, Drop]:
    """Put ``pkt`` on ``link`` at time ``at``.

    Returns the (unscheduled) arrival event at the far end, or a
    :class:`Drop` when the wireless receiver is unreachable.
    """
    if sender not in (link.a, link.b):
        raise SimulationFault(at, sender, f"not an endpoint of link {link.a}-{link.b}")
    receiver = link.b if sender == link.a else link.a
    if link.wireless and not receiver_up:
        return Drop(at, sender, pkt, "mobile detached")
    return Event(at + link.latency(pkt.wire_size), -1, EventKind.PACKET_ARRIVAL, receiver,
                 (sender, pkt))


class Simulator:
    """Event loop shell; subclasses implement :meth:`dispatch`."""

    def __init__(self, params: SimParams, seed: int = 0):
        self.params = params
        self.clock = SimClock(0.0, params.sim_time)
        self.queue = EventQueue()
        self.trace = TraceLog()
        self.seed = seed
        self.rng = random.Random(seed)
        self._uid = 0

    def next_uid(self) -> int:
        self._uid += 1
        return self._uid

    def schedule(self, time: float, kind: EventKind, target: HierAddress, payload=None) -> Event:
        return schedule(self.queue, self.clock, time, kind, target, payload)

    def record(self, node, event_kind: str, pkt: Optional[Packet] = None, detail: str = "",
               value: float = math.nan) -> None:
        if pkt is None:
            rec = TraceRecord(self.clock.now, str(node), event_kind, detail=detail, value=value)
        else:
            extra = f"uid={pkt.uid}"
            rec = TraceRecord(self.clock.now, str(node), event_kind, pkt.seq, pkt.kind.value,
                              pkt.wire_size, f"{extra};{detail}" if detail else extra,
                              pkt.uid, value)
        self.trace.add(rec)

    def dispatch(self, event: Event) -> None:
        raise NotImplementedError

    def run(self) -> TraceLog:
        while self.queue and self.queue.peek().time <= self.clock.horizon + TIME_EPS:
            ev = self.queue.pop()
            self.clock.advance(ev.time)
            self.dispatch(ev)
        return self.trace

    def in_flight(self) -> List[Packet]:
        return [ev.payload[1] for ev in self.queue.pending()
                if ev.kind is EventKind.PACKET_ARRIVAL]


def run(world: Simulator) -> TraceLog:
    return world.run()
