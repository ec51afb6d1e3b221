"""Two-block programmable switch: Ingress -> Traffic Manager -> Egress.

The Traffic Manager is the only component that holds packets. Each port
drains its queues through a shaper at the port's configured rate; ingress
and egress processing take no simulated time and are charged as cycles and
weight only. Egress can clone a 48-byte notification that re-enters ingress
after a fixed recirculation latency.
"""
import itertools
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Dict, List, Optional, Tuple

from .aqm.base import Aqm, DropFlagTable, EgressVerdict, IngressVerdict, QueueMetadata
from .engine import Engine, EventKind
from .metrics import (Locus, SeriesRecorder, WasteLedger, charge_drop, charge_notification,
                      charge_tail_drop)
from .model import (NS_PER_S, PacketRole, PipelineCostModel, PortConfig, TrafficClass,
                    notification_for)


class GhostUnavailable(RuntimeError):
    pass


class Enqueue(IntEnum):
    ACCEPTED = 0
    TAIL_DROPPED = 1


@dataclass
class SwitchCounters:
    injected: int = 0
    delivered: int = 0
    ingress_dropped: int = 0
    egress_dropped: int = 0
    tail_dropped: int = 0
    no_route: int = 0
    notifications_emitted: int = 0
    notifications_consumed: int = 0
    recirc_in_flight: int = 0
    # [classic, scalable]
    marks: List[int] = field(default_factory=lambda: [0, 0])
    ingress_drops_by_class: List[int] = field(default_factory=lambda: [0, 0])
    egress_drops_by_class: List[int] = field(default_factory=lambda: [0, 0])
    tail_drops_by_class: List[int] = field(default_factory=lambda: [0, 0])
    delivered_bytes_by_class: List[int] = field(default_factory=lambda: [0, 0])
    egress_drop_delay_ns: int = 0
    ingress_cycles: int = 0
    egress_cycles: int = 0
    ingress_weight_tenths: int = 0
    egress_weight_tenths: int = 0
    max_depth: Dict[Tuple[int, int], int] = field(default_factory=dict)
    max_delay: Dict[Tuple[int, int], int] = field(default_factory=dict)


class _Port:
    __slots__ = ("cfg", "qids", "l4s", "classic", "pending", "next_free", "carry",
                 "l4s_run", "wrr_pos", "wrr_credit", "weights")

    def __init__(self, cfg: PortConfig):
        self.cfg = cfg
        self.qids = tuple(sorted(q.queue for q in cfg.queues))
        self.l4s = cfg.l4s_queue
        self.classic = cfg.classic_queue
        self.weights = {q.queue: q.scheduler_weight for q in cfg.queues}
        self.pending = False
        self.next_free = 0
        self.carry = 0
        self.l4s_run = 0
        self.wrr_pos = 0
        self.wrr_credit = self.weights[self.qids[0]]


class TrafficManager:
    """Per-(port, queue) FIFOs with byte occupancy and a per-port scheduler."""

    def __init__(self, ports: List[PortConfig], scheduler: str = "strict",
                 starvation_guard: int = 16):
        self.fifos: Dict[Tuple[int, int], deque] = {}
        self.occupancy: Dict[Tuple[int, int], int] = {}
        self.capacity: Dict[Tuple[int, int], int] = {}
        self.ports: Dict[int, _Port] = {}
        self.scheduler = scheduler
        self.starvation_guard = starvation_guard
        for p in ports:
            self.ports[p.port] = _Port(p)
            for q in p.queues:
                key = (p.port, q.queue)
                self.fifos[key] = deque()
                self.occupancy[key] = 0
                self.capacity[key] = q.capacity_bytes

    def backlog(self, port: int) -> int:
        return sum(len(self.fifos[port, q]) for q in self.ports[port].qids)

    def queued_packets(self) -> int:
        return sum(len(f) for f in self.fifos.values())

    def push(self, pkt, port: int, queue: int):
        key = (port, queue)
        self.fifos[key].append(pkt)
        self.occupancy[key] += pkt.size_bytes

    def pop(self, port: int):
        ps = self.ports[port]
        qid = self._strict(ps) if self.scheduler == "strict" else self._wrr(ps)
        if qid is None:
            return None
        key = (port, qid)
        pkt = self.fifos[key].popleft()
        self.occupancy[key] -= pkt.size_bytes
        return pkt

    def _strict(self, ps: _Port) -> Optional[int]:
        fifos = self.fifos
        port = ps.cfg.port
        if ps.l4s is not None and fifos[port, ps.l4s]:
            classic_waiting = bool(fifos[port, ps.classic])
            if not classic_waiting:
                ps.l4s_run = 0
                return ps.l4s
            if self.starvation_guard and ps.l4s_run >= self.starvation_guard:
                ps.l4s_run = 0
                return ps.classic
            ps.l4s_run += 1
            return ps.l4s
        ps.l4s_run = 0
        for q in ps.qids:
            if q != ps.l4s and fifos[port, q]:
                return q
        return None

    def _wrr(self, ps: _Port) -> Optional[int]:
        port = ps.cfg.port
        n = len(ps.qids)
        for _ in range(2 * n):
            q = ps.qids[ps.wrr_pos]
            if self.fifos[port, q] and ps.wrr_credit > 0:
                ps.wrr_credit -= 1
                return q
            ps.wrr_pos = (ps.wrr_pos + 1) % n
            ps.wrr_credit = ps.weights[ps.qids[ps.wrr_pos]]
        return None


class Switch:
    """Single switch; ``routes`` maps destination id -> output port."""

    def __init__(self, engine: Engine, ports: List[PortConfig], aqms: Dict[int, Aqm],
                 cost: PipelineCostModel, rng, routes: Dict[int, int],
                 cost_kind: Optional[str] = None, ghost: bool = False,
                 scheduler: str = "strict", starvation_guard: int = 16,
                 on_deliver: Optional[Callable] = None,
                 recorder: Optional[SeriesRecorder] = None,
                 ids: Optional[itertools.count] = None):
        self.engine = engine
        self.tm = TrafficManager(ports, scheduler, starvation_guard)
        self.aqms = aqms
        self.cost = cost
        self.cost_kind = cost_kind
        self.rng = rng
        self.routes = routes
        self.ghost = ghost
        self.flags = DropFlagTable()
        self.counters = SwitchCounters()
        self.ledger = WasteLedger()
        self.on_deliver = on_deliver
        self.recorder = recorder
        self.ids = ids if ids is not None else itertools.count(1 << 40)
        self._deq_handlers = {p.port: (lambda port: (lambda _arg: self._on_dequeue(port)))(p.port)
                              for p in ports}

    # ------------------------------------------------------------ ingress

    def receive(self, pkt):
        """Entry point for a packet arriving at an ingress port at ``now``."""
        c = self.counters
        if pkt.role == PacketRole.REGULAR:
            c.injected += 1
        verdict = self.ingress_process(pkt)
        if verdict == IngressVerdict.FORWARD:
            if self.tm_enqueue(pkt, pkt.output_port, pkt.queue) == Enqueue.TAIL_DROPPED:
                c.tail_dropped += 1
                c.tail_drops_by_class[pkt.cls] += 1
                charge_tail_drop(self.ledger, self.cost, pkt.size_bytes)
        elif verdict == IngressVerdict.DROP_AQM:
            c.ingress_dropped += 1
            c.ingress_drops_by_class[pkt.cls] += 1
            charge_drop(self.ledger, self.cost_kind, Locus.INGRESS, pkt.size_bytes, 0, self.cost)
        elif verdict == IngressVerdict.CONSUME_NOTIFICATION:
            c.notifications_consumed += 1
        else:
            c.no_route += 1
        return verdict

    def ingress_process(self, pkt) -> IngressVerdict:
        c = self.counters
        c.ingress_cycles += self.cost.ingress_cycles
        c.ingress_weight_tenths += self.cost.ingress_weight_tenths
        if pkt.role == PacketRole.NOTIFICATION:
            port = pkt.output_port
        else:
            port = self.routes.get(pkt.dst)
            if port is None:
                return IngressVerdict.DROP_NO_ROUTE
            ps = self.tm.ports[port]
            pkt.output_port = port
            pkt.queue = ps.l4s if (pkt.cls == TrafficClass.SCALABLE and ps.l4s is not None) else ps.classic
        aqm = self.aqms[port]
        if self.ghost and aqm.uses_ghost and pkt.role == PacketRole.REGULAR:
            return aqm.ingress_hook(pkt, self.flags, self.ghost_read_depth(port, pkt.queue))
        return aqm.ingress_hook(pkt, self.flags)

    def ghost_read_depth(self, port: int, queue: int) -> int:
        if not self.ghost:
            raise GhostUnavailable("ghost depth channel is disabled for this scenario")
        return self.tm.occupancy[port, queue]

    # ------------------------------------------------------------ traffic manager

    def tm_enqueue(self, pkt, port: int, queue: int) -> Enqueue:
        tm = self.tm
        key = (port, queue)
        occ = tm.occupancy[key]
        if not self.aqms[port].admit(occ, tm.capacity[key], pkt):
            return Enqueue.TAIL_DROPPED
        tm.push(pkt, port, queue)
        c = self.counters
        if occ + pkt.size_bytes > c.max_depth.get(key, 0):
            c.max_depth[key] = occ + pkt.size_bytes
        ps = tm.ports[port]
        if not ps.pending:
            ps.pending = True
            now = self.engine.now
            self.engine.schedule(max(now, ps.next_free), EventKind.DEQUEUE, self._deq_handlers[port])
        return Enqueue.ACCEPTED

    def tm_dequeue(self, port: int):
        """Pop the scheduled head packet, stamp it and book the shaper slot."""
        tm = self.tm
        ps = tm.ports[port]
        pkt = tm.pop(port)
        now = self.engine.now
        if pkt is None:
            ps.pending = False
            return None
        pkt.egress_tstamp = now
        bits_ns = pkt.size_bytes * 8 * NS_PER_S + ps.carry
        bw = ps.cfg.bandwidth_bps
        tx = bits_ns // bw
        ps.carry = bits_ns - tx * bw
        ps.next_free = now + tx
        if tm.backlog(port):
            self.engine.schedule(ps.next_free, EventKind.DEQUEUE, self._deq_handlers[port])
        else:
            ps.pending = False
        return pkt

    def _on_dequeue(self, port: int):
        pkt = self.tm_dequeue(port)
        if pkt is None:
            return
        key = (port, pkt.queue)
        delay = pkt.egress_tstamp - pkt.ingress_tstamp
        depth = self.tm.occupancy[key]
        c = self.counters
        if delay > c.max_delay.get(key, -1):
            c.max_delay[key] = delay
        if self.recorder is not None:
            self.recorder.on_dequeue(self.engine.now, delay, depth)
        self.egress_process(pkt, QueueMetadata(delay, depth))

    # ------------------------------------------------------------ egress

    def egress_process(self, pkt, meta: QueueMetadata) -> EgressVerdict:
        c = self.counters
        c.egress_cycles += self.cost.egress_cycles
        c.egress_weight_tenths += self.cost.egress_weight_tenths
        verdict = self.aqms[pkt.output_port].egress_hook(pkt, meta, self.rng)
        if verdict == EgressVerdict.DROP_AT_DEPARSER:
            c.egress_dropped += 1
            c.egress_drops_by_class[pkt.cls] += 1
            c.egress_drop_delay_ns += meta.queue_delay
            charge_drop(self.ledger, self.cost_kind, Locus.EGRESS, pkt.size_bytes,
                        meta.queue_delay, self.cost)
            return verdict
        if verdict == EgressVerdict.FORWARD_MARKED:
            c.marks[pkt.cls] += 1
        elif verdict == EgressVerdict.FORWARD_AND_NOTIFY:
            self._notify(pkt)
        self._deliver(pkt)
        return verdict

    def _notify(self, pkt):
        c = self.counters
        c.notifications_emitted += 1
        c.recirc_in_flight += 1
        charge_notification(self.ledger, self.cost)
        note = notification_for(pkt, next(self.ids), self.engine.now)
        self.engine.after(self.cost.recirc_latency, EventKind.PACKET_ARRIVAL, self._recirculated, note)

    def _recirculated(self, note):
        note.ingress_tstamp = self.engine.now
        self.counters.recirc_in_flight -= 1
        self.receive(note)

    def _deliver(self, pkt):
        c = self.counters
        c.delivered += 1
        c.delivered_bytes_by_class[pkt.cls] += pkt.size_bytes
        t_done = self.tm.ports[pkt.output_port].next_free
        if self.recorder is not None:
            self.recorder.on_delivery(t_done, pkt.cls, pkt.flow, pkt.size_bytes)
        if self.on_deliver is not None:
            self.on_deliver(pkt, t_done)

    # ------------------------------------------------------------ invariants

    def in_flight(self) -> int:
        return self.tm.queued_packets() + self.counters.recirc_in_flight

    def conservation_gap(self) -> int:
        """injected - accounted; zero when every packet is accounted for."""
        c = self.counters
        injected = c.injected + c.notifications_emitted
        accounted = (c.delivered + c.ingress_dropped + c.egress_dropped + c.tail_dropped
                     + c.no_route + self.in_flight() + c.notifications_consumed)
        return injected - accounted
