"""Packet-level TCP-like endpoints.

Classic flows grow Reno-style (or Cubic, optional) and halve on loss.
Scalable flows keep an EWMA of the fraction of CE-marked ACKs and, once per
round trip, shrink the window by ``1 - alpha/2`` if anything was marked.

Reliability is deliberately simple: cumulative ACKs, one ACK per data
packet, go-back-to-gap retransmission on the third duplicate ACK, and a
coarse retransmission timer for lost retransmissions.
"""
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

from .engine import Engine, EventKind, Rng
from .model import HEADER_ALLOWANCE_BYTES, NS_PER_S, EcnCodepoint, SimTime, TrafficClass, ms, new_packet

CUBIC_C = 0.4
CUBIC_BETA = 0.7
SCALABLE_GAIN = 1 / 16
INITIAL_CWND = 10.0
RTO_CAP = 60 * NS_PER_S


class InsufficientDataError(ValueError):
    pass


@dataclass(slots=True)
class FlowState:
    flow: int
    cls: TrafficClass
    rtt_base: SimTime
    mss: int = 1460
    cwnd: float = INITIAL_CWND
    ssthresh: float = math.inf
    marked_frac_ewma: float = 1.0
    in_flight: int = 0
    growth: str = "reno"
    # marks seen in the current round trip (scalable only)
    win_delivered: int = 0
    win_marked: int = 0
    # cubic epoch
    w_max: float = 0.0
    epoch_start: Optional[SimTime] = None
    cubic_k: float = 0.0
    cubic_origin: float = 0.0
    w_est: float = 0.0


def scalable_reduction(cwnd: float, alpha: float) -> float:
    return max(cwnd * (1 - alpha / 2), 1.0)


def _grow(fs: FlowState, acked: int, now: SimTime):
    if fs.cwnd < fs.ssthresh:
        fs.cwnd += acked
        return
    if fs.growth != "cubic" or fs.cls == TrafficClass.SCALABLE:
        fs.cwnd += acked / fs.cwnd
        return
    if fs.epoch_start is None:
        fs.epoch_start = now
        if fs.cwnd < fs.w_max:
            fs.cubic_k = ((fs.w_max - fs.cwnd) / CUBIC_C) ** (1 / 3)
            fs.cubic_origin = fs.w_max
        else:
            fs.cubic_k = 0.0
            fs.cubic_origin = fs.cwnd
        fs.w_est = fs.cwnd
    t = (now - fs.epoch_start + fs.rtt_base) / NS_PER_S
    target = fs.cubic_origin + CUBIC_C * (t - fs.cubic_k) ** 3
    if target > fs.cwnd:
        fs.cwnd += (target - fs.cwnd) / fs.cwnd * acked
    else:
        fs.cwnd += 0.01 * acked / fs.cwnd
    # stay at least as aggressive as Reno would be
    fs.w_est += 3 * (1 - CUBIC_BETA) / (1 + CUBIC_BETA) * acked / fs.cwnd
    if fs.w_est > fs.cwnd:
        fs.cwnd = fs.w_est


def on_ack(fs: FlowState, acked: int, marked: bool, now: SimTime = 0, rtt_edge: bool = False):
    """Process one ACK that newly covers ``acked`` packets (0 for a dup ACK).

    Every ACK stands for exactly one delivered data packet, so Scalable
    flows count one delivery per call when tracking the marked fraction.
    ``rtt_edge`` is raised on the first ACK of a new round trip.
    """
    if fs.cls == TrafficClass.SCALABLE:
        fs.win_delivered += 1
        fs.win_marked += bool(marked)
        if rtt_edge:
            frac = fs.win_marked / fs.win_delivered
            fs.marked_frac_ewma += SCALABLE_GAIN * (frac - fs.marked_frac_ewma)
            if fs.win_marked:
                fs.cwnd = scalable_reduction(fs.cwnd, fs.marked_frac_ewma)
                fs.ssthresh = fs.cwnd
            fs.win_delivered = 0
            fs.win_marked = 0
            if marked:
                return
        if acked and not marked:
            _grow(fs, acked, now)
        return
    if acked:
        _grow(fs, acked, now)


def on_loss(fs: FlowState, now: SimTime = 0):
    """Multiplicative decrease on a loss signal (three duplicate ACKs)."""
    if fs.cls == TrafficClass.CLASSIC and fs.growth == "cubic":
        fs.w_max = fs.cwnd
        fs.cwnd = max(fs.cwnd * CUBIC_BETA, 1.0)
        fs.epoch_start = None
    else:
        fs.cwnd = max(fs.cwnd / 2, 1.0)
    fs.ssthresh = fs.cwnd


def on_timeout(fs: FlowState):
    fs.ssthresh = max(fs.cwnd / 2, 2.0)
    fs.cwnd = 1.0
    fs.epoch_start = None
    fs.w_max = fs.ssthresh


class Ack:
    __slots__ = ("id", "flow", "cum", "ece", "echo")

    def __init__(self, pid, flow, cum, ece, echo):
        self.id = pid
        self.flow = flow
        self.cum = cum
        self.ece = ece
        self.echo = echo


class Receiver:
    """Sink for every flow; returns one cumulative ACK per data packet.

    ACKs travel back over an uncongested path that takes ``rtt_base``.
    """

    def __init__(self, engine: Engine, rtt_base: SimTime,
                 ack_sink: Callable[[Ack], None]):
        self.engine = engine
        self.rtt_base = rtt_base
        self.ack_sink = ack_sink
        self._rcv_next: Dict[int, int] = {}
        self._ooo: Dict[int, set] = {}
        self.received = 0

    def receiver_ack_path(self, pkt, t_deliver: SimTime):
        self.received += 1
        nxt = self._rcv_next.get(pkt.flow, 0)
        if pkt.seq == nxt:
            nxt += 1
            held = self._ooo.get(pkt.flow)
            if held:
                while nxt in held:
                    held.remove(nxt)
                    nxt += 1
            self._rcv_next[pkt.flow] = nxt
        elif pkt.seq > nxt:
            self._ooo.setdefault(pkt.flow, set()).add(pkt.seq)
        ack = Ack(pkt.id, pkt.flow, nxt, pkt.ecn == EcnCodepoint.CE, pkt.sent_at)
        self.engine.schedule(t_deliver + self.rtt_base, EventKind.ACK_DELIVERY,
                             self.ack_sink, ack)


class Sender:
    """Window-limited bulk (or fixed-size) sender for one flow.

    Loss recovery is go-back-to-gap: the third duplicate ACK halves the
    window and rewinds ``next_seq`` to the first unacknowledged packet, so
    everything from the hole onward is resent as the window allows. The
    receiver buffers out-of-order data, so the cumulative ACK jumps forward
    once the hole is filled. A coarse timer (twice the smoothed RTT, never
    below twice the base RTT, no backoff) covers lost retransmissions.
    """

    def __init__(self, engine: Engine, fs: FlowState, transmit: Callable, ids,
                 dst: int = 1, packet_bytes: int = 1500, limit: Optional[int] = None,
                 on_finish: Optional[Callable] = None):
        self.engine = engine
        self.fs = fs
        self.id = fs.flow
        self.transmit = transmit
        self.ids = ids
        self.dst = dst
        self.packet_bytes = packet_bytes
        self.limit = limit
        self.on_finish = on_finish
        self.snd_una = 0
        self.next_seq = 0
        self.high_seq = 0
        self.dupacks = 0
        self.in_recovery = False
        self.recover = 0
        self.rtt_end_seq = 0
        self.srtt: Optional[int] = None
        self.last_progress = 0
        self.timer_pending = False
        self.started = False
        self.finished = False
        self.sent = 0
        self.retransmits = 0
        self.timeouts = 0

    def start(self, _arg=None):
        self.started = True
        self.rtt_end_seq = 0
        self._send_available()

    def rto(self) -> int:
        return min(max(2 * (self.srtt or 0), 2 * self.fs.rtt_base), RTO_CAP)

    def _emit(self, seq: int):
        now = self.engine.now
        pkt = new_packet(next(self.ids), self.fs.flow, self.fs.cls, self.packet_bytes, now,
                         self.dst, seq)
        self.sent += 1
        if seq < self.high_seq:
            self.retransmits += 1
        else:
            self.high_seq = seq + 1
        self.transmit(pkt)

    def _send_available(self):
        fs = self.fs
        window = math.ceil(fs.cwnd)
        while self.next_seq - self.snd_una < window:
            if self.limit is not None and self.next_seq >= self.limit:
                break
            if self.next_seq == self.snd_una:
                self.last_progress = self.engine.now
            seq = self.next_seq
            self.next_seq += 1
            fs.in_flight = self.next_seq - self.snd_una
            assert fs.in_flight <= window, "in-flight exceeds congestion window"
            self._emit(seq)
        self._arm_timer()

    def _arm_timer(self):
        if not self.timer_pending and self.next_seq > self.snd_una:
            self.timer_pending = True
            self.engine.schedule(self.last_progress + self.rto(), EventKind.TIMER_FIRE,
                                 self._on_timer, self)

    def _rewind(self):
        self.next_seq = self.snd_una
        self.fs.in_flight = 0

    def _on_timer(self, _arg):
        self.timer_pending = False
        if self.finished or self.next_seq <= self.snd_una:
            return
        now = self.engine.now
        deadline = self.last_progress + self.rto()
        if now < deadline:
            self.timer_pending = True
            self.engine.schedule(deadline, EventKind.TIMER_FIRE, self._on_timer, self)
            return
        # nothing moved for a whole timeout: restart from one packet
        self.timeouts += 1
        on_timeout(self.fs)
        self.in_recovery = False
        self.dupacks = 0
        self.rtt_end_seq = self.snd_una
        self.last_progress = now
        self._rewind()
        self._send_available()

    def on_ack_arrival(self, ack: Ack):
        if self.finished:
            return
        now = self.engine.now
        fs = self.fs
        sample = now - ack.echo
        self.srtt = sample if self.srtt is None else (7 * self.srtt + sample) >> 3
        cum = ack.cum
        if cum > self.snd_una:
            acked = cum - self.snd_una
            self.snd_una = cum
            if cum > self.next_seq:
                # the receiver already held data past the rewound sequence
                self.next_seq = cum
            self.dupacks = 0
            self.last_progress = now
            grow = acked
            edge = False
            if self.in_recovery:
                if cum > self.recover:
                    self.in_recovery = False
                    self.rtt_end_seq = self.next_seq
                grow = 0
            elif cum >= self.rtt_end_seq:
                edge = True
                self.rtt_end_seq = self.next_seq
            on_ack(fs, grow, ack.ece, now, edge)
        else:
            if cum == self.snd_una and self.next_seq > self.snd_una and not self.in_recovery:
                self.dupacks += 1
                if self.dupacks == 3:
                    self.in_recovery = True
                    self.recover = self.high_seq - 1
                    on_loss(fs, now)
                    self._rewind()
            on_ack(fs, 0, ack.ece, now, False)
        fs.in_flight = self.next_seq - self.snd_una
        if self.limit is not None and self.snd_una >= self.limit:
            self.finished = True
            if self.on_finish is not None:
                self.on_finish(self)
            return
        self._send_available()


# ---------------------------------------------------------------- rate laws


class _BernoulliPath:
    """Link with a fixed per-packet drop (Classic) or mark (Scalable) probability."""

    def __init__(self, engine: Engine, rng: Rng, prob: float, link_bps: int,
                 receiver: Receiver):
        self.engine = engine
        self.rng = rng
        self.prob = prob
        self.link_bps = link_bps
        self.receiver = receiver
        self.link_free = 0

    def __call__(self, pkt):
        hit = self.prob > 0 and self.rng.uniform() < self.prob
        if hit and pkt.cls == TrafficClass.CLASSIC:
            return
        if hit:
            pkt.ecn = EcnCodepoint.CE
        now = self.engine.now
        start = max(now, self.link_free)
        self.link_free = start + pkt.size_bytes * 8 * NS_PER_S // self.link_bps
        self.receiver.receiver_ack_path(pkt, self.link_free)


def steady_state_rate(cls: TrafficClass, prob: float, rtt_ms: float = 10,
                      packet_bytes: int = 1500, link_bps: int = 40_000_000_000,
                      warmup_rtts: Optional[int] = None, measure_rtts: int = 1000,
                      seed: int = 7, mode: str = "rounds",
                      initial_alpha: Optional[float] = None) -> float:
    """Long-run goodput (bit/s) of one flow facing a fixed signal probability.

    ``mode="rounds"`` advances the flow one RTT at a time: each round sends
    ``ceil(cwnd)`` packets through the gate and feeds their ACKs to
    ``on_ack``/``on_loss`` in order (a lost Classic packet costs one halving
    per round and the rest of the round arrives as duplicate ACKs).
    ``mode="packets"`` runs the full event-driven sender and receiver.

    The default warmup is ``4/prob`` RTTs (at least 100): a Scalable flow
    only adds one packet per RTT, and its equilibrium window is about
    ``2/prob``, so it needs that long to settle.
    """
    if warmup_rtts is None:
        warmup_rtts = max(100, int(4 / prob)) if prob > 0 else 100
    rtt = ms(rtt_ms)
    fs = FlowState(flow=0, cls=cls, rtt_base=rtt, mss=packet_bytes - HEADER_ALLOWANCE_BYTES)
    if initial_alpha is not None:
        fs.marked_frac_ewma = initial_alpha
    if mode == "rounds":
        return _round_rate(fs, prob, rtt, packet_bytes, link_bps, warmup_rtts,
                           measure_rtts, Rng(seed))
    if mode != "packets":
        raise ValueError(f"unknown mode {mode!r}")
    import itertools
    engine = Engine()
    holder: List[Sender] = []
    receiver = Receiver(engine, rtt, lambda ack: holder[0].on_ack_arrival(ack))
    path = _BernoulliPath(engine, Rng(seed), prob, link_bps, receiver)
    sender = Sender(engine, fs, path, itertools.count(), packet_bytes=packet_bytes)
    holder.append(sender)
    sender.start()
    t_warm = warmup_rtts * rtt
    engine.run_until(t_warm)
    una0 = sender.snd_una
    engine.run_until(t_warm + measure_rtts * rtt)
    return (sender.snd_una - una0) * packet_bytes * 8 * NS_PER_S / (measure_rtts * rtt)


def _round_rate(fs: FlowState, prob: float, rtt: SimTime, packet_bytes: int, link_bps: int,
                warmup: int, measure: int, rng: Rng) -> float:
    cap = max(1, link_bps * rtt // (8 * packet_bytes * NS_PER_S))
    uniform = rng.uniform
    scalable = fs.cls == TrafficClass.SCALABLE
    delivered = 0
    for r in range(warmup + measure):
        now = r * rtt
        w = min(math.ceil(fs.cwnd), cap)
        got = 0
        if scalable:
            for i in range(w):
                on_ack(fs, 1, uniform() < prob, now, i == 0)
            got = w
        else:
            lost = False
            for _ in range(w):
                if uniform() < prob:
                    lost = True
                elif not lost:
                    on_ack(fs, 1, False, now)
                    got += 1
                else:
                    got += 1
            if lost:
                on_loss(fs, now)
        if r >= warmup:
            delivered += got
    return delivered * packet_bytes * 8 * NS_PER_S / (measure * rtt)


def steady_state_rate_exponent(cls: TrafficClass, probe_probs: Sequence[float], **kw) -> float:
    """Slope of log(rate) against log(probability) over the probe points."""
    import numpy as np
    probs = [p for p in probe_probs]
    if len(probs) < 3:
        raise InsufficientDataError("need at least 3 probe probabilities")
    if any(not (0 < p < 1) for p in probs):
        raise ValueError("probe probabilities must lie in (0, 1)")
    rates = [steady_state_rate(cls, p, **kw) for p in probs]
    slope, _ = np.polyfit(np.log(probs), np.log(rates), 1)
    return float(slope)
