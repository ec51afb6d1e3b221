"""Disaggregated RED: decide at egress, drop at ingress.

The egress half keeps a shift-based EWMA of queue delay (or depth) and a
16-bit probability register. A Classic packet selected for dropping is not
dropped; instead a 48-byte clone is recirculated to ingress, which arms a
drop flag that discards the next Classic packet bound to the same
port/queue. Scalable packets are CE-marked instead, using half the random
draw, so their marking probability is twice the Classic one.

The ghost variant ("iRED+G") reads queue depth directly at ingress and makes
the decision and the drop there, without notifications.
"""
from dataclasses import dataclass
from enum import Enum

from ..model import EcnCodepoint, PacketRole, TrafficClass
from .base import Aqm, DropFlagTable, EgressVerdict, IngressVerdict, QueueMetadata

PROB_MAX = 65535


class IredMode(Enum):
    DELAY = "delay"
    DEPTH = "depth"


@dataclass
class IredState:
    min_thsld: int
    max_thsld: int
    mode: IredMode = IredMode.DELAY
    # when True, only Classic-queue packets feed the EWMA
    classic_sampling: bool = False
    ewma: int = 0
    drop_prob: int = 0
    # extremes the register ever took, for invariant checks
    prob_low: int = 0
    prob_high: int = 0

    @classmethod
    def with_min(cls, min_thsld: int, mode=IredMode.DELAY, max_factor: int = 2,
                 classic_sampling: bool = False):
        return cls(min_thsld, max_factor * min_thsld, mode, classic_sampling)


def ewma_update(state: IredState, sample: int) -> int:
    """EWMA with alpha = 1/2: (sample + previous) >> 1."""
    state.ewma = (sample + state.ewma) >> 1
    return state.ewma


def _signal(state: IredState, scalable: bool, rng) -> bool:
    """Run the RED decision on the current EWMA; True means drop/mark."""
    ewma = state.ewma
    if ewma < state.min_thsld:
        return False
    if ewma > state.max_thsld:
        return True
    rand_classic = rng.next_rand16()
    rand_l4s = rand_classic >> 1
    hit = (rand_l4s if scalable else rand_classic) < state.drop_prob
    if hit:
        if state.drop_prob > 0:
            state.drop_prob -= 1
            if state.drop_prob < state.prob_low:
                state.prob_low = state.drop_prob
    elif state.drop_prob < PROB_MAX:
        state.drop_prob += 1
        if state.drop_prob > state.prob_high:
            state.prob_high = state.drop_prob
    return hit


def ired_egress_decide(state: IredState, pkt, meta: QueueMetadata, rng) -> EgressVerdict:
    scalable = pkt.cls == TrafficClass.SCALABLE
    if not (scalable and state.classic_sampling):
        sample = meta.queue_delay if state.mode is IredMode.DELAY else meta.queue_depth_bytes
        ewma_update(state, sample)
    if not _signal(state, scalable, rng):
        return EgressVerdict.FORWARD
    if scalable:
        pkt.ecn = EcnCodepoint.CE
        return EgressVerdict.FORWARD_MARKED
    return EgressVerdict.FORWARD_AND_NOTIFY


def ired_ingress_act(pkt, flags: DropFlagTable) -> IngressVerdict:
    if pkt.role == PacketRole.NOTIFICATION:
        flags.set(pkt.output_port, pkt.queue)
        return IngressVerdict.CONSUME_NOTIFICATION
    if pkt.cls == TrafficClass.CLASSIC and flags.take(pkt.output_port, pkt.queue):
        return IngressVerdict.DROP_AQM
    return IngressVerdict.FORWARD


def ired_ghost_decide(state: IredState, pkt, depth: int, rng) -> IngressVerdict:
    ewma_update(state, depth)
    scalable = pkt.cls == TrafficClass.SCALABLE
    if not _signal(state, scalable, rng):
        return IngressVerdict.FORWARD
    if scalable:
        pkt.ecn = EcnCodepoint.CE
        return IngressVerdict.FORWARD
    return IngressVerdict.DROP_AQM


class Ired(Aqm):
    key = "ired-delay"
    cost_kind = "ired"
    dual_queue = True

    def __init__(self, state: IredState, rng=None):
        self.state = state

    def egress_hook(self, pkt, meta, rng):
        if pkt.role != PacketRole.REGULAR:
            return EgressVerdict.FORWARD
        return ired_egress_decide(self.state, pkt, meta, rng)

    def ingress_hook(self, pkt, flags, ghost_depth=None):
        return ired_ingress_act(pkt, flags)


class IredGhost(Aqm):
    key = "ired-ghost"
    cost_kind = "ired-g"
    dual_queue = True
    uses_ghost = True

    def __init__(self, state: IredState, rng):
        if state.mode is not IredMode.DEPTH:
            raise ValueError("ghost iRED works on queue depth")
        self.state = state
        self.rng = rng

    def ingress_hook(self, pkt, flags, ghost_depth=None):
        if ghost_depth is None:
            raise ValueError("ghost iRED needs the ghost depth channel")
        return ired_ghost_decide(self.state, pkt, ghost_depth, self.rng)
