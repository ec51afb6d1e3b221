"""CoDel (RFC 8289) as a per-packet egress decision.

Drop spacing follows ``interval / sqrt(count)``. In ``lpm`` mode the inverse
square root comes from a longest-prefix-match style table: counts below 32
are looked up exactly, larger counts are bucketed on their five leading bits
(the leading one plus four more), and each bucket returns the value that
minimises worst-case relative error over the bucket.
"""
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Optional, Tuple

from ..model import SimTime
from .base import Aqm, EgressVerdict, QueueMetadata

Q16_ONE = 1 << 16
_PREFIX_BITS = 5


def inv_sqrt_exact(count: int) -> float:
    return 1.0 / math.sqrt(count)


@lru_cache(maxsize=None)
def _bucket_value(shift: int, prefix: int) -> int:
    lo = prefix << shift
    hi = lo + (1 << shift) - 1
    fmax = 1.0 / math.sqrt(lo)
    fmin = 1.0 / math.sqrt(hi)
    return round(Q16_ONE * 2 * fmax * fmin / (fmax + fmin))


def codel_inv_sqrt_approx(count: int) -> int:
    """Approximate 1/sqrt(count) as a Q16 fixed-point integer."""
    if count < 1:
        raise ValueError("count must be >= 1")
    shift = count.bit_length() - _PREFIX_BITS
    if shift <= 0:
        return _bucket_value(0, count)
    return _bucket_value(shift, count >> shift)


@dataclass
class CodelState:
    target: SimTime
    interval: SimTime
    sqrt_mode: str = "lpm"
    mtu_bytes: int = 1500
    dropping: bool = False
    count: int = 0
    lastcount: int = 0
    drop_next: SimTime = 0
    first_above_time: Optional[SimTime] = None

    def __post_init__(self):
        if self.sqrt_mode not in ("lpm", "exact"):
            raise ValueError(f"unknown sqrt mode {self.sqrt_mode!r}")


def control_law(state: CodelState, t: SimTime) -> SimTime:
    if state.sqrt_mode == "exact":
        return t + int(state.interval / math.sqrt(state.count))
    return t + ((state.interval * codel_inv_sqrt_approx(state.count)) >> 16)


def _ok_to_drop(state: CodelState, meta: QueueMetadata, now: SimTime) -> bool:
    if meta.queue_delay < state.target or meta.queue_depth_bytes <= state.mtu_bytes:
        state.first_above_time = None
        return False
    if state.first_above_time is None:
        state.first_above_time = now + state.interval
        return False
    return now >= state.first_above_time


def codel_decide(state: CodelState, pkt, meta: QueueMetadata, now: SimTime) -> EgressVerdict:
    ok = _ok_to_drop(state, meta, now)
    if state.dropping:
        if not ok:
            state.dropping = False
            return EgressVerdict.FORWARD
        if now >= state.drop_next:
            state.count += 1
            state.drop_next = control_law(state, state.drop_next)
            return EgressVerdict.DROP_AT_DEPARSER
        return EgressVerdict.FORWARD
    if not ok:
        return EgressVerdict.FORWARD
    state.dropping = True
    # resume near the previous drop rate if the last episode was recent
    delta = state.count - state.lastcount
    if delta > 1 and now - state.drop_next < 16 * state.interval:
        state.count = delta
    else:
        state.count = 1
    state.lastcount = state.count
    state.drop_next = control_law(state, now)
    return EgressVerdict.DROP_AT_DEPARSER


class Codel(Aqm):
    key = "codel"
    cost_kind = "codel"

    def __init__(self, target: SimTime, interval: SimTime, sqrt_mode="lpm", mtu_bytes=1500):
        self._params = (target, interval, sqrt_mode, mtu_bytes)
        self.states: Dict[Tuple[int, int], CodelState] = {}

    def state_for(self, port: int, queue: int) -> CodelState:
        st = self.states.get((port, queue))
        if st is None:
            st = self.states[port, queue] = CodelState(*self._params)
        return st

    def egress_hook(self, pkt, meta, rng):
        # egress_tstamp is stamped at dequeue, i.e. it is "now"
        return codel_decide(self.state_for(pkt.output_port, pkt.queue), pkt, meta, pkt.egress_tstamp)
