"""PI2 / DualPI2 with a simulated control plane.

A periodic timer plays the control plane: it reads the Classic queue-delay
register, runs the PI update and writes two 16-bit thresholds back into the
data plane (``p**2`` for Classic drops, ``min(k*p, 1)`` for Scalable marks).
The data plane compares one 16-bit random draw against the threshold for
the packet's class.
"""
from dataclasses import dataclass

from ..model import NS_PER_S, EcnCodepoint, SimTime, TrafficClass
from .base import Aqm, EgressVerdict

_SCALE = 1 << 16


def pi2_update_rule(p: float, tau_now: SimTime, tau_prev: SimTime, target: SimTime,
                    alpha: float, beta: float) -> float:
    """Integral term on target error plus proportional term on delay trend.

    Delays are nanoseconds; ``alpha`` and ``beta`` are per second.
    """
    p += alpha * (tau_now - target) / NS_PER_S + beta * (tau_now - tau_prev) / NS_PER_S
    return min(max(p, 0.0), 1.0)


@dataclass
class Pi2State:
    target: SimTime
    interval: SimTime
    alpha: float = 0.3125
    beta: float = 3.125
    coupling_k: float = 2
    staleness_ticks: int = 1
    p: float = 0.0
    tau_prev: SimTime = 0
    latest_delay_sample: SimTime = 0
    # samples fetched by the control plane but not yet used
    pending_samples: tuple = ()
    classic_thresh: int = 0
    scalable_thresh: int = 0

    def set_probability(self, p: float):
        self.p = min(max(p, 0.0), 1.0)
        self.classic_thresh = round(self.p * self.p * _SCALE)
        self.scalable_thresh = round(min(self.coupling_k * self.p, 1.0) * _SCALE)


def pi2_timer_update(state: Pi2State, now: SimTime):
    if state.staleness_ticks:
        pipeline = state.pending_samples + (state.latest_delay_sample,)
        if len(pipeline) <= state.staleness_ticks:
            state.pending_samples = pipeline
            return
        tau_now, state.pending_samples = pipeline[0], pipeline[1:]
    else:
        tau_now = state.latest_delay_sample
    state.set_probability(pi2_update_rule(
        state.p, tau_now, state.tau_prev, state.target, state.alpha, state.beta))
    state.tau_prev = tau_now


def pi2_decide(state: Pi2State, pkt, rng) -> EgressVerdict:
    r = rng.next_rand16()
    if pkt.cls == TrafficClass.SCALABLE:
        if r < state.scalable_thresh:
            pkt.ecn = EcnCodepoint.CE
            return EgressVerdict.FORWARD_MARKED
        return EgressVerdict.FORWARD
    if r < state.classic_thresh:
        return EgressVerdict.DROP_AT_DEPARSER
    return EgressVerdict.FORWARD


class Pi2(Aqm):
    """Single shared queue; every packet's delay feeds the controller."""

    key = "pi2"
    cost_kind = "pi2"

    def __init__(self, state: Pi2State):
        self.state = state
        self.timer_interval = state.interval

    def _samples(self, pkt) -> bool:
        return True

    def egress_hook(self, pkt, meta, rng):
        if self._samples(pkt):
            self.state.latest_delay_sample = meta.queue_delay
        return pi2_decide(self.state, pkt, rng)

    def timer_hook(self, now):
        pi2_timer_update(self.state, now)


class DualPi2(Pi2):
    """Separate L4S queue; only Classic-queue delay feeds the controller."""

    key = "dualpi2"
    dual_queue = True

    def _samples(self, pkt) -> bool:
        return pkt.cls == TrafficClass.CLASSIC
