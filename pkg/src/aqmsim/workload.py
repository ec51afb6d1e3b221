"""Load patterns: the stepped phase schedule and sinusoid-modulated arrivals.

The phase schedule adds long-lived flows at each boundary; flows never end.
The sinusoid load is a non-homogeneous Poisson process of short request
flows whose rate is ``max(0, base + A*sin(2*pi*F*t + phase))``.
"""
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

from .model import Phase, SinusoidParams, TrafficClass


@dataclass(frozen=True)
class PhaseSchedule:
    phases: Tuple[Phase, ...]

    def __post_init__(self):
        prev = None
        for ph in self.phases:
            if ph.cubic_flows < 0 or ph.prague_flows < 0:
                raise ValueError("flow counts must be >= 0")
            if prev is not None:
                if ph.start_s <= prev.start_s:
                    raise ValueError("phase starts must be strictly increasing")
                if ph.cubic_flows < prev.cubic_flows or ph.prague_flows < prev.prague_flows:
                    raise ValueError("flows persist across phases; counts cannot decrease")
            prev = ph

    @classmethod
    def from_config(cls, cfg) -> "PhaseSchedule":
        return cls(tuple(cfg.load_phases))

    def index_at(self, now_s: float) -> Optional[int]:
        for i, ph in enumerate(self.phases):
            if math.isclose(ph.start_s, now_s, rel_tol=0, abs_tol=1e-9):
                return i
        return None

    def totals(self, i: int) -> Tuple[int, int]:
        ph = self.phases[i]
        return ph.cubic_flows, ph.prague_flows

    def deltas(self, i: int) -> Tuple[int, int]:
        c, p = self.totals(i)
        if i == 0:
            return c, p
        c0, p0 = self.totals(i - 1)
        return c - c0, p - p0

    def bounds(self, duration_s: float) -> List[Tuple[float, float]]:
        """(start, end) of every phase; the last one runs to ``duration_s``."""
        ends = [ph.start_s for ph in self.phases[1:]] + [duration_s]
        return [(ph.start_s, end) for ph, end in zip(self.phases, ends)]


def _default_factory():
    counter = iter(range(1 << 62))

    def make(cls: TrafficClass):
        from .hosts import FlowState
        return FlowState(flow=next(counter), cls=cls, rtt_base=0)
    return make


def spawn_phase_flows(schedule: PhaseSchedule, now_s: float,
                      make_flow: Optional[Callable] = None) -> list:
    """New flows needed at the phase boundary ``now_s`` (Classic first)."""
    i = schedule.index_at(now_s)
    if i is None:
        raise ValueError(f"t={now_s} s is not a phase boundary")
    make = make_flow or _default_factory()
    dc, dp = schedule.deltas(i)
    return [make(TrafficClass.CLASSIC) for _ in range(dc)] + \
        [make(TrafficClass.SCALABLE) for _ in range(dp)]


SinusoidLoad = SinusoidParams


def sinusoid_rate(load: SinusoidLoad, t: float) -> float:
    if t < 0:
        raise ValueError("t must be >= 0")
    return max(0.0, load.base_rate
               + load.amplitude * math.sin(2 * math.pi * load.frequency * t + load.phase))


def rate_bound(load: SinusoidLoad) -> float:
    return max(0.0, load.base_rate + abs(load.amplitude))


def next_arrival(load: SinusoidLoad, t: float, rng, t_end: float = math.inf) -> Optional[float]:
    """First accepted arrival after ``t`` by thinning, or None before ``t_end``."""
    lam = rate_bound(load)
    if lam <= 0:
        return None
    while True:
        t += rng.exponential(lam)
        if t >= t_end:
            return None
        if rng.uniform() * lam < sinusoid_rate(load, t):
            return t


def thinning_arrivals(load: SinusoidLoad, t0: float, t1: float, rng) -> List[float]:
    out = []
    t = t0
    while True:
        t = next_arrival(load, t, rng, t1)
        if t is None:
            return out
        out.append(t)


def integrated_rate(load: SinusoidLoad, t0: float, t1: float, steps: int = 1000) -> float:
    """Expected arrival count over [t0, t1] (midpoint rule)."""
    h = (t1 - t0) / steps
    return sum(sinusoid_rate(load, t0 + (k + 0.5) * h) for k in range(steps)) * h

