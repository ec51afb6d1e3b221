"""Deterministic discrete-event core.

Events are ordered by ``(fire_at, seq)``; ``seq`` is assigned at schedule
time so equal-time events fire in the order they were scheduled.

Randomness comes from SplitMix64 (Steele, Lea & Flood 2014), chosen because
its output sequence is fully specified by a few lines of integer arithmetic
and reference vectors are widely published.
"""
import hashlib
import heapq
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Any, Callable, NamedTuple, Optional, TextIO

from .model import SimTime

_MASK64 = (1 << 64) - 1


class SimulationError(RuntimeError):
    """Internal logic error; the run must be aborted."""


class Rng:
    """SplitMix64 generator."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = z = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_rand16(self) -> int:
        """Uniform integer in [0, 65535] (top 16 bits of the next output)."""
        return self.next_u64() >> 48

    def uniform(self) -> float:
        """Uniform float in [0, 1) with 53 bits of resolution."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def exponential(self, rate: float) -> float:
        return -math.log1p(-self.uniform()) / rate

    def randbelow(self, n: int) -> int:
        return self.next_u64() % n

    def spawn(self, tag: int) -> "Rng":
        """Independent child stream derived from this generator's seed state."""
        child = Rng(self.state ^ ((tag * 0xD1B54A32D192ED03) & _MASK64))
        child.next_u64()
        return child


def next_rand16(rng: Rng) -> int:
    return rng.next_rand16()


class EventKind(IntEnum):
    PACKET_ARRIVAL = 0
    DEQUEUE = 1
    TIMER_FIRE = 2
    FLOW_START = 3
    ACK_DELIVERY = 4


class Event(NamedTuple):
    fire_at: SimTime
    seq: int
    kind: EventKind
    handler: Callable[[Any], None]
    arg: Any = None


@dataclass
class RunStats:
    events_processed: int
    clock: SimTime
    trace_hash: Optional[str] = None


class Engine:
    """Single-threaded event loop with a virtual nanosecond clock.

    With ``trace=True`` every processed event is folded into a BLAKE2 digest
    (and optionally written to ``trace_file`` as ``time kind id`` lines).
    """

    def __init__(self, trace: bool = False, trace_file: Optional[TextIO] = None):
        self.now: SimTime = 0
        self._heap: list = []
        self._seq = 0
        self.events_processed = 0
        self._running = False
        self.trace = trace or trace_file is not None
        self._trace_file = trace_file
        self._digest = hashlib.blake2b(digest_size=16) if self.trace else None

    def schedule(self, fire_at: SimTime, kind: EventKind, handler, arg=None) -> Event:
        if fire_at < self.now:
            raise SimulationError(
                f"event {kind.name} scheduled at {fire_at} ns, before now={self.now} ns")
        ev = Event(fire_at, self._seq, kind, handler, arg)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def after(self, delay: SimTime, kind: EventKind, handler, arg=None) -> Event:
        return self.schedule(self.now + delay, kind, handler, arg)

    def pending(self) -> int:
        return len(self._heap)

    def run_until(self, t_end: SimTime) -> RunStats:
        if self._running:
            raise SimulationError("run_until called while a run is in progress")
        self._running = True
        heap = self._heap
        pop = heapq.heappop
        processed = 0
        try:
            if self.trace:
                while heap and heap[0][0] <= t_end:
                    ev = pop(heap)
                    self.now = ev[0]
                    self._record(ev)
                    ev[3](ev[4])
                    processed += 1
            else:
                while heap and heap[0][0] <= t_end:
                    ev = pop(heap)
                    self.now = ev[0]
                    ev[3](ev[4])
                    processed += 1
        finally:
            self._running = False
            self.events_processed += processed
        if t_end > self.now:
            self.now = t_end
        return RunStats(self.events_processed, self.now, self.trace_hash())

    def _record(self, ev: Event):
        line = f"{ev.fire_at} {ev.kind.name} {getattr(ev.arg, 'id', -1)}\n"
        self._digest.update(line.encode())
        if self._trace_file is not None:
            self._trace_file.write(line)

    def trace_hash(self) -> Optional[str]:
        return self._digest.hexdigest() if self._digest is not None else None
