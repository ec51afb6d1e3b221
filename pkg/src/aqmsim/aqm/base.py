"""Two-hook AQM contract shared by every discipline.

The egress hook sees queue metadata and returns a decision; the ingress hook
sees only the packet, the drop-flag table and (in ghost mode) the live queue
depth, and returns an action.
"""
from enum import IntEnum
from typing import Dict, NamedTuple, Optional, Tuple

from ..model import SimTime


class EgressVerdict(IntEnum):
    FORWARD = 0
    FORWARD_MARKED = 1
    DROP_AT_DEPARSER = 2
    FORWARD_AND_NOTIFY = 3


class IngressVerdict(IntEnum):
    FORWARD = 0  # forward to the Traffic Manager queue chosen by classification
    DROP_AQM = 1
    DROP_NO_ROUTE = 2
    CONSUME_NOTIFICATION = 3


class QueueMetadata(NamedTuple):
    queue_delay: SimTime
    queue_depth_bytes: int


class DropFlagTable:
    """One drop-pending flag per (port, queue)."""

    def __init__(self):
        self._flags: Dict[Tuple[int, int], bool] = {}
        self.sets = 0
        self.consumed = 0

    def set(self, port: int, queue: int):
        self._flags[port, queue] = True
        self.sets += 1

    def is_set(self, port: int, queue: int) -> bool:
        return self._flags.get((port, queue), False)

    def take(self, port: int, queue: int) -> bool:
        """Clear the flag and report whether it was set."""
        if self._flags.get((port, queue), False):
            self._flags[port, queue] = False
            self.consumed += 1
            return True
        return False


def taildrop_decide(queue_occupancy: int, capacity: int, pkt) -> bool:
    """Admission test at the Traffic Manager; True means accepted."""
    return queue_occupancy + pkt.size_bytes <= capacity


class Aqm:
    """Base discipline: forwards everything, never signals congestion."""

    key = "taildrop"
    cost_kind: Optional[str] = None
    dual_queue = False
    uses_ghost = False
    timer_interval: Optional[SimTime] = None

    def egress_hook(self, pkt, meta: QueueMetadata, rng) -> EgressVerdict:
        return EgressVerdict.FORWARD

    def ingress_hook(self, pkt, flags: DropFlagTable, ghost_depth: Optional[int] = None) -> IngressVerdict:
        return IngressVerdict.FORWARD

    def timer_hook(self, now: SimTime):
        pass

    def admit(self, queue_occupancy: int, capacity: int, pkt) -> bool:
        return taildrop_decide(queue_occupancy, capacity, pkt)
