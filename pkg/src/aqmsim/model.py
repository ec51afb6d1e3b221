"""Core domain types: time, packets, port/queue layout and scenario presets.

Simulated time is an integer count of nanoseconds everywhere. Helper
constructors (`ms`, `us`, `seconds`) convert human units to ticks.
"""
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from fractions import Fraction
from typing import Optional, Tuple

SimTime = int  # nanoseconds

NS_PER_US = 1_000
NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000

NOTIFICATION_BYTES = 48
HEADER_ALLOWANCE_BYTES = 40


class ConfigError(ValueError):
    """Invalid or unknown configuration."""


def us(x) -> SimTime:
    return int(round(x * NS_PER_US))


def ms(x) -> SimTime:
    return int(round(x * NS_PER_MS))


def seconds(x) -> SimTime:
    if isinstance(x, Fraction):
        return int(x * NS_PER_S)
    return int(round(x * NS_PER_S))


class TrafficClass(IntEnum):
    CLASSIC = 0
    SCALABLE = 1


class EcnCodepoint(IntEnum):
    NOT_ECT = 0
    ECT1 = 1
    ECT0 = 2
    CE = 3


class PacketRole(IntEnum):
    REGULAR = 0
    NOTIFICATION = 1
    ACK = 2


@dataclass(slots=True, eq=False)
class Packet:
    id: int
    flow: int
    cls: TrafficClass
    ecn: EcnCodepoint
    size_bytes: int
    role: PacketRole = PacketRole.REGULAR
    ingress_tstamp: SimTime = 0
    egress_tstamp: Optional[SimTime] = None
    output_port: int = 0
    queue: int = 0
    dst: int = 0
    seq: int = 0
    sent_at: SimTime = 0

    @property
    def is_scalable(self) -> bool:
        return self.cls == TrafficClass.SCALABLE


def new_packet(pid, flow, cls, size_bytes, now, dst=0, seq=0) -> Packet:
    """Create a Regular data packet with the ECN codepoint its class implies."""
    ecn = EcnCodepoint.ECT1 if cls == TrafficClass.SCALABLE else EcnCodepoint.NOT_ECT
    return Packet(pid, flow, cls, ecn, size_bytes, PacketRole.REGULAR, now,
                  None, 0, 0, dst, seq, now)


def notification_for(pkt: Packet, pid: int, now: SimTime) -> Packet:
    """The 48-byte clone that carries a drop decision back to ingress."""
    return Packet(pid, pkt.flow, pkt.cls, pkt.ecn, NOTIFICATION_BYTES,
                  PacketRole.NOTIFICATION, now, None, pkt.output_port, pkt.queue,
                  pkt.dst, pkt.seq, now)


@dataclass(frozen=True)
class QueueConfig:
    queue: int
    capacity_bytes: int
    is_l4s: bool = False
    scheduler_weight: int = 1

    def __post_init__(self):
        if self.capacity_bytes <= 0:
            raise ConfigError(f"queue {self.queue}: capacity_bytes must be > 0")
        if self.scheduler_weight <= 0:
            raise ConfigError(f"queue {self.queue}: scheduler_weight must be > 0")


@dataclass(frozen=True)
class PortConfig:
    port: int
    bandwidth_bps: int
    queues: Tuple[QueueConfig, ...]

    def __post_init__(self):
        if self.bandwidth_bps <= 0:
            raise ConfigError(f"port {self.port}: bandwidth_bps must be > 0")
        if not self.queues:
            raise ConfigError(f"port {self.port}: needs at least one queue")
        if sum(q.is_l4s for q in self.queues) > 1:
            raise ConfigError(f"port {self.port}: at most one L4S queue allowed")
        ids = [q.queue for q in self.queues]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"port {self.port}: duplicate queue ids {ids}")

    @property
    def l4s_queue(self) -> Optional[int]:
        for q in self.queues:
            if q.is_l4s:
                return q.queue
        return None

    @property
    def classic_queue(self) -> int:
        for q in self.queues:
            if not q.is_l4s:
                return q.queue
        return self.queues[0].queue


@dataclass(frozen=True)
class PipelineCostModel:
    """Per-packet pipeline cost of one AQM program.

    Weights are integer tenths (112.5 is stored as 1125).
    """
    ingress_cycles: int
    egress_cycles: int
    ingress_weight_tenths: int
    egress_weight_tenths: int
    notification_bytes: int = NOTIFICATION_BYTES
    recirc_latency: SimTime = us(1)
    egress_drop_memory_multiplier: int = 2

    def __post_init__(self):
        vals = (self.ingress_cycles, self.egress_cycles,
                self.ingress_weight_tenths, self.egress_weight_tenths)
        if min(vals) < 0:
            raise ConfigError("cycle and weight constants must be >= 0")


@dataclass(frozen=True)
class Phase:
    start_s: float
    cubic_flows: int
    prague_flows: int


@dataclass(frozen=True)
class SinusoidParams:
    base_rate: float
    amplitude: float
    frequency: float
    phase: float = 0.0
    request_packets: int = 10


@dataclass(frozen=True)
class AqmSettings:
    target_delay_ms: float = 20
    ired_max_factor: int = 2
    # None: derived from bandwidth x target delay
    ired_min_depth_bytes: Optional[int] = None
    ired_sampling: str = "all"
    codel_interval_ms: float = 100
    codel_sqrt: str = "lpm"
    pi2_interval_ms: float = 15
    pi2_alpha: float = 0.3125
    pi2_beta: float = 3.125
    coupling_k: float = 2

    def __post_init__(self):
        if self.target_delay_ms <= 0:
            raise ConfigError("target_delay_ms must be > 0")
        if self.ired_max_factor < 1:
            raise ConfigError("ired_max_factor must be >= 1")
        if self.ired_sampling not in ("all", "classic"):
            raise ConfigError(f"unknown ired_sampling {self.ired_sampling!r}")
        if self.codel_sqrt not in ("lpm", "exact"):
            raise ConfigError(f"unknown codel_sqrt {self.codel_sqrt!r}")
        if self.codel_interval_ms <= 0 or self.pi2_interval_ms <= 0:
            raise ConfigError("control intervals must be > 0")


DEFAULT_PHASES = (Phase(0, 1, 1), Phase(120, 2, 2), Phase(240, 10, 10), Phase(360, 25, 25))


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    bandwidth_mbps: int
    rtt_ms: int
    mtu_bytes: int
    aqm: str = "ired-delay"
    aqm_settings: AqmSettings = field(default_factory=AqmSettings)
    load_phases: Tuple[Phase, ...] = DEFAULT_PHASES
    duration_s: float = 480
    seed: int = 1
    sinusoid: Optional[SinusoidParams] = None
    ghost: bool = False
    queue_capacity_bytes: Optional[int] = None
    scheduler: str = "wrr"
    starvation_guard: int = 16
    classic_growth: str = "reno"

    def __post_init__(self):
        if self.bandwidth_mbps <= 0 or self.rtt_ms <= 0:
            raise ConfigError("bandwidth and rtt must be positive")
        if self.mtu_bytes <= HEADER_ALLOWANCE_BYTES:
            raise ConfigError(f"mtu_bytes must exceed {HEADER_ALLOWANCE_BYTES}")
        starts = [p.start_s for p in self.load_phases]
        if starts != sorted(starts):
            raise ConfigError("load phases must be sorted by start time")
        if starts and self.duration_s < starts[-1]:
            raise ConfigError("duration_s must cover the last phase")
        if self.scheduler not in ("strict", "wrr"):
            raise ConfigError(f"unknown scheduler {self.scheduler!r}")
        if self.classic_growth not in ("reno", "cubic"):
            raise ConfigError(f"unknown classic growth {self.classic_growth!r}")

    @property
    def bandwidth_bps(self) -> int:
        return self.bandwidth_mbps * 1_000_000

    @property
    def bdp_bytes(self) -> int:
        return self.bandwidth_bps * self.rtt_ms // 8000

    @property
    def mss_bytes(self) -> int:
        return self.mtu_bytes - HEADER_ALLOWANCE_BYTES

    def default_capacity_bytes(self) -> int:
        # 2 x BDP, with at least 100 ms of line-rate headroom so every AQM
        # threshold (up to 40 ms) is reachable at short RTTs
        return max(2 * self.bdp_bytes, self.bandwidth_bps // 80)

    def capacity_bytes(self) -> int:
        return self.queue_capacity_bytes or self.default_capacity_bytes()

    def scaled(self, factor) -> "ScenarioConfig":
        """Shrink (or stretch) phase starts and duration, keeping flow counts."""
        factor = Fraction(factor)
        if factor <= 0:
            raise ConfigError("scale factor must be > 0")
        phases = tuple(replace(p, start_s=_scale(p.start_s, factor)) for p in self.load_phases)
        return replace(self, load_phases=phases, duration_s=_scale(self.duration_s, factor))


def _scale(x, factor: Fraction):
    v = Fraction(x) * factor
    return int(v) if v.denominator == 1 else float(v)


_PRESET_TABLE = {
    "I": (120, 10, 1500),
    "II": (120, 50, 1500),
    "III": (1000, 10, 1500),
    "IV": (1000, 50, 1500),
    "V": (120, 10, 800),
    "VI": (120, 50, 800),
    "VII": (1000, 10, 800),
    "VIII": (1000, 50, 800),
    "IX": (120, 10, 400),
    "X": (120, 50, 400),
    "XI": (1000, 10, 400),
    "XII": (1000, 50, 400),
}
PRESET_NAMES = tuple(_PRESET_TABLE)


def preset_scenario(name: str) -> ScenarioConfig:
    try:
        bw, rtt, mtu = _PRESET_TABLE[name]
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; expected one of {', '.join(PRESET_NAMES)}") from None
    return ScenarioConfig(name=name, bandwidth_mbps=bw, rtt_ms=rtt, mtu_bytes=mtu)
