"""One end-to-end run: senders -> switch port 0 -> receiver, ACKs back.

The sender-to-switch hop takes no time; the receiver holds each ACK for the
scenario's base RTT, so the loaded RTT is base RTT plus queueing delay plus
serialization.
"""
import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .aqm import COST_KIND, make_aqm, uses_dual_queue
from .aqm.ired import PROB_MAX, Ired, IredGhost
from .engine import Engine, EventKind, Rng, RunStats, SimulationError
from .hosts import FlowState, Receiver, Sender
from .metrics import (FairnessError, SeriesRecorder, accounting_oracle, cost_model_for,
                      jain_index)
from .model import (NS_PER_S, PortConfig, QueueConfig, ScenarioConfig, TrafficClass, ms,
                    seconds)
from .switch import Switch
from .workload import PhaseSchedule, next_arrival, spawn_phase_flows

RECEIVER_DST = 1
OUTPUT_PORT = 0


class InvariantViolation(SimulationError):
    pass


def port_layout(cfg: ScenarioConfig) -> PortConfig:
    cap = cfg.capacity_bytes()
    queues = [QueueConfig(0, cap)]
    if uses_dual_queue(cfg.aqm):
        queues.append(QueueConfig(1, cap, is_l4s=True))
    return PortConfig(OUTPUT_PORT, cfg.bandwidth_bps, tuple(queues))


@dataclass
class RunResult:
    config: ScenarioConfig
    summary: dict
    series: List[dict]
    flow_series: List[dict]
    stats: RunStats
    violations: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


class Simulation:
    def __init__(self, cfg: ScenarioConfig, trace: bool = False, trace_file=None,
                 record_series: bool = True):
        self.cfg = cfg
        self.engine = Engine(trace=trace, trace_file=trace_file)
        root = Rng(cfg.seed)
        self.switch_rng = root.spawn(1)
        self.workload_rng = root.spawn(2)
        self.aqm = make_aqm(cfg.aqm, cfg, rng=root.spawn(3))
        self.cost_kind = COST_KIND[cfg.aqm]
        self.recorder = SeriesRecorder() if record_series else None
        self.ids = itertools.count()
        self.switch = Switch(
            self.engine, [port_layout(cfg)], {OUTPUT_PORT: self.aqm},
            cost_model_for(self.cost_kind), self.switch_rng, {RECEIVER_DST: OUTPUT_PORT},
            cost_kind=self.cost_kind, ghost=cfg.ghost, scheduler=cfg.scheduler,
            starvation_guard=cfg.starvation_guard, on_deliver=self._delivered,
            recorder=self.recorder)
        self.rtt = ms(cfg.rtt_ms)
        self.receiver = Receiver(self.engine, self.rtt, self._ack)
        self.senders: Dict[int, Sender] = {}
        self.flows_created = 0
        self.schedule = PhaseSchedule.from_config(cfg)
        self.t_end = seconds(cfg.duration_s)
        # delivered bytes per class at each phase boundary
        self._phase_marks: List[tuple] = []
        self.requests_started = 0
        self.requests_finished = 0
        self._setup()

    # ------------------------------------------------------------ wiring

    def _setup(self):
        eng = self.engine
        for ph in self.schedule.phases:
            eng.schedule(seconds(ph.start_s), EventKind.FLOW_START, self._phase_start, ph)
        if self.aqm.timer_interval:
            eng.schedule(self.aqm.timer_interval, EventKind.TIMER_FIRE, self._aqm_timer)
        if self.cfg.sinusoid is not None:
            self._schedule_request(0.0)

    def _new_sender(self, cls: TrafficClass, limit: Optional[int] = None, on_finish=None) -> Sender:
        fid = self.flows_created
        self.flows_created += 1
        growth = self.cfg.classic_growth if cls == TrafficClass.CLASSIC else "reno"
        fs = FlowState(flow=fid, cls=cls, rtt_base=self.rtt, mss=self.cfg.mss_bytes,
                       growth=growth)
        snd = Sender(self.engine, fs, self.switch.receive, self.ids, RECEIVER_DST,
                     self.cfg.mtu_bytes, limit, on_finish)
        self.senders[fid] = snd
        return snd

    def _phase_start(self, ph):
        self._phase_marks.append(tuple(self.switch.counters.delivered_bytes_by_class))
        now = self.engine.now
        made = spawn_phase_flows(self.schedule, now / NS_PER_S,
                                 lambda cls: self._new_sender(cls))
        for snd in made:
            jitter = int(self.workload_rng.uniform() * self.rtt)
            self.engine.schedule(now + jitter, EventKind.FLOW_START, snd.start, snd)

    def _aqm_timer(self, _arg):
        now = self.engine.now
        self.aqm.timer_hook(now)
        self.engine.schedule(now + self.aqm.timer_interval, EventKind.TIMER_FIRE, self._aqm_timer)

    def _schedule_request(self, t_s: float):
        t = next_arrival(self.cfg.sinusoid, t_s, self.workload_rng, self.t_end / NS_PER_S)
        if t is None:
            return
        fire = max(seconds(t), self.engine.now)
        snd = self._new_sender(TrafficClass.CLASSIC, self.cfg.sinusoid.request_packets,
                               self._request_done)
        self.engine.schedule(fire, EventKind.FLOW_START, self._request_arrival, snd)

    def _request_arrival(self, snd: Sender):
        self.requests_started += 1
        snd.start()
        self._schedule_request(self.engine.now / NS_PER_S)

    def _request_done(self, snd: Sender):
        self.requests_finished += 1
        del self.senders[snd.fs.flow]

    def _delivered(self, pkt, t_done):
        self.receiver.receiver_ack_path(pkt, t_done)

    def _ack(self, ack):
        snd = self.senders.get(ack.flow)
        if snd is not None:
            snd.on_ack_arrival(ack)

    # ------------------------------------------------------------ run

    def run(self) -> RunResult:
        stats = self.engine.run_until(self.t_end)
        self._phase_marks.append(tuple(self.switch.counters.delivered_bytes_by_class))
        violations = self.check_invariants()
        summary = self.summary(stats)
        if self.recorder is not None:
            n = max(1, math.ceil(self.t_end / self.recorder.bucket_ns))
            series, flows = self.recorder.rows(n), self.recorder.flow_rows()
        else:
            series, flows = [], []
        return RunResult(self.cfg, summary, series, flows, stats, violations)

    def check_invariants(self) -> List[str]:
        sw = self.switch
        c = sw.counters
        led = sw.ledger
        out = []
        if sw.conservation_gap() != 0:
            out.append(f"packet conservation broken (gap {sw.conservation_gap()})")
        if isinstance(self.aqm, (Ired, IredGhost)):
            if c.egress_dropped:
                out.append(f"iRED dropped {c.egress_dropped} packets at egress")
            sc = TrafficClass.SCALABLE
            if c.ingress_drops_by_class[sc] or c.egress_drops_by_class[sc]:
                out.append("iRED dropped Scalable packets")
            st = self.aqm.state
            if not (0 <= st.prob_low <= st.prob_high <= PROB_MAX and 0 <= st.drop_prob <= PROB_MAX):
                out.append("drop_prob left [0, 65535]")
        if isinstance(self.aqm, Ired):
            if sw.flags.consumed > c.notifications_consumed:
                out.append("more notification drops than notifications")
            if sw.flags.consumed != c.ingress_dropped:
                out.append("ingress drops without a drop flag")
            if led.time_ns != c.notifications_emitted * sw.cost.recirc_latency:
                out.append("wasted time differs from notifications x recirculation latency")
        elif led.time_ns != c.egress_drop_delay_ns:
            out.append("wasted time differs from the summed queue delay of dropped packets")
        if self.cost_kind is not None:
            kind = self.cost_kind
            n = led.aqm_drops
            if n:
                tab = accounting_oracle({("run", kind): n}, self.cfg.mtu_bytes)
                if tab.cycles["run", kind] != led.cycles or \
                        tab.weight_tenths["run", kind] != led.weight_tenths or \
                        tab.memory_bytes["run", kind] != led.memory_bytes:
                    out.append("ledger totals differ from the oracle on this run's drop counts")
        for snd in self.senders.values():
            if snd.fs.cwnd < 1:
                out.append(f"flow {snd.fs.flow} cwnd below 1")
                break
        return out

    def summary(self, stats: RunStats) -> dict:
        cfg = self.cfg
        sw = self.switch
        c = sw.counters
        led = sw.ledger
        dur = self.t_end / NS_PER_S
        s = {
            "scenario": cfg.name,
            "aqm": cfg.aqm,
            "seed": cfg.seed,
            "duration_s": dur,
            "bandwidth_mbps": cfg.bandwidth_mbps,
            "rtt_ms": cfg.rtt_ms,
            "mtu_bytes": cfg.mtu_bytes,
            "events": stats.events_processed,
            "trace_hash": stats.trace_hash or "",
            "flows": self.flows_created,
            "injected": c.injected,
            "delivered": c.delivered,
            "ingress_drops": c.ingress_dropped,
            "egress_drops": c.egress_dropped,
            "tail_drops": c.tail_dropped,
            "no_route": c.no_route,
            "notifications_emitted": c.notifications_emitted,
            "notifications_consumed": c.notifications_consumed,
            "in_flight_end": sw.in_flight(),
        }
        for i, name in ((0, "classic"), (1, "scalable")):
            s[f"{name}_ingress_drops"] = c.ingress_drops_by_class[i]
            s[f"{name}_egress_drops"] = c.egress_drops_by_class[i]
            s[f"{name}_tail_drops"] = c.tail_drops_by_class[i]
            s[f"{name}_marks"] = c.marks[i]
        s.update({
            "wasted_memory_bytes": led.memory_bytes,
            "wasted_memory_mb": led.memory_mb,
            "wasted_time_ns": led.time_ns,
            "wasted_cycles": led.cycles,
            "wasted_weight": led.weight,
            "tail_memory_bytes": led.tail_memory_bytes,
            "tail_cycles": led.tail_cycles,
            "tail_weight": led.tail_weight_tenths / 10,
            "ingress_cycles_spent": c.ingress_cycles,
            "egress_cycles_spent": c.egress_cycles,
            "classic_mean_mbps": c.delivered_bytes_by_class[0] * 8 / dur / 1e6 if dur else 0.0,
            "scalable_mean_mbps": c.delivered_bytes_by_class[1] * 8 / dur / 1e6 if dur else 0.0,
            "max_qdelay_ms": max(c.max_delay.values(), default=0) / 1e6,
            "max_depth_bytes": max(c.max_depth.values(), default=0),
        })
        for i, j in enumerate(self.phase_jain(), start=1):
            s[f"jain_phase_{i}"] = j
        return s

    def phase_bytes(self) -> List[tuple]:
        """(classic_bytes, scalable_bytes) delivered inside each phase."""
        marks = self._phase_marks
        return [(b[0] - a[0], b[1] - a[1]) for a, b in zip(marks, marks[1:])]

    def phase_jain(self) -> List[float]:
        out = []
        for c, s in self.phase_bytes():
            try:
                out.append(jain_index([c, s]))
            except FairnessError:
                out.append(float("nan"))
        return out


def run_scenario(cfg: ScenarioConfig, **kw) -> RunResult:
    return Simulation(cfg, **kw).run()
