import itertools

import pytest
from hypothesis import HealthCheck, settings

from aqmsim.aqm import Aqm
from aqmsim.engine import Engine, Rng
from aqmsim.metrics import cost_model_for
from aqmsim.model import PortConfig, QueueConfig, TrafficClass, new_packet

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


class SwitchRig:
    """One switch, one output port (0) with a Classic and an L4S queue."""

    def __init__(self, aqm=None, cost_kind=None, capacity=10 ** 6, bw=120_000_000,
                 dual=True, ghost=False, scheduler="strict", guard=16, seed=1):
        from aqmsim.switch import Switch

        self.engine = Engine(trace=True)
        queues = [QueueConfig(0, capacity)]
        if dual:
            queues.append(QueueConfig(1, capacity, is_l4s=True))
        self.port = PortConfig(0, bw, tuple(queues))
        self.delivered = []
        self.aqm = aqm or Aqm()
        self.switch = Switch(self.engine, [self.port], {0: self.aqm}, cost_model_for(cost_kind),
                             Rng(seed), {1: 0}, cost_kind=cost_kind, ghost=ghost,
                             scheduler=scheduler, starvation_guard=guard,
                             on_deliver=lambda p, t: self.delivered.append((p, t)))
        self.ids = itertools.count()

    def packet(self, cls=TrafficClass.CLASSIC, size=1500, dst=1, flow=0):
        return new_packet(next(self.ids), flow, cls, size, self.engine.now, dst)

    def send(self, *args, **kw):
        pkt = self.packet(*args, **kw)
        return pkt, self.switch.receive(pkt)

    def run(self, t=10 ** 12):
        return self.engine.run_until(t)


@pytest.fixture
def rig():
    return SwitchRig
