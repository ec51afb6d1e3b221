import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from aqmsim.engine import Rng
from aqmsim.model import Phase, TrafficClass, preset_scenario
from aqmsim.workload import (PhaseSchedule, SinusoidLoad, integrated_rate, next_arrival,
                             sinusoid_rate, spawn_phase_flows, thinning_arrivals)


def counts(flows):
    return (sum(f.cls == TrafficClass.CLASSIC for f in flows),
            sum(f.cls == TrafficClass.SCALABLE for f in flows))


def test_first_phase_totals():
    sched = PhaseSchedule.from_config(preset_scenario("I"))
    assert counts(spawn_phase_flows(sched, 0)) == (1, 1)


def test_third_phase_spawns_deltas():
    sched = PhaseSchedule.from_config(preset_scenario("I"))
    assert counts(spawn_phase_flows(sched, 240)) == (8, 8)
    assert sched.totals(2) == (10, 10)


def test_scaled_schedule_same_counts():
    sched = PhaseSchedule.from_config(preset_scenario("I").scaled(Fraction(1, 12)))
    total = [0, 0]
    for t, want in zip((0, 10, 20, 30), ((1, 1), (2, 2), (10, 10), (25, 25))):
        c, s = counts(spawn_phase_flows(sched, t))
        total[0] += c
        total[1] += s
        assert tuple(total) == want


def test_classic_flows_come_first():
    sched = PhaseSchedule((Phase(0, 2, 3),))
    assert [f.cls for f in spawn_phase_flows(sched, 0)] == [TrafficClass.CLASSIC] * 2 + \
        [TrafficClass.SCALABLE] * 3


def test_spawn_off_boundary_is_error():
    with pytest.raises(ValueError):
        spawn_phase_flows(PhaseSchedule.from_config(preset_scenario("I")), 5)


def test_schedule_validation():
    with pytest.raises(ValueError):
        PhaseSchedule((Phase(0, 2, 2), Phase(10, 1, 2)))
    with pytest.raises(ValueError):
        PhaseSchedule((Phase(0, 1, 1), Phase(0, 2, 2)))


@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=6))
def test_spawn_totals_match_schedule(increments):
    phases, c, s = [], 0, 0
    for i, (dc, ds) in enumerate(increments):
        c, s = c + dc, s + ds
        phases.append(Phase(10 * i, c, s))
    sched = PhaseSchedule(tuple(phases))
    tc = ts = 0
    for i, ph in enumerate(phases):
        a, b = counts(spawn_phase_flows(sched, ph.start_s))
        tc, ts = tc + a, ts + b
        assert (tc, ts) == sched.totals(i)


def test_sinusoid_zero_amplitude_is_flat():
    load = SinusoidLoad(125, 0, 0.5)
    assert all(sinusoid_rate(load, t) == 125 for t in (0, 0.3, 7.1))


def test_sinusoid_peak():
    load = SinusoidLoad(125, 25, 0.5)
    # 2*pi*F*t = pi/2 at t = 0.5 s
    assert sinusoid_rate(load, 0.5) == pytest.approx(150)


def test_sinusoid_clamped_at_zero():
    assert sinusoid_rate(SinusoidLoad(10, 50, 1.0), 0.75) == 0.0


def test_sinusoid_negative_time():
    with pytest.raises(ValueError):
        sinusoid_rate(SinusoidLoad(1, 0, 1), -1)


def test_fixed_rate_poisson_concentration():
    r, T = 40.0, 500.0
    n = len(thinning_arrivals(SinusoidLoad(r, 0, 1), 0, T, Rng(5)))
    assert abs(n - r * T) <= 3 * math.sqrt(r * T)


def test_thinning_matches_integrated_rate_per_bin():
    load = SinusoidLoad(100, 80, 0.25)
    arrivals = thinning_arrivals(load, 0, 400, Rng(8))
    # fold onto one 4 s period, 8 bins; compare with the integrated rate
    bins = [0] * 8
    for t in arrivals:
        bins[int((t % 4) / 0.5)] += 1
    for k, got in enumerate(bins):
        exp = 100 * integrated_rate(load, 0.5 * k, 0.5 * (k + 1))
        assert abs(got - exp) <= 4 * math.sqrt(exp), (k, got, exp)


def test_next_arrival_respects_horizon():
    load = SinusoidLoad(1, 0, 1)
    assert next_arrival(load, 0, Rng(1), t_end=1e-9) is None
    assert next_arrival(SinusoidLoad(0, 0, 1), 0, Rng(1)) is None
