import math

import pytest
from hypothesis import given, strategies as st

from aqmsim.aqm import (AQM_KEYS, Codel, CodelState, DropFlagTable, DualPi2, EgressVerdict,
                        IngressVerdict, Ired, IredGhost, IredMode, IredState, Pi2, Pi2State,
                        check_aqm_key, codel_decide, codel_inv_sqrt_approx, control_law,
                        ewma_update, ired_egress_decide, ired_ghost_decide, ired_ingress_act,
                        make_aqm, pi2_decide, pi2_timer_update, pi2_update_rule,
                        taildrop_decide)
from aqmsim.aqm.base import QueueMetadata
from aqmsim.aqm.ired import PROB_MAX
from aqmsim.engine import Rng
from aqmsim.model import (ConfigError, EcnCodepoint, PacketRole, TrafficClass, ms,
                          new_packet, notification_for, preset_scenario)

C, S = TrafficClass.CLASSIC, TrafficClass.SCALABLE


def pkt(cls=C, size=1500, port=0, queue=None):
    p = new_packet(0, 0, cls, size, 0)
    p.output_port = port
    p.queue = (1 if cls == S else 0) if queue is None else queue
    return p


def meta(delay=0, depth=0):
    return QueueMetadata(delay, depth)


# ---------------------------------------------------------------- EWMA


def test_ewma_examples():
    st_ = IredState.with_min(ms(20))
    assert ewma_update(st_, ms(40)) == ms(20)
    assert ewma_update(st_, ms(20)) == ms(20)


def test_ewma_truncates():
    st_ = IredState.with_min(10)
    st_.ewma = 0
    assert ewma_update(st_, 3) == 1


@given(st.lists(st.integers(min_value=0, max_value=10 ** 9), min_size=1, max_size=300))
def test_ewma_tracks_exact_average(samples):
    st_ = IredState.with_min(1)
    exact = 0.0
    for y in samples:
        got = ewma_update(st_, y)
        exact = 0.5 * y + 0.5 * exact
        # truncation error e_t = e_{t-1}/2 + frac, so it stays in [0, 1)
        assert 0 <= exact - got < 1


def test_max_is_twice_min_by_default():
    st_ = IredState.with_min(1234)
    assert st_.max_thsld == 2468


# ---------------------------------------------------------------- iRED egress


def test_below_min_forwards_without_touching_register():
    st_ = IredState.with_min(ms(20))
    st_.drop_prob = 500
    for cls in (C, S):
        assert ired_egress_decide(st_, pkt(cls), meta(ms(1)), Rng(1)) == EgressVerdict.FORWARD
    assert st_.drop_prob == 500


def test_above_max_scalable_is_marked():
    st_ = IredState.with_min(ms(1))
    st_.ewma = ms(10)
    p = pkt(S)
    assert ired_egress_decide(st_, p, meta(ms(10)), Rng(1)) == EgressVerdict.FORWARD_MARKED
    assert p.ecn == EcnCodepoint.CE


def test_above_max_classic_notifies():
    st_ = IredState.with_min(ms(1))
    st_.ewma = ms(10)
    assert ired_egress_decide(st_, pkt(C), meta(ms(10)), Rng(1)) == EgressVerdict.FORWARD_AND_NOTIFY


def test_zero_register_in_band_never_notifies():
    st_ = IredState.with_min(ms(20))
    st_.ewma = ms(30)
    assert ired_egress_decide(st_, pkt(C), meta(ms(30)), Rng(1)) == EgressVerdict.FORWARD
    assert st_.drop_prob == 1


def test_edge_of_band_is_in_band():
    st_ = IredState.with_min(100)
    st_.ewma = 200
    # sample 200 keeps EWMA exactly at max, which is inside the band
    v = ired_egress_decide(st_, pkt(C), meta(200), Rng(1))
    assert v == EgressVerdict.FORWARD and st_.drop_prob == 1


def test_register_saturates_at_top():
    st_ = IredState.with_min(100, IredMode.DEPTH)
    st_.ewma, st_.drop_prob = 150, PROB_MAX

    class Always:
        def next_rand16(self):
            return PROB_MAX
    # rand (65535) is never < 65535, so the register would increment
    ired_egress_decide(st_, pkt(C), meta(0, 150), Always())
    assert st_.drop_prob == PROB_MAX


def test_scalable_uses_halved_draw():
    class Fixed:
        def next_rand16(self):
            return 1001
    st_ = IredState.with_min(100, IredMode.DEPTH)
    st_.ewma, st_.drop_prob = 150, 600
    # Classic: 1001 < 600 false; Scalable: 500 < 600 true
    assert ired_egress_decide(st_, pkt(C), meta(0, 150), Fixed()) == EgressVerdict.FORWARD
    assert st_.drop_prob == 601
    assert ired_egress_decide(st_, pkt(S), meta(0, 150), Fixed()) == EgressVerdict.FORWARD_MARKED
    assert st_.drop_prob == 600


def test_depth_mode_uses_depth():
    st_ = IredState.with_min(3000, IredMode.DEPTH)
    ired_egress_decide(st_, pkt(C), meta(ms(500), 8000), Rng(1))
    assert st_.ewma == 4000


def test_classic_sampling_skips_scalable():
    st_ = IredState.with_min(ms(20), classic_sampling=True)
    ired_egress_decide(st_, pkt(S), meta(ms(40)), Rng(1))
    assert st_.ewma == 0
    ired_egress_decide(st_, pkt(C), meta(ms(40)), Rng(1))
    assert st_.ewma == ms(20)


def test_coupled_marking_is_twice_notify_rate():
    rng = Rng(11)
    st_ = IredState.with_min(100, IredMode.DEPTH)
    n, d = 40_000, 8000
    notes = marks = 0
    for i in range(n):
        st_.ewma, st_.drop_prob = 150, d
        cls = C if i % 2 == 0 else S
        v = ired_egress_decide(st_, pkt(cls), meta(0, 150), rng)
        notes += v == EgressVerdict.FORWARD_AND_NOTIFY
        marks += v == EgressVerdict.FORWARD_MARKED
    half = n // 2
    pc, ps = d / 65536, 2 * d / 65536
    assert abs(notes - half * pc) < 4 * math.sqrt(half * pc * (1 - pc))
    assert abs(marks - half * ps) < 4 * math.sqrt(half * ps * (1 - ps))


@given(st.lists(st.tuples(st.integers(min_value=0, max_value=ms(200)), st.booleans()),
                max_size=400),
       st.integers(min_value=0, max_value=PROB_MAX), st.integers(min_value=0, max_value=99))
def test_register_stays_in_range_under_adversarial_delays(trace, start, seed):
    st_ = IredState.with_min(ms(20))
    st_.drop_prob = st_.prob_low = st_.prob_high = start
    rng = Rng(seed)
    for delay, scal in trace:
        before = st_.drop_prob
        ired_egress_decide(st_, pkt(S if scal else C), meta(delay), rng)
        assert 0 <= st_.drop_prob <= PROB_MAX
        assert abs(st_.drop_prob - before) <= 1


# ---------------------------------------------------------------- iRED ingress


def _note(port=0, queue=0):
    return notification_for(pkt(C, port=port, queue=queue), 9, 0)


def test_one_notification_drops_exactly_one_classic():
    flags = DropFlagTable()
    assert ired_ingress_act(_note(), flags) == IngressVerdict.CONSUME_NOTIFICATION
    verdicts = [ired_ingress_act(pkt(C), flags) for _ in range(3)]
    assert verdicts == [IngressVerdict.DROP_AQM, IngressVerdict.FORWARD, IngressVerdict.FORWARD]


def test_scalable_passes_flag_then_classic_dropped():
    flags = DropFlagTable()
    ired_ingress_act(_note(queue=0), flags)
    assert ired_ingress_act(pkt(S, queue=0), flags) == IngressVerdict.FORWARD
    assert ired_ingress_act(pkt(C), flags) == IngressVerdict.DROP_AQM


def test_two_notifications_interleaved_drop_two():
    flags = DropFlagTable()
    out = []
    for _ in range(2):
        ired_ingress_act(_note(), flags)
        out.append(ired_ingress_act(pkt(C), flags))
    assert out == [IngressVerdict.DROP_AQM] * 2
    assert flags.sets == flags.consumed == 2


def test_flags_are_per_port_and_queue():
    flags = DropFlagTable()
    ired_ingress_act(_note(port=1, queue=0), flags)
    assert ired_ingress_act(pkt(C, port=0), flags) == IngressVerdict.FORWARD
    assert ired_ingress_act(pkt(C, port=1), flags) == IngressVerdict.DROP_AQM


@given(st.lists(st.sampled_from(["note", "c", "s"]), max_size=200))
def test_drops_never_exceed_notifications(ops):
    flags = DropFlagTable()
    notes = drops = 0
    for op in ops:
        if op == "note":
            ired_ingress_act(_note(), flags)
            notes += 1
        else:
            v = ired_ingress_act(pkt(C if op == "c" else S, queue=0), flags)
            drops += v == IngressVerdict.DROP_AQM
            if op == "s":
                assert v == IngressVerdict.FORWARD
    assert drops <= notes


# ---------------------------------------------------------------- ghost


def test_ghost_below_min_forwards():
    st_ = IredState.with_min(10_000, IredMode.DEPTH)
    assert ired_ghost_decide(st_, pkt(C), 100, Rng(1)) == IngressVerdict.FORWARD


def test_ghost_above_max_classic_dropped():
    st_ = IredState.with_min(1000, IredMode.DEPTH)
    st_.ewma = 10 ** 6
    assert ired_ghost_decide(st_, pkt(C), 10 ** 6, Rng(1)) == IngressVerdict.DROP_AQM


def test_ghost_above_max_scalable_marked():
    st_ = IredState.with_min(1000, IredMode.DEPTH)
    st_.ewma = 10 ** 6
    p = pkt(S)
    assert ired_ghost_decide(st_, p, 10 ** 6, Rng(1)) == IngressVerdict.FORWARD
    assert p.ecn == EcnCodepoint.CE


def test_ghost_requires_depth_mode_and_channel():
    with pytest.raises(ValueError):
        IredGhost(IredState.with_min(1, IredMode.DELAY), Rng(1))
    g = IredGhost(IredState.with_min(1, IredMode.DEPTH), Rng(1))
    with pytest.raises(ValueError):
        g.ingress_hook(pkt(C), DropFlagTable(), None)


def test_ired_ghost_needs_ghost_scenario():
    with pytest.raises(ConfigError):
        make_aqm("ired-ghost", preset_scenario("I"))


# ---------------------------------------------------------------- CoDel


def test_codel_below_target_forwards_and_resets():
    st_ = CodelState(ms(20), ms(100))
    st_.first_above_time = 5
    assert codel_decide(st_, pkt(), meta(ms(5), 30_000), 0) == EgressVerdict.FORWARD
    assert st_.first_above_time is None


def test_codel_needs_a_full_interval_above_target():
    st_ = CodelState(ms(20), ms(100))
    for t in range(0, ms(99) + 1, ms(1)):
        assert codel_decide(st_, pkt(), meta(ms(30), 30_000), t) == EgressVerdict.FORWARD
    assert codel_decide(st_, pkt(), meta(ms(30), 30_000), ms(100)) == EgressVerdict.DROP_AT_DEPARSER
    assert st_.dropping and st_.count == 1


def test_codel_control_law_count_4():
    for mode in ("exact", "lpm"):
        st_ = CodelState(ms(20), ms(100), mode)
        st_.count = 4
        assert control_law(st_, 0) == ms(50)


def test_codel_leaves_dropping_below_target():
    st_ = CodelState(ms(20), ms(100))
    st_.dropping, st_.count = True, 3
    assert codel_decide(st_, pkt(), meta(ms(1), 30_000), ms(500)) == EgressVerdict.FORWARD
    assert not st_.dropping


def test_codel_small_backlog_never_drops():
    st_ = CodelState(ms(20), ms(100), mtu_bytes=1500)
    for t in range(0, ms(500), ms(1)):
        assert codel_decide(st_, pkt(), meta(ms(50), 1500), t) == EgressVerdict.FORWARD


def test_codel_drop_next_increases_within_episode():
    st_ = CodelState(ms(20), ms(100))
    last = None
    for t in range(0, 3 * 10 ** 9, ms(1)):
        if codel_decide(st_, pkt(), meta(ms(40), 30_000), t) == EgressVerdict.DROP_AT_DEPARSER:
            assert st_.count >= 1
            if last is not None:
                assert st_.drop_next > last
            last = st_.drop_next


def test_inv_sqrt_examples():
    assert codel_inv_sqrt_approx(1) == 1 << 16
    assert abs(codel_inv_sqrt_approx(4) / 65536 - 0.5) / 0.5 < 0.02


def test_inv_sqrt_sweep_within_two_percent():
    worst = max(abs(codel_inv_sqrt_approx(n) / 65536 * math.sqrt(n) - 1) for n in range(1, 65537))
    assert worst <= 0.02


def test_inv_sqrt_rejects_zero():
    with pytest.raises(ValueError):
        codel_inv_sqrt_approx(0)


def _codel_drops(mode, n_target=10_000):
    st_ = CodelState(ms(20), ms(100), mode)
    drops = 0
    t = 0
    step = 50_000  # one packet every 50 us, sojourn pinned above target
    while drops < n_target:
        if codel_decide(st_, pkt(), meta(ms(40), 30_000), t) == EgressVerdict.DROP_AT_DEPARSER:
            drops += 1
        t += step
    return t


def test_codel_lpm_vs_exact_drop_counts_within_5_percent():
    # time needed to reach 10^4 drops in one long episode
    t_exact, t_lpm = _codel_drops("exact"), _codel_drops("lpm")
    assert abs(t_lpm - t_exact) / t_exact <= 0.05


# ---------------------------------------------------------------- PI2


def test_pi2_update_worked_example():
    p = pi2_update_rule(0.0, ms(25), ms(22), ms(20), 0.3125, 3.125)
    assert p == pytest.approx(0.0109375, abs=1e-12)


def test_pi2_update_zero_error_keeps_p():
    assert pi2_update_rule(0.3, ms(20), ms(20), ms(20), 0.3125, 3.125) == 0.3


def test_pi2_sustained_low_delay_floors_at_zero():
    st_ = Pi2State(ms(20), ms(15))
    st_.set_probability(0.2)
    for k in range(200):
        st_.latest_delay_sample = ms(1)
        pi2_timer_update(st_, k * ms(15))
    assert st_.p == 0.0 and st_.classic_thresh == 0


def test_pi2_uses_sample_from_previous_tick():
    st_ = Pi2State(ms(20), ms(15))
    st_.latest_delay_sample = ms(25)
    pi2_timer_update(st_, ms(15))
    assert st_.p == 0.0  # first sample still in flight to the control plane
    st_.latest_delay_sample = ms(0)
    pi2_timer_update(st_, ms(30))
    assert st_.p == pytest.approx(0.3125 * 0.005 + 3.125 * 0.025)


def test_pi2_without_staleness_updates_immediately():
    st_ = Pi2State(ms(20), ms(15), staleness_ticks=0)
    st_.latest_delay_sample = ms(25)
    pi2_timer_update(st_, ms(15))
    assert st_.p > 0


def test_pi2_decide_extremes():
    st_ = Pi2State(ms(20), ms(15))
    rng = Rng(4)
    st_.set_probability(0.0)
    assert all(pi2_decide(st_, pkt(c), rng) == EgressVerdict.FORWARD for c in (C, S) * 50)
    st_.set_probability(1.0)
    assert all(pi2_decide(st_, pkt(C), rng) == EgressVerdict.DROP_AT_DEPARSER for _ in range(100))
    assert all(pi2_decide(st_, pkt(S), rng) == EgressVerdict.FORWARD_MARKED for _ in range(100))


def test_pi2_decide_frequencies():
    st_ = Pi2State(ms(20), ms(15))
    st_.set_probability(0.1)
    rng = Rng(17)
    n = 100_000
    drops = sum(pi2_decide(st_, pkt(C), rng) == EgressVerdict.DROP_AT_DEPARSER for _ in range(n))
    marks = sum(pi2_decide(st_, pkt(S), rng) == EgressVerdict.FORWARD_MARKED for _ in range(n))
    for got, p in ((drops, 0.01), (marks, 0.2)):
        assert abs(got - n * p) <= 3 * math.sqrt(n * p * (1 - p))


@given(st.floats(min_value=0, max_value=0.5))
def test_pi2_classic_never_above_scalable(p):
    st_ = Pi2State(ms(20), ms(15))
    st_.set_probability(p)
    assert st_.classic_thresh <= st_.scalable_thresh
    if p > 0.001:
        assert st_.classic_thresh < st_.scalable_thresh


@given(st.floats(min_value=-5, max_value=5))
def test_pi2_probability_clamped(p):
    st_ = Pi2State(ms(20), ms(15))
    st_.set_probability(p)
    assert 0 <= st_.p <= 1 and st_.classic_thresh <= 65536


def test_dualpi2_samples_classic_only():
    a = DualPi2(Pi2State(ms(20), ms(15)))
    a.egress_hook(pkt(S), meta(ms(50)), Rng(1))
    assert a.state.latest_delay_sample == 0
    a.egress_hook(pkt(C), meta(ms(7)), Rng(1))
    assert a.state.latest_delay_sample == ms(7)
    single = Pi2(Pi2State(ms(20), ms(15)))
    single.egress_hook(pkt(S), meta(ms(50)), Rng(1))
    assert single.state.latest_delay_sample == ms(50)


# ---------------------------------------------------------------- tail drop / registry


def test_taildrop_boundaries():
    assert taildrop_decide(0, 3000, pkt())
    assert taildrop_decide(1500, 3000, pkt())
    assert not taildrop_decide(1501, 3000, pkt())


def test_registry_keys():
    cfg = preset_scenario("I")
    for key in AQM_KEYS:
        if key == "ired-ghost":
            continue
        assert make_aqm(key, cfg, Rng(1)) is not None
    with pytest.raises(ConfigError, match="registered keys"):
        check_aqm_key("pie")


def test_depth_threshold_is_target_bdp():
    a = make_aqm("ired-depth", preset_scenario("I"))
    assert a.state.min_thsld == 300_000 and a.state.max_thsld == 600_000


def test_ired_ignores_notifications_at_egress():
    a = Ired(IredState.with_min(1))
    note = _note()
    assert note.role == PacketRole.NOTIFICATION
    assert a.egress_hook(note, meta(ms(100)), Rng(1)) == EgressVerdict.FORWARD
