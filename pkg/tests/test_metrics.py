import numpy as np
import pytest
from hypothesis import given, strategies as st

from coexcpm.macsim import (COLLISION, IDLE, SUCCESS, ChannelTimeline,
                            Interval, Network, PriorityClass, default_spec)
from coexcpm.metrics import (DelayTracker, MetricsState, jain_fairness,
                             step_metrics, update_delays, violation_rate)


def tl(intervals, continued=False):
    return ChannelTimeline(list(intervals), continued_head=continued)


def success(start, end, tx=0):
    return Interval(start, end, SUCCESS, (tx,))


def idle(start, end):
    return Interval(start, end, IDLE)


class TestUpdateDelays:
    def test_gap_between_consecutive_successes(self):
        t = DelayTracker(0)
        update_delays(t, tl([success(0, 2000), idle(2000, 12000),
                             success(12000, 14000)]))
        assert t.delay_samples_us == [10_000]

    def test_single_success_yields_no_sample(self):
        t = DelayTracker(0)
        new = update_delays(t, tl([idle(0, 25), success(25, 2025)]))
        assert new == [] and t.delay_samples_us == []

    def test_smoothed_is_mean_of_last_five(self):
        t = DelayTracker(0)
        for ms in [1, 2, 3, 4, 5, 6]:
            t._push(ms * 1000)
        assert t.smoothed_us == pytest.approx(4000.0)

    def test_smoothed_with_fewer_than_window(self):
        t = DelayTracker(0)
        t._push(3000)
        t._push(1000)
        assert t.smoothed_us == pytest.approx(2000.0)

    def test_split_occupancy_is_not_a_new_success(self):
        t = DelayTracker(0)
        update_delays(t, tl([idle(0, 25), success(25, 2500)]))
        update_delays(t, tl([success(2500, 4025)], continued=True))
        assert t.delay_samples_us == []
        assert t.last_success_end_us == 4025

    def test_other_nodes_successes_ignored(self):
        t = DelayTracker(0)
        update_delays(t, tl([success(0, 100, tx=1), idle(100, 200),
                             success(200, 300, tx=0), idle(300, 400),
                             success(400, 500, tx=1), idle(500, 600),
                             success(600, 700, tx=0)]))
        assert t.delay_samples_us == [300]

    def test_matches_brute_force_on_random_streams(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            # random alternating idle/success timeline for node 0 or 1
            t_now = 0
            intervals = []
            for _ in range(int(rng.integers(1, 30))):
                gap = int(rng.integers(1, 500))
                intervals.append(idle(t_now, t_now + gap))
                t_now += gap
                length = int(rng.integers(1, 400))
                owner = int(rng.integers(0, 2))
                intervals.append(success(t_now, t_now + length, tx=owner))
                t_now += length
            tracker = DelayTracker(0)
            update_delays(tracker, tl(intervals))
            mine = [iv for iv in intervals
                    if iv.kind == SUCCESS and iv.tx_ids == (0,)]
            expected = [b.start_us - a.end_us for a, b in zip(mine, mine[1:])]
            assert tracker.delay_samples_us == expected
            assert tracker.cumulative_delay_us == sum(expected)
            if expected:
                w = expected[-5:]
                assert tracker.smoothed_us == pytest.approx(sum(w) / len(w))


class TestJainFairness:
    def test_symmetric_equal_airtime(self):
        assert jain_fairness(0.4, 0.4) == pytest.approx(1.0)

    def test_single_class_extreme(self):
        assert jain_fairness(0.5, 0.0) == pytest.approx(0.5)

    def test_hand_case(self):
        assert jain_fairness(0.6, 0.2) == pytest.approx(0.8)

    def test_both_zero_convention(self):
        assert jain_fairness(0.0, 0.0) == 1.0

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            jain_fairness(-0.1, 0.2)

    @given(st.floats(0, 1e6), st.floats(0, 1e6))
    def test_range_and_symmetry(self, a, b):
        j = jain_fairness(a, b)
        assert 0.5 - 1e-12 <= j <= 1.0 + 1e-12
        assert j == pytest.approx(jain_fairness(b, a))

    @given(st.floats(1e-6, 1e3), st.floats(1e-6, 1e3),
           st.floats(1e-3, 1e3))
    def test_scale_invariance(self, a, b, c):
        assert jain_fairness(a, b) == pytest.approx(jain_fairness(c * a, c * b))

    def test_identical_inputs_always_one(self):
        for x in (0.1, 0.5, 2.0):
            assert jain_fairness(x, x) == pytest.approx(1.0)


class TestViolationRate:
    def test_counting(self):
        assert violation_rate([True, True, False, False, False]) == pytest.approx(0.4)

    def test_all_false(self):
        assert violation_rate([False] * 4 ) == 0.0

    def test_all_true(self):
        assert violation_rate([True] * 3) == 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            violation_rate([])


class TestCsvInterface:
    def test_fixed_column_names_and_order(self):
        from coexcpm.metrics import (STEP_METRICS_COLUMNS, StepMetrics,
                                     step_metrics_row)
        assert STEP_METRICS_COLUMNS == ("jfi", "d_bar_pc1_ms",
                                        "avg_delay_pc1_ms", "collision_rate",
                                        "busy_airtime_ratio", "violation")
        m = StepMetrics(jfi=0.9, d_bar_pc1_ms=1.5, avg_delay_pc1_ms=1.2,
                        collision_rate=0.25, busy_airtime_ratio=0.8,
                        airtime_pc1=0.4, airtime_pc3=0.4, violation=True)
        assert step_metrics_row(m) == (0.9, 1.5, 1.2, 0.25, 0.8, 1)


def pc1_pc3_state():
    specs = [default_spec(0, Network.NRU, PriorityClass.PC1),
             default_spec(1, Network.WIFI, PriorityClass.PC3)]
    return MetricsState(specs)


class TestStepMetrics:
    def test_fully_idle_step(self):
        m = step_metrics(tl([idle(0, 2500)]), pc1_pc3_state(), d_th_ms=2.0)
        assert m.busy_airtime_ratio == 0.0
        assert m.collision_rate == 0.0
        assert m.jfi == 1.0  # both-zero airtime convention
        assert not m.violation

    def test_busy_ratio_hand_case(self):
        intervals = [idle(0, 250), success(250, 2250, tx=0), idle(2250, 2500)]
        m = step_metrics(tl(intervals), pc1_pc3_state(), d_th_ms=2.0)
        assert m.busy_airtime_ratio == pytest.approx(0.8)

    def test_collision_rate_counts_attempts(self):
        intervals = [idle(0, 100),
                     Interval(100, 600, COLLISION, (0, 1)),
                     idle(600, 700), success(700, 1200, tx=0),
                     idle(1200, 2500)]
        m = step_metrics(tl(intervals), pc1_pc3_state(), d_th_ms=2.0)
        assert m.collision_rate == pytest.approx(0.5)

    def test_continued_interval_not_an_attempt(self):
        state = pc1_pc3_state()
        step_metrics(tl([idle(0, 100), success(100, 2500, tx=0)]), state, 2.0)
        m = step_metrics(tl([success(2500, 4000, tx=0), idle(4000, 5000)],
                            continued=True), state, 2.0)
        assert m.collision_rate == 0.0
        # windowed airtime covers both pieces of the occupancy
        assert m.airtime_pc1 == pytest.approx(3900 / 5000)

    def test_busy_ratio_complements_idle(self):
        rng = np.random.default_rng(3)
        state = pc1_pc3_state()
        t_now = 0
        intervals = []
        idle_total = 0
        for _ in range(8):
            g = int(rng.integers(1, 300))
            intervals.append(idle(t_now, t_now + g))
            idle_total += g
            t_now += g
            ln = int(rng.integers(1, 300))
            intervals.append(success(t_now, t_now + ln, tx=int(rng.integers(0, 2))))
            t_now += ln
        m = step_metrics(tl(intervals), state, 2.0)
        assert m.busy_airtime_ratio == pytest.approx(1 - idle_total / t_now)
        assert 0.0 <= m.busy_airtime_ratio <= 1.0

    def test_violation_flag_tracks_threshold(self):
        state = pc1_pc3_state()
        # one 2 ms gap between successes of node 0 -> smoothed = 2 ms
        step_metrics(tl([idle(0, 100), success(100, 600, tx=0),
                         idle(600, 2600), success(2600, 3100, tx=0)]),
                     state, d_th_ms=1.5)
        m = step_metrics(tl([idle(3100, 5000)]), state, d_th_ms=1.5)
        assert m.d_bar_pc1_ms == pytest.approx(2.0)
        assert m.violation

    def test_airtime_window_slides(self):
        state = MetricsState([default_spec(0, Network.NRU, PriorityClass.PC1),
                              default_spec(1, Network.WIFI, PriorityClass.PC3)],
                             airtime_window_us=10_000)
        step_metrics(tl([success(0, 4000, tx=1), idle(4000, 5000)]), state, 2.0)
        m = step_metrics(tl([idle(5000, 15_000)]), state, 2.0)
        # window is [5000, 15000]: the old PC3 success has slid out
        assert m.airtime_pc3 == 0.0
        assert m.jfi == 1.0
