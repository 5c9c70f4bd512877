"""MAC timing: excursion schedule, NAV rule, backoff law."""
import pytest
from hypothesis import given
from hypothesis import strategies as st

from xfdr.mac import (MacTiming, airtime_us, backoff_slots, contention_window,
                      excursion_boundaries, integrate_schedule,
                      nav_on_overheard, tx_power_at)

T = MacTiming()
P_CTRL, P_MAX = 0.04, 0.2


class TestPowerSchedule:
    def test_mid_period_is_ctrl(self):
        assert tx_power_at(50, P_CTRL, P_MAX, T) == P_CTRL

    def test_final_window_is_max(self):
        assert tx_power_at(110, P_CTRL, P_MAX, T) == P_MAX

    def test_new_period_back_to_ctrl(self):
        assert tx_power_at(120, P_CTRL, P_MAX, T) == P_CTRL

    def test_boundary_of_excursion(self):
        assert tx_power_at(99, P_CTRL, P_MAX, T) == P_CTRL
        assert tx_power_at(100, P_CTRL, P_MAX, T) == P_MAX
        assert tx_power_at(119, P_CTRL, P_MAX, T) == P_MAX

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            tx_power_at(-1, P_CTRL, P_MAX, T)

    @given(k=st.integers(0, 50))
    def test_exactly_one_excursion_per_period(self, k):
        """Every eifs-length window during the data phase spends exactly
        `excursion` microseconds at p_max (schedule integration)."""
        t0 = k * T.eifs_us
        at_max = sum(1 for t in range(t0, t0 + T.eifs_us)
                     if tx_power_at(t, P_CTRL, P_MAX, T) == P_MAX)
        assert at_max == T.excursion_us

    @given(t0=st.integers(0, 5000), span=st.integers(1, 5000),
           anchor=st.integers(0, 1000))
    def test_integral_matches_sampling(self, t0, span, anchor):
        t0 = t0 + anchor
        t1 = t0 + span
        exact = integrate_schedule(t0, t1, anchor, P_CTRL, P_MAX, T)
        sampled = sum(tx_power_at(t - anchor, P_CTRL, P_MAX, T)
                      for t in range(t0, t1)) * 1e-6
        assert exact == pytest.approx(sampled, rel=1e-9, abs=1e-15)

    def test_boundaries_sorted_and_inside(self):
        bounds = excursion_boundaries(0, 1000, 0, T)
        times = [b[0] for b in bounds]
        assert times == sorted(times)
        assert all(0 < t < 1000 for t in times)


class TestNav:
    def test_decodable_copies_duration(self):
        assert nav_on_overheard(True, 5000, T) == 5000

    def test_undecodable_gets_eifs(self):
        assert nav_on_overheard(False, 5000, T) == 120

    def test_excursions_renew_nav_through_data_phase(self):
        # successive excursions arrive every eifs; each renews an eifs NAV,
        # so the NAV never lapses while the data phase lasts
        gap_between_excursions = T.eifs_us - T.excursion_us
        assert gap_between_excursions < nav_on_overheard(False, 0, T)


class TestBackoff:
    def test_window_doubles_to_cap(self):
        assert contention_window(0, T) == 16
        assert contention_window(1, T) == 32
        assert contention_window(4, T) == 256
        assert contention_window(10, T) == 1024
        assert contention_window(30, T) == 1024

    def test_slots_within_window(self):
        import random
        rng = random.Random(1)
        for retry in range(8):
            for _ in range(200):
                s = backoff_slots(rng, retry, T)
                assert 0 <= s < contention_window(retry, T)


class TestTimingInvariants:
    def test_excursion_shorter_than_eifs(self):
        with pytest.raises(ValueError):
            MacTiming(excursion_us=120)

    def test_sense_window_and_ramps_fit(self):
        with pytest.raises(ValueError):
            MacTiming(sense_window_us=18, ramp_us=2)

    def test_difs(self):
        assert T.difs_us == T.sifs_us + 2 * T.slot_us == 34


class TestAirtime:
    def test_data_frame(self):
        # 1056 bytes at 2 Mb/s
        assert airtime_us(1056, 2e6) == 4224

    def test_rounds_up(self):
        assert airtime_us(1, 3e6) == 3
