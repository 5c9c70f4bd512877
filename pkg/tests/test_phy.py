"""Physical-layer model: exact formula oracles, invariants, Monte Carlo
cross-check of the outage expression.
"""
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xfdr.phy import (
    PERFECT_SI, PhyConfig, LinkGeometry,
    received_power, residual_si_power, cumulative_interference, sinr,
    controlled_power, sample_fading_gain, link_outage_probability,
    decode_ok, carrier_sensed, db_to_linear,
)

REL = 1e-12


def cfg(**kw):
    return PhyConfig(**kw)


class TestReceivedPower:
    def test_unit_distance_and_gain(self):
        assert received_power(0.2, LinkGeometry(1.0, 1.0), 4.0) == pytest.approx(0.2, rel=REL)

    def test_hand_value_10m(self):
        # 0.2 * 10^-4
        assert received_power(0.2, LinkGeometry(10.0, 1.0), 4.0) == pytest.approx(2.0e-5, rel=REL)

    def test_deep_fade(self):
        assert received_power(0.2, LinkGeometry(10.0, 0.0), 4.0) == 0.0

    def test_self_link_rejected(self):
        with pytest.raises(ValueError, match="self-link"):
            received_power(0.2, LinkGeometry(0.0, 1.0), 4.0)

    @given(p=st.floats(1e-6, 1.0), g=st.floats(0.0, 10.0),
           d1=st.floats(1.0, 500.0), d2=st.floats(1.0, 500.0))
    def test_monotone_in_distance_linear_in_power(self, p, g, d1, d2):
        lo, hi = sorted((d1, d2))
        assert received_power(p, LinkGeometry(hi, g), 4.0) <= \
            received_power(p, LinkGeometry(lo, g), 4.0) + 1e-30
        assert received_power(2 * p, LinkGeometry(d1, g), 4.0) == \
            pytest.approx(2 * received_power(p, LinkGeometry(d1, g), 4.0), rel=1e-9)


class TestResidualSi:
    def test_perfect_cancellation_is_zero(self):
        c = cfg(rho_si=PERFECT_SI)
        assert residual_si_power(0.2, c) == 0.0

    def test_rho_zero_constant_reduction(self):
        # p / delta with chi^0 = 1
        c = cfg(rho_si=0.0, delta=100.0)
        assert residual_si_power(0.2, c) == pytest.approx(0.002, rel=REL)

    def test_rho_one_constant_power(self):
        # 1 / (10 * 10^1.3) independent of p_tx
        c = cfg(rho_si=1.0, delta=10.0, chi_si_db=13.0)
        expect = 1.0 / (10.0 * 10.0 ** 1.3)
        assert residual_si_power(0.2, c) == pytest.approx(expect, rel=REL)
        assert residual_si_power(0.001, c) == pytest.approx(expect, rel=REL)
        assert expect == pytest.approx(5.012e-3, rel=1e-3)

    def test_chi_conversion(self):
        assert db_to_linear(13.0) == pytest.approx(19.9526, rel=1e-4)

    @given(p=st.floats(1e-9, 1.0))
    def test_three_regimes_exact(self, p):
        assert residual_si_power(p, cfg(rho_si=PERFECT_SI)) == 0.0
        assert residual_si_power(p, cfg(rho_si=0.0, delta=50.0)) == p / 50.0
        c1 = cfg(rho_si=1.0, delta=50.0)
        assert residual_si_power(p, c1) == residual_si_power(2 * p, c1)


class TestCumulativeInterference:
    def test_empty_sum(self):
        assert cumulative_interference([], 4.0) == 0.0

    def test_single_entry_reduces_to_received_power(self):
        snap = [(0.2, LinkGeometry(10.0, 1.0))]
        assert cumulative_interference(snap, 4.0) == pytest.approx(2.0e-5, rel=REL)

    def test_two_entry_hand_sum(self):
        snap = [(0.2, LinkGeometry(10.0, 1.0)), (0.05, LinkGeometry(5.0, 1.0))]
        assert cumulative_interference(snap, 4.0) == pytest.approx(1.0e-4, rel=REL)


class TestSinr:
    def test_noise_only(self):
        assert sinr(1e-6, 0.0, 0.0, 1e-9) == pytest.approx(1000.0, rel=REL)

    def test_hand_value(self):
        assert sinr(1e-6, 1e-7, 1e-7, 1e-9) == pytest.approx(1e-6 / 2.01e-7, rel=REL)

    def test_half_duplex_rsi_zero(self):
        assert sinr(1e-6, 0.0, 5e-8, 1e-9) == pytest.approx(1e-6 / 5.1e-8, rel=REL)

    @given(s=st.floats(1e-9, 1e-3), a=st.floats(0, 1e-6), b=st.floats(1e-12, 1e-6))
    def test_strictly_decreasing_in_denominator_terms(self, s, a, b):
        base = sinr(s, a, 0.0, b)
        assert sinr(s, a + 1e-9, 0.0, b) < base
        assert sinr(s, a, 1e-9, b) < base
        assert sinr(s, a, 0.0, b + 1e-9) < base


class TestControlledPower:
    def test_factors_cancel_at_target(self):
        c = cfg()
        p_r = c.zeta_th * c.c_hat
        assert controlled_power(c.p_max, p_r, c.zeta_th, c.c_hat) == c.p_max

    def test_hand_value(self):
        # 0.2 * 1e9 * 1e-10 * 2 = 0.04
        assert controlled_power(0.2, 1e-9, 1e-10, 2.0) == pytest.approx(0.04, rel=REL)

    def test_clamped_to_p_max(self):
        # raw formula would give 0.5
        assert controlled_power(0.2, 4e-11, 1e-10, 1.0) == 0.2

    def test_zero_measurement_rejected(self):
        with pytest.raises(ValueError, match="no measured signal"):
            controlled_power(0.2, 0.0, 1e-10, 2.0)

    @given(p_r=st.floats(1e-16, 1e-3))
    def test_output_in_range(self, p_r):
        p = controlled_power(0.2, p_r, 1.25e-10, 2.0)
        assert 0.0 < p <= 0.2


class TestFading:
    def test_deterministic_under_seed(self):
        a = [sample_fading_gain(random.Random(7)) for _ in range(5)]
        b = [sample_fading_gain(random.Random(7)) for _ in range(5)]
        assert a == b

    def test_non_negative(self):
        rng = random.Random(3)
        assert all(sample_fading_gain(rng) >= 0 for _ in range(1000))

    def test_unit_mean(self):
        rng = np.random.default_rng(12345)
        n = 10 ** 6
        total = 0.0
        for _ in range(n):
            total += sample_fading_gain(rng)
        assert total / n == pytest.approx(1.0, abs=0.01)


class TestOutage:
    def test_zero_threshold(self):
        assert link_outage_probability(0.2, 10.0, 4.0, 0.0, 0.0, 0.0, 1e-9) == 0.0

    def test_noiseless_limit(self):
        p = link_outage_probability(0.2, 10.0, 4.0, 10.0, 0.0, 0.0, 1e-30)
        assert p < 1e-20

    def test_hand_value(self):
        # 1 - exp(-10 * 1e-9 * 1e4 / 0.2) = 1 - exp(-5e-4)
        p = link_outage_probability(0.2, 10.0, 4.0, 10.0, 0.0, 0.0, 1e-9)
        assert p == pytest.approx(-math.expm1(-5e-4), rel=REL)
        assert p == pytest.approx(4.99875e-4, rel=1e-4)

    def test_zero_power(self):
        assert link_outage_probability(0.0, 10.0, 4.0, 10.0, 0.0, 0.0, 1e-9) == 1.0

    @given(p=st.floats(1e-6, 1.0), d=st.floats(1.0, 400.0),
           theta=st.floats(0.0, 100.0), noise=st.floats(1e-16, 1e-6))
    def test_is_probability(self, p, d, theta, noise):
        x = link_outage_probability(p, d, 4.0, theta, 0.0, 0.0, noise)
        assert 0.0 <= x <= 1.0

    def test_monte_carlo_agreement(self):
        """The closed form matches Monte Carlo over sample_fading_gain within
        3 standard errors at a grid of parameter points."""
        rng = np.random.default_rng(2024)
        n = 10 ** 6
        grid = [
            (0.2, 50.0, 4.0, 10.0, 0.0, 0.0, 1e-9),
            (0.2, 100.0, 4.0, 10.0, 0.0, 0.0, 1e-9),
            (0.2, 150.0, 4.0, 10.0, 0.0, 0.0, 1e-9),
            (0.2, 200.0, 4.0, 10.0, 1e-11, 0.0, 1e-9),
            (0.1, 150.0, 4.0, 10.0, 0.0, 1e-10, 1e-9),
            (0.05, 120.0, 4.0, 10.0, 1e-10, 1e-10, 1e-9),
            (0.01, 80.0, 4.0, 5.0, 0.0, 0.0, 1e-8),
            (0.2, 250.0, 4.0, 10.0, 0.0, 0.0, 1e-9),
            (0.2, 300.0, 3.0, 10.0, 0.0, 0.0, 1e-9),
            (0.02, 60.0, 4.0, 20.0, 1e-12, 1e-11, 5e-10),
        ]
        for p_tx, d, alpha, theta, rsi, interf, n0 in grid:
            analytic = link_outage_probability(p_tx, d, alpha, theta, rsi, interf, n0)
            thresh = theta * (rsi + interf + n0) * d ** alpha / p_tx
            fails = 0
            gains = np.empty(n)
            for i in range(n):
                gains[i] = sample_fading_gain(rng)
            fails = int((gains < thresh).sum())
            est = fails / n
            se = math.sqrt(max(analytic * (1 - analytic), 1e-12) / n)
            assert abs(est - analytic) <= 3 * se + 1e-9, (p_tx, d, est, analytic)


class TestDecisions:
    def test_decode_boundary_inclusive(self):
        assert decode_ok(10.0, 10.0)
        assert not decode_ok(9.999999, 10.0)

    def test_carrier_sense_boundary_inclusive(self):
        assert carrier_sensed(1e-10, 1e-10)
        assert not carrier_sensed(9e-11, 1e-10)


class TestConfigInvariants:
    def test_cs_below_zeta(self):
        with pytest.raises(ValueError):
            cfg(cs_threshold=1e-9, zeta_th=1e-10)

    def test_alpha_floor(self):
        with pytest.raises(ValueError):
            cfg(alpha=1.5)

    def test_delta_floor(self):
        with pytest.raises(ValueError):
            cfg(delta=0.5)

    def test_defaults_valid(self):
        c = cfg()
        assert c.p_max > 0 and c.cs_threshold < c.zeta_th
