"""MAC-layer timing, the periodic power-excursion schedule, NAV rules and
binary exponential backoff.

Times are integer microseconds throughout the simulator; the excursion
schedule treats the 2 us power ramps as instantaneous level switches (the
ramp time is only checked against the timing budget).
"""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class MacTiming:
    sifs_us: int = 16
    eifs_us: int = 120          # also the excursion period
    excursion_us: int = 20      # time at p_max per period, end-of-period
    sense_window_us: int = 15
    ramp_us: int = 2
    slot_us: int = 9
    cw_min: int = 16
    cw_max: int = 1024
    retry_limit: int = 7

    def __post_init__(self):
        if not self.excursion_us < self.eifs_us:
            raise ValueError("excursion must be shorter than eifs")
        if not self.sense_window_us + 2 * self.ramp_us <= self.excursion_us:
            raise ValueError("sense window plus ramps must fit in the excursion")
        if self.cw_min < 1 or self.cw_max < self.cw_min:
            raise ValueError("invalid contention window bounds")

    @property
    def difs_us(self) -> int:
        return self.sifs_us + 2 * self.slot_us


def airtime_us(size_bytes: int, data_rate_bps: float) -> int:
    """Whole-microsecond airtime of a frame of the given size."""
    return int(math.ceil(size_bytes * 8 * 1e6 / data_rate_bps))


def tx_power_at(t_since_data_start_us: int, p_ctrl: float, p_max: float,
                timing: MacTiming) -> float:
    """Transmit power of a data-phase transmitter at time t after phase start.

    Within each eifs-length period the power is p_max during the final
    `excursion` microseconds and p_ctrl otherwise.
    """
    if t_since_data_start_us < 0:
        raise ValueError("t must be >= 0")
    phase = t_since_data_start_us % timing.eifs_us
    if phase >= timing.eifs_us - timing.excursion_us:
        return p_max
    return p_ctrl


def excursion_boundaries(t0_us: int, t1_us: int, anchor_us: int,
                         timing: MacTiming) -> list[tuple[int, bool]]:
    """Power switch times within [t0, t1) for a schedule anchored at anchor_us.

    Returns (time, at_p_max) pairs, one per level change, in time order.
    The transmitter is assumed to already be at tx_power_at(t0 - anchor).
    """
    period = timing.eifs_us
    up_off = period - timing.excursion_us   # offset within period of switch to p_max
    out: list[tuple[int, bool]] = []
    k = (t0_us - anchor_us) // period
    while True:
        up = anchor_us + k * period + up_off
        down = anchor_us + (k + 1) * period
        if up >= t1_us and down >= t1_us and up > t0_us:
            break
        if t0_us < up < t1_us:
            out.append((up, True))
        if t0_us < down < t1_us:
            out.append((down, False))
        k += 1
        if down >= t1_us:
            break
    return out


def integrate_schedule(t0_us: int, t1_us: int, anchor_us: int, p_ctrl: float,
                       p_max: float, timing: MacTiming) -> float:
    """Exact energy in joules spent over [t0, t1) under the excursion schedule."""
    if t1_us <= t0_us:
        return 0.0
    energy = 0.0
    t = t0_us
    for when, at_max in excursion_boundaries(t0_us, t1_us, anchor_us, timing):
        level = p_max if not at_max else p_ctrl  # level before the switch
        energy += level * (when - t) * 1e-6
        t = when
    last_level = tx_power_at(t - anchor_us, p_ctrl, p_max, timing)
    energy += last_level * (t1_us - t) * 1e-6
    return energy


def nav_on_overheard(frame_decodable: bool, duration_field_us: int,
                     timing: MacTiming) -> int:
    """NAV to set after overhearing activity on the channel.

    Decoded frames donate their duration field; energy that could not be
    decoded defers for EIFS (renewed whenever energy is sensed again, which
    the excursion schedule guarantees at least once per EIFS).
    """
    if frame_decodable:
        return duration_field_us
    return timing.eifs_us


def contention_window(retry_count: int, timing: MacTiming) -> int:
    """Binary exponential contention window, doubling up to cw_max."""
    return min(timing.cw_min << retry_count, timing.cw_max)


def backoff_slots(rng, retry_count: int, timing: MacTiming) -> int:
    """Uniform draw of backoff slots in [0, cw) for the given retry count."""
    cw = contention_window(retry_count, timing)
    return rng.randrange(cw)
