"""Physical-layer model: path loss, Rayleigh fading, residual self-interference,
cumulative interference, SINR, power control and link outage.

All powers are linear watts unless a name says dB. Functions are pure; the only
randomness is the caller-supplied RNG for fading draws.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Tuple, Union

PERFECT_SI = "perfect"


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class PhyConfig:
    """Physical-layer constants for one simulation.

    Defaults give a 240 m control/lock range and a -100 dBm noise floor over
    the 2 MHz channel (11 dB noise figure), so that random pairs in a 500 m
    square need one to four hops.
    """
    p_max: float = 0.19953            # W (23 dBm)
    alpha: float = 4.0                # path-loss exponent
    n0: float = 1.0e-13               # W noise power over the channel
    chi_si_db: float = 13.0           # SI-cancellation technique parameter, dB
    delta: float = 1.0e12             # interference suppression factor, linear
    rho_si: Union[float, str] = 0.9   # SI cancellation capability or "perfect"
    zeta_th: float = 6.0e-11          # W minimum required received signal strength
    c_hat: float = 2.0                # power-control constant
    sinr_decode_threshold: float = 10.0   # linear (10 dB)
    cs_threshold: float = 3.75e-12    # W carrier-sense threshold
    bandwidth_hz: float = 2.0e6

    def __post_init__(self):
        if self.p_max <= 0:
            raise ValueError("p_max must be positive")
        if self.alpha < 2:
            raise ValueError("alpha must be >= 2")
        if self.rho_si != PERFECT_SI and not (isinstance(self.rho_si, (int, float)) and self.rho_si >= 0):
            raise ValueError("rho_si must be >= 0 or 'perfect'")
        if self.delta < 1:
            raise ValueError("delta must be >= 1")
        if not (self.cs_threshold < self.zeta_th):
            raise ValueError("cs_threshold must be below zeta_th (carrier-sense range exceeds decode range)")
        for name in ("n0", "zeta_th", "cs_threshold"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and positive")

    @property
    def chi_si_linear(self) -> float:
        return db_to_linear(self.chi_si_db)


@dataclass(frozen=True)
class LinkGeometry:
    """Distance and one fading-gain realization for a link."""
    distance: float   # meters
    gain: float = 1.0  # |h|^2 realization

    def __post_init__(self):
        if self.gain < 0:
            raise ValueError("fading gain must be >= 0")


# An interference snapshot is a list of (tx_power, LinkGeometry) pairs for all
# concurrently active transmitters other than the intended sender and the
# receiver itself.
InterferenceSnapshot = Iterable[Tuple[float, LinkGeometry]]


def received_power(p_tx: float, link: LinkGeometry, alpha: float) -> float:
    """Received power p_tx * g * d^-alpha."""
    if link.distance <= 0:
        raise ValueError("self-link geometry")
    if p_tx < 0:
        raise ValueError("p_tx must be >= 0")
    return p_tx * link.gain * link.distance ** (-alpha)


def residual_si_power(p_tx: float, cfg: PhyConfig) -> float:
    """Residual self-interference power p^(1-rho) / (delta * chi^rho).

    rho = "perfect" means ideal cancellation (zero RSI); rho = 0 a constant
    reduction of the transmit power; rho = 1 a constant, noise-like floor.
    """
    if cfg.rho_si == PERFECT_SI:
        return 0.0
    if p_tx == 0.0 and cfg.rho_si < 1.0:
        return 0.0
    rho = float(cfg.rho_si)
    return p_tx ** (1.0 - rho) / (cfg.delta * cfg.chi_si_linear ** rho)


def cumulative_interference(snapshot: InterferenceSnapshot, alpha: float) -> float:
    """Sum of received powers over all concurrent interferers."""
    return sum(received_power(p, geom, alpha) for p, geom in snapshot)


def sinr(signal: float, rsi: float, interference: float, n0: float) -> float:
    """signal / (rsi + interference + n0).

    The rsi argument must be 0 unless the receiving node is itself
    transmitting at the same time.
    """
    if n0 <= 0:
        raise ValueError("n0 must be positive")
    return signal / (rsi + interference + n0)


def controlled_power(p_max: float, p_r: float, zeta_th: float, c_hat: float) -> float:
    """Power-control law min(p_max, p_max * p_r^-1 * zeta_th * c_hat).

    p_r is the power measured from a frame the peer sent at p_max.  The raw
    formula exceeds p_max for weak links; the result is clamped to (0, p_max].
    """
    if p_r <= 0:
        raise ValueError("no measured signal")
    p = p_max * zeta_th * c_hat / p_r
    return min(p, p_max)


def sample_fading_gain(rng) -> float:
    """One |h|^2 draw: exponential with unit mean (Rayleigh amplitude).

    Accepts anything with a .random() method returning U[0,1).
    """
    u = rng.random()
    return -math.log1p(-u)


def link_outage_probability(p_tx: float, d: float, alpha: float, theta: float,
                            rsi: float, interference: float, n0: float) -> float:
    """Exact outage of a unit-mean exponential gain against threshold theta.

    P_f = 1 - exp(-theta * (rsi + I + n0) * d^alpha / p_tx).
    """
    if d <= 0:
        raise ValueError("self-link geometry")
    if p_tx == 0:
        return 1.0
    x = theta * (rsi + interference + n0) * d ** alpha / p_tx
    return -math.expm1(-x)


def decode_ok(sinr_value: float, theta: float) -> bool:
    """SINR at or above the decode threshold (inclusive boundary)."""
    return sinr_value >= theta


def carrier_sensed(rx_power: float, cs_threshold: float) -> bool:
    """Energy at or above the carrier-sense threshold (inclusive boundary)."""
    return rx_power >= cs_threshold


# Named (delta, rho) pairs for the self-interference cancellation profiles
# used by the comparison experiments.  "high" leaves RSI well under the noise
# floor at any transmit power; "low" puts RSI a decade above it at p_max.
SI_PROFILES = {
    "high": (1.0e12, 0.9),
    "low": (4.0e10, 0.5),
}
