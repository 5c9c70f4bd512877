"""Scenario configuration: defaults, validation, and the key-value scenario
file format used by the command line tools.

A scenario file is plain text, one `key = value` per line, `#` comments,
with dotted keys for the phy/mac/routing/traffic/fading/failure sections.
Unknown keys are rejected with the offending key and line number.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace
from typing import Optional

from .mac import MacTiming
from .phy import PhyConfig, SI_PROFILES

PROTOCOLS = ("XFDR", "AODV", "FDAODV")
FAILURE_POSITIONS = ("after-source", "middle", "before-destination")


class ScenarioError(ValueError):
    """Invalid scenario file or scenario invariant violation."""


@dataclass(frozen=True)
class Scenario:
    """Full experiment configuration; seed fixes all randomness."""
    protocol: str = "XFDR"
    nodes: int = 25
    seed: int = 1
    region_side_m: float = 500.0
    iterations: int = 10
    max_sim_time_s: float = 60.0
    data_rate_bps: float = 2.0e6
    p_rx_on_w: float = 0.02
    buffer_bytes: int = 10240

    si_profile: str = "high"
    phy: PhyConfig = field(default_factory=PhyConfig)
    timing: MacTiming = field(default_factory=MacTiming)

    # routing
    rreq_collect_window_us: int = 12000
    r_ack_retries: int = 3
    data_retry_rounds: int = 3
    literal_chi: bool = False

    # traffic
    file_size_bytes: int = 102400
    packet_size_bytes: int = 1024
    flow_start_us: int = 0
    min_pair_distance_m: float = 0.0

    # fading
    fading_coherence_us: int = 100_000
    fading_enabled: bool = True

    # failure injection
    failure_position: Optional[str] = None
    failure_node: Optional[int] = None
    failure_time_us: Optional[int] = None

    # metrics
    power_metric: str = "mean_tx_power"   # or "energy"

    # deterministic fault-injection hook for conformance tests:
    # tuples (prev, next_hop, seq, count) force the first `count` DATA
    # transmissions of `seq` on that link to fail at the receiver.
    loss_script: tuple = ()

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ScenarioError(f"unknown protocol {self.protocol!r}")
        if self.nodes < 2:
            raise ScenarioError("N >= 2 required")
        if self.si_profile not in SI_PROFILES:
            raise ScenarioError(f"unknown si_profile {self.si_profile!r}")
        if self.file_size_bytes < self.packet_size_bytes:
            raise ScenarioError("file must hold at least one packet")
        if self.failure_position is not None and self.failure_position not in FAILURE_POSITIONS:
            raise ScenarioError(f"unknown failure position {self.failure_position!r}")
        if (self.failure_position or self.failure_node is not None) and self.failure_time_us is None:
            raise ScenarioError("failure requires failure.time_us")
        if self.power_metric not in ("mean_tx_power", "energy"):
            raise ScenarioError(f"unknown power_metric {self.power_metric!r}")

    @property
    def packet_count(self) -> int:
        return -(-self.file_size_bytes // self.packet_size_bytes)

    @property
    def beta_packets(self) -> int:
        """Buffer size in packets; 1 when the buffer cannot hold a packet."""
        return max(1, self.buffer_bytes // self.packet_size_bytes)

    def canonical(self) -> str:
        parts = []
        for f in fields(self):
            parts.append(f"{f.name}={getattr(self, f.name)!r}")
        return ";".join(parts)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def apply_si_profile(scn: Scenario) -> Scenario:
    """Resolve the named SI profile into concrete (delta, rho) values."""
    delta, rho = SI_PROFILES[scn.si_profile]
    return replace(scn, phy=replace(scn.phy, delta=delta, rho_si=rho))


_TOP_KEYS = {
    "protocol": str, "nodes": int, "seed": int, "region_side_m": float,
    "iterations": int, "max_sim_time_s": float, "data_rate_bps": float,
    "p_rx_on_w": float, "buffer_bytes": int, "si_profile": str,
    "rreq_collect_window_us": int, "r_ack_retries": int,
    "data_retry_rounds": int, "literal_chi": bool,
    "file_size_bytes": int, "packet_size_bytes": int, "flow_start_us": int,
    "min_pair_distance_m": float, "fading_coherence_us": int,
    "fading_enabled": bool, "power_metric": str,
}
_PHY_KEYS = {
    "p_max": float, "alpha": float, "n0": float, "chi_si_db": float,
    "delta": float, "rho_si": "rho", "zeta_th": float, "c_hat": float,
    "sinr_decode_threshold_db": "db", "cs_threshold": float,
    "bandwidth_hz": float,
}
_MAC_KEYS = {
    "sifs_us": int, "eifs_us": int, "excursion_us": int, "sense_window_us": int,
    "ramp_us": int, "slot_us": int, "cw_min": int, "cw_max": int,
    "retry_limit": int,
}
_FAILURE_KEYS = {"position": str, "node": int, "time_us": int}


def _parse_bool(s: str) -> bool:
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _convert(conv, raw: str):
    if conv is bool:
        return _parse_bool(raw)
    if conv == "rho":
        return raw if raw == "perfect" else float(raw)
    if conv == "db":
        return 10.0 ** (float(raw) / 10.0)
    return conv(raw)


def parse_scenario(path: str) -> Scenario:
    """Load and validate a scenario file, applying documented defaults.

    Raises ScenarioError naming the key and line for missing/unknown keys and
    invariant violations.
    """
    top: dict = {}
    phy_over: dict = {}
    mac_over: dict = {}
    fail_over: dict = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ScenarioError(f"{path}:{lineno}: expected key = value, got {line!r}")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            try:
                if key.startswith("phy."):
                    sub = key[4:]
                    if sub not in _PHY_KEYS:
                        raise ScenarioError(f"{path}:{lineno}: unknown key {key!r}")
                    name = "sinr_decode_threshold" if sub == "sinr_decode_threshold_db" else sub
                    phy_over[name] = _convert(_PHY_KEYS[sub], val)
                elif key.startswith("mac."):
                    sub = key[4:]
                    if sub not in _MAC_KEYS:
                        raise ScenarioError(f"{path}:{lineno}: unknown key {key!r}")
                    mac_over[sub] = _convert(_MAC_KEYS[sub], val)
                elif key.startswith("failure."):
                    sub = key[8:]
                    if sub not in _FAILURE_KEYS:
                        raise ScenarioError(f"{path}:{lineno}: unknown key {key!r}")
                    fail_over[sub] = _convert(_FAILURE_KEYS[sub], val)
                elif key in _TOP_KEYS:
                    top[key] = _convert(_TOP_KEYS[key], val)
                else:
                    raise ScenarioError(f"{path}:{lineno}: unknown key {key!r}")
            except ScenarioError:
                raise
            except ValueError as e:
                raise ScenarioError(f"{path}:{lineno}: bad value for {key!r}: {e}") from e

    try:
        scn = Scenario(
            **top,
            phy=PhyConfig(**phy_over) if phy_over else PhyConfig(),
            timing=MacTiming(**mac_over) if mac_over else MacTiming(),
            failure_position=fail_over.get("position"),
            failure_node=fail_over.get("node"),
            failure_time_us=fail_over.get("time_us"),
        )
    except ScenarioError:
        raise
    except ValueError as e:
        raise ScenarioError(f"{path}: {e}") from e
    # The named profile supplies (delta, rho) unless the file pinned them.
    if "delta" not in phy_over and "rho_si" not in phy_over:
        scn = apply_si_profile(scn)
    return scn
