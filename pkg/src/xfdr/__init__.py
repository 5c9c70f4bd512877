"""Energy-aware routing for multi-hop full-duplex wireless networks.

Library layout:

- phy: physical-layer model (path loss, fading, RSI, SINR, power control)
- mac: MAC timing, power-excursion schedule, NAV and backoff rules
- frames: protocol frame records, wire codec, trace line format
- engine: deterministic discrete-event simulation core
- routing_xfdr: energy-cost routing with burst transfer and route maintenance
- routing_baseline: AODV and FD-AODV baselines
- metrics: per-run statistics, aggregation with confidence intervals
- experiment / cli: scenario files, sweeps, CSV and plot-data emission
"""

from .phy import (
    PhyConfig,
    LinkGeometry,
    received_power,
    residual_si_power,
    cumulative_interference,
    sinr,
    controlled_power,
    sample_fading_gain,
    link_outage_probability,
    decode_ok,
    carrier_sensed,
    SI_PROFILES,
)
from .mac import MacTiming, tx_power_at, nav_on_overheard, backoff_slots
from .config import Scenario, ScenarioError, parse_scenario
from .engine import Simulator, place_nodes
from .metrics import MetricsReport, mean_ci, extract_metrics
from .routing_xfdr import (
    EnergyCostParams,
    RouteEntry,
    link_energy_cost,
    route_cost,
    select_min_route,
    flood_candidates,
)

__all__ = [
    "PhyConfig", "LinkGeometry", "received_power", "residual_si_power",
    "cumulative_interference", "sinr", "controlled_power",
    "sample_fading_gain", "link_outage_probability", "decode_ok",
    "carrier_sensed", "SI_PROFILES",
    "MacTiming", "tx_power_at", "nav_on_overheard", "backoff_slots",
    "Scenario", "ScenarioError", "parse_scenario",
    "Simulator", "place_nodes",
    "MetricsReport", "mean_ci", "extract_metrics",
    "EnergyCostParams", "RouteEntry", "link_energy_cost", "route_cost",
    "select_min_route", "flood_candidates",
]

__version__ = "0.1.0"
