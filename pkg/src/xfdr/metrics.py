"""Per-run statistics extracted from traces, and aggregation across
iterations with Student-t confidence intervals.

extract_metrics is a pure function of the trace event tuples and the
scenario; re-running it on a stored trace reproduces the report bit-exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .config import Scenario
from .frames import (EV_DELIVER, EV_ENQUEUE, EV_NODE_FAIL, EV_POWER,
                     EV_RX_OK, EV_TX_ABORT, EV_TX_END, EV_TX_RETX, EV_TX_START)


@dataclass
class MetricsReport:
    """Measured quantities of one simulation run."""
    avg_route_power_w: Optional[float]
    throughput_bps: float
    avg_hop_count: Optional[float]
    avg_e2e_delay_s: Optional[float]
    avg_mac_retransmissions: Optional[float]
    delivery_ratio: float
    delivered: int
    expected: int
    route_energy_j: float
    duration_s: float

    def __post_init__(self):
        for name in ("avg_route_power_w", "throughput_bps", "avg_hop_count",
                     "avg_e2e_delay_s", "avg_mac_retransmissions",
                     "delivery_ratio", "route_energy_j", "duration_s"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be non-negative")


def mean_ci(samples, level: float = 0.95) -> tuple[float, float]:
    """Student-t mean and confidence half-width.

    One sample yields an undefined half-width (NaN marker); identical samples
    yield zero.
    """
    xs = [float(x) for x in samples]
    if not xs:
        raise ValueError("mean_ci requires at least one sample")
    m = sum(xs) / len(xs)
    if len(xs) == 1:
        return m, float("nan")
    s = np.std(xs, ddof=1)
    if s == 0.0:
        return m, 0.0
    t = stats.t.ppf(0.5 + level / 2.0, len(xs) - 1)
    return m, float(t * s / math.sqrt(len(xs)))


def extract_metrics(trace, scenario: Scenario, end_time_us: Optional[int] = None) -> MetricsReport:
    """Compute the report of one run from its trace events.

    Delay is per delivered packet, application to application; undelivered
    packets are excluded from the delay average and reported through the
    delivery ratio.  Route power is the mean transmit power of the nodes
    that carried the flow: their transmit energy over their transmit-active
    time (or plain energy when the scenario selects the energy
    normalization), which isolates what power control changes from how long
    the transfer takes.
    """
    enq: dict[int, int] = {}
    dlv: dict[int, int] = {}
    rx_nodes: dict[int, set] = {}
    retx = 0
    data_tx_nodes: set[int] = set()
    src = dst = None
    t_last = 0
    for t, node, event, ftype, s, d, seq, power in trace:
        t_last = max(t_last, t)
        if event == EV_ENQUEUE:
            enq[seq] = t
            src, dst = s, d
        elif event == EV_DELIVER:
            dlv.setdefault(seq, t)
        elif event == EV_RX_OK and ftype == "DATA":
            rx_nodes.setdefault(seq, set()).add(node)
        elif event == EV_TX_RETX:
            retx += 1
            if ftype == "DATA":
                data_tx_nodes.add(node)
        elif event == EV_TX_START and ftype == "DATA":
            data_tx_nodes.add(node)

    expected = len(enq)
    delivered = len(dlv)
    flow_start = min(enq.values()) if enq else 0
    window_end = max(dlv.values()) if dlv else (end_time_us if end_time_us else t_last)

    route_nodes = set(data_tx_nodes)
    if src is not None:
        route_nodes.add(src)
    if dst is not None:
        route_nodes.add(dst)

    tx_energy, tx_time_us = _integrate_tx_energy(trace, route_nodes,
                                                  flow_start, window_end)
    duration_s = max(window_end - flow_start, 1) * 1e-6

    if delivered:
        delays = [(dlv[q] - enq[q]) * 1e-6 for q in dlv]
        avg_delay = sum(delays) / len(delays)
        hops = [len(rx_nodes.get(q, ())) for q in dlv]
        avg_hops = sum(hops) / len(hops)
        payload_bits = delivered * scenario.packet_size_bytes * 8
        throughput = payload_bits / duration_s
        avg_retx = retx / delivered
        if scenario.power_metric == "energy":
            power = tx_energy
        else:
            power = tx_energy / max(tx_time_us * 1e-6, 1e-9)
    else:
        avg_delay = None
        avg_hops = None
        throughput = 0.0
        avg_retx = None
        power = None

    return MetricsReport(
        avg_route_power_w=power,
        throughput_bps=throughput,
        avg_hop_count=avg_hops,
        avg_e2e_delay_s=avg_delay,
        avg_mac_retransmissions=avg_retx,
        delivery_ratio=delivered / expected if expected else 0.0,
        delivered=delivered,
        expected=expected,
        route_energy_j=tx_energy,
        duration_s=duration_s,
    )


def _integrate_tx_energy(trace, nodes: set, t0: int, t1: int) -> tuple[float, int]:
    """Re-integrate transmit power over time from trace events, restricted to
    the given nodes and window.  Returns (joules, transmit-active us)."""
    energy = 0.0
    busy_us = 0
    level: dict[int, tuple[int, float]] = {}
    for t, node, event, ftype, s, d, seq, power in trace:
        if node not in nodes:
            continue
        if event in (EV_TX_START, EV_TX_RETX):
            level[node] = (t, power)
        elif event == EV_POWER:
            if node in level:
                ts, p = level[node]
                energy += p * _overlap(ts, t, t0, t1)
                busy_us += _overlap(ts, t, t0, t1)
                level[node] = (t, power)
        elif event in (EV_TX_END, EV_TX_ABORT):
            if node in level:
                ts, p = level[node]
                energy += p * _overlap(ts, t, t0, t1)
                busy_us += _overlap(ts, t, t0, t1)
                del level[node]
    return energy * 1e-6, busy_us


def _overlap(a: int, b: int, t0: int, t1: int) -> int:
    return max(0, min(b, t1) - max(a, t0))


def reintegrate_node_energy(trace, scenario: Scenario, end_time_us: int) -> dict[int, float]:
    """Independent per-node energy accounting from the trace: transmit power
    integrated over transmit intervals plus receiver-on power over listening
    time.  Used to cross-check the engine's accumulators."""
    tx: dict[int, float] = {}
    tx_time: dict[int, int] = {}
    fail_at: dict[int, int] = {}
    level: dict[int, tuple[int, float]] = {}
    nodes = set()
    for t, node, event, ftype, s, d, seq, power in trace:
        nodes.add(node)
        if event in (EV_TX_START, EV_TX_RETX):
            level[node] = (t, power)
        elif event == EV_POWER and node in level:
            ts, p = level[node]
            tx[node] = tx.get(node, 0.0) + p * (t - ts) * 1e-6
            level[node] = (t, power)
        elif event in (EV_TX_END, EV_TX_ABORT) and node in level:
            ts, p = level[node]
            tx[node] = tx.get(node, 0.0) + p * (t - ts) * 1e-6
            tx_time[node] = tx_time.get(node, 0) + (t - ts)
            del level[node]
        elif event == EV_NODE_FAIL:
            fail_at[node] = t
    hd = scenario.protocol == "AODV"
    out = {}
    for node in range(scenario.nodes):
        span = fail_at.get(node, end_time_us)
        listen = span - (tx_time.get(node, 0) if hd else 0)
        out[node] = tx.get(node, 0.0) + scenario.p_rx_on_w * max(listen, 0) * 1e-6
    return out


def aggregate(reports: list[MetricsReport]) -> dict:
    """Across-iteration means and 95% confidence half-widths per field;
    iterations with undefined values are skipped field-wise."""
    fields = ("avg_route_power_w", "throughput_bps", "avg_hop_count",
              "avg_e2e_delay_s", "avg_mac_retransmissions", "delivery_ratio",
              "route_energy_j")
    out = {}
    for f in fields:
        xs = [getattr(r, f) for r in reports if getattr(r, f) is not None]
        if xs:
            out[f] = mean_ci(xs)
        else:
            out[f] = (float("nan"), float("nan"))
    out["n"] = len(reports)
    return out
