"""Experiment orchestration: single runs, sweep matrices over node count,
protocol, SI profile and failure position, CSV emission and plot-data tables.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

from .config import Scenario, ScenarioError, apply_si_profile, PROTOCOLS, FAILURE_POSITIONS
from .engine import Simulator
from .metrics import MetricsReport, aggregate, extract_metrics

CSV_HEADER = ("protocol,nodes,si_profile,failure,iteration,power_mw,"
              "throughput_bps,hops,delay_ms,retx,delivery_ratio")


@dataclass(frozen=True)
class ExperimentMatrix:
    """Axes of a comparison sweep."""
    node_counts: tuple = (5, 10, 15, 20, 25, 30)
    protocols: tuple = ("XFDR", "AODV", "FDAODV")
    si_profiles: tuple = ("high", "low")
    failure_positions: tuple = ()     # empty: failure-free
    iterations: int = 10
    seed: int = 1
    base: Scenario = field(default_factory=Scenario)

    def __post_init__(self):
        if not (self.node_counts and self.protocols and self.si_profiles):
            raise ScenarioError("matrix axes must be non-empty")
        for p in self.protocols:
            if p not in PROTOCOLS:
                raise ScenarioError(f"unknown protocol {p!r}")
        for f in self.failure_positions:
            if f not in FAILURE_POSITIONS:
                raise ScenarioError(f"unknown failure position {f!r}")

    def cells(self):
        fails = self.failure_positions or (None,)
        for nodes in self.node_counts:
            for proto in self.protocols:
                for prof in self.si_profiles:
                    for fp in fails:
                        yield nodes, proto, prof, fp

    def scenario_for(self, nodes: int, protocol: str, profile: str,
                     failure: str | None) -> Scenario:
        scn = replace(self.base, nodes=nodes, protocol=protocol,
                      si_profile=profile, seed=self.seed,
                      iterations=self.iterations)
        if failure is not None:
            # fault injection needs a multi-hop route for every protocol
            scn = replace(scn, failure_position=failure,
                          failure_time_us=scn.flow_start_us + 120_000,
                          min_pair_distance_m=max(scn.min_pair_distance_m, 320.0))
        return apply_si_profile(scn)


def run_iteration(scn: Scenario, iteration: int) -> tuple[MetricsReport, Simulator]:
    sim = Simulator(scn, iteration)
    sim.run()
    report = extract_metrics(sim.trace, scn, sim.end_time)
    return report, sim


def _worker(args):
    scn, iteration = args
    sim = Simulator(scn, iteration).run()
    report = extract_metrics(sim.trace, scn, sim.end_time)
    return iteration, report, sim.aborted, sim.scenario_error


def run_cell(scn: Scenario, jobs: int = 1):
    """All iterations of one sweep cell.  Returns (reports, flags) where
    flags marks iterations that aborted at max-sim-time or could not resolve
    their failure tag."""
    work = [(scn, it) for it in range(scn.iterations)]
    results = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_worker, work))
    else:
        results = [_worker(w) for w in work]
    results.sort(key=lambda r: r[0])
    reports = [r[1] for r in results]
    flags = [bool(r[2]) or r[3] is not None for r in results]
    return reports, flags


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)        # per-iteration CSV rows
    agg: dict = field(default_factory=dict)         # cell -> aggregate dict
    partial: bool = False


def run_matrix(matrix: ExperimentMatrix, jobs: int = 1,
               progress=None) -> SweepResult:
    out = SweepResult()
    for nodes, proto, prof, fp in matrix.cells():
        scn = matrix.scenario_for(nodes, proto, prof, fp)
        reports, flags = run_cell(scn, jobs=jobs)
        key = (proto, nodes, prof, fp or "-")
        valid = [r for r, bad in zip(reports, flags) if not bad]
        out.agg[key] = aggregate(valid if valid else reports)
        if any(flags):
            out.partial = True
        for it, (r, bad) in enumerate(zip(reports, flags)):
            out.rows.append(_csv_row(key, str(it) + ("!" if bad else ""), r))
        if progress:
            progress(key, out.agg[key])
    return out


def _fmt(x, scale=1.0):
    if x is None:
        return "nan"
    v = x * scale
    return f"{v:.6g}"


def _csv_row(key, iteration, r: MetricsReport) -> str:
    proto, nodes, prof, fp = key
    return ",".join([
        proto, str(nodes), prof, fp, iteration,
        _fmt(r.avg_route_power_w, 1e3),
        _fmt(r.throughput_bps),
        _fmt(r.avg_hop_count),
        _fmt(r.avg_e2e_delay_s, 1e3),
        _fmt(r.avg_mac_retransmissions),
        _fmt(r.delivery_ratio),
    ])


def write_csv(result: SweepResult, path: str):
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in result.rows:
            fh.write(row + "\n")
        for key, agg in sorted(result.agg.items()):
            proto, nodes, prof, fp = key
            for stat, pick in (("mean", 0), ("ci", 1)):
                fh.write(",".join([
                    proto, str(nodes), prof, fp, stat,
                    _fmt(agg["avg_route_power_w"][pick], 1e3),
                    _fmt(agg["throughput_bps"][pick]),
                    _fmt(agg["avg_hop_count"][pick]),
                    _fmt(agg["avg_e2e_delay_s"][pick], 1e3),
                    _fmt(agg["avg_mac_retransmissions"][pick]),
                    _fmt(agg["delivery_ratio"][pick]),
                ]) + "\n")


PANELS = {
    "power_mw": ("avg_route_power_w", 1e3),
    "throughput_bps": ("throughput_bps", 1.0),
    "hops": ("avg_hop_count", 1.0),
    "delay_ms": ("avg_e2e_delay_s", 1e3),
    "retx": ("avg_mac_retransmissions", 1.0),
}


def write_plot_data(result: SweepResult, matrix: ExperimentMatrix, outdir: str):
    """One plain numeric table per measured panel: rows are node counts,
    columns are (protocol, profile) mean and ci pairs.  Failure cells go into
    a separate delay table keyed by failure position."""
    os.makedirs(outdir, exist_ok=True)
    combos = [(p, s) for p in matrix.protocols for s in matrix.si_profiles]
    for fname, (fld, scale) in PANELS.items():
        path = os.path.join(outdir, f"panel_{fname}.dat")
        with open(path, "w") as fh:
            head = ["nodes"]
            for p, s in combos:
                head += [f"{p}_{s}_mean", f"{p}_{s}_ci"]
            fh.write("# " + " ".join(head) + "\n")
            for nodes in matrix.node_counts:
                row = [str(nodes)]
                for p, s in combos:
                    agg = result.agg.get((p, nodes, s, "-"))
                    if agg is None:
                        agg = next((result.agg[k] for k in result.agg
                                    if k[:3] == (p, nodes, s)), None)
                    if agg is None:
                        row += ["nan", "nan"]
                    else:
                        m, ci = agg[fld]
                        row += [_fmt(m, scale), _fmt(ci, scale)]
                fh.write(" ".join(row) + "\n")
    fails = [f for f in matrix.failure_positions]
    if fails:
        path = os.path.join(outdir, "panel_delay_failures.dat")
        with open(path, "w") as fh:
            head = ["failure"]
            for p, s in combos:
                head += [f"{p}_{s}_mean", f"{p}_{s}_ci"]
            fh.write("# " + " ".join(head) + "\n")
            nodes = matrix.node_counts[0] if len(matrix.node_counts) == 1 \
                else 25 if 25 in matrix.node_counts else matrix.node_counts[-1]
            for fp in fails:
                row = [fp]
                for p, s in combos:
                    agg = result.agg.get((p, nodes, s, fp))
                    if agg is None:
                        row += ["nan", "nan"]
                    else:
                        m, ci = agg["avg_e2e_delay_s"]
                        row += [_fmt(m, 1e3), _fmt(ci, 1e3)]
                fh.write(" ".join(row) + "\n")


def parse_matrix(path: str) -> ExperimentMatrix:
    """Matrix file: same key=value format as scenarios, list values
    comma-separated."""
    kw: dict = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ScenarioError(f"{path}:{lineno}: expected key = value")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key == "node_counts":
                kw["node_counts"] = tuple(int(x) for x in val.split(",") if x.strip())
            elif key == "protocols":
                kw["protocols"] = tuple(x.strip() for x in val.split(",") if x.strip())
            elif key == "si_profiles":
                kw["si_profiles"] = tuple(x.strip() for x in val.split(",") if x.strip())
            elif key == "failure_positions":
                kw["failure_positions"] = tuple(x.strip() for x in val.split(",") if x.strip())
            elif key == "iterations":
                kw["iterations"] = int(val)
            elif key == "seed":
                kw["seed"] = int(val)
            else:
                raise ScenarioError(f"{path}:{lineno}: unknown key {key!r}")
    return ExperimentMatrix(**kw)
