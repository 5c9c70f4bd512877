"""Energy-cost routing with burst transfer over full-duplex relays.

The network layer negotiates the burst window beta_min during discovery,
moves data in bursts with immediate forwarding and one routing ACK per burst
per hop, and repairs broken routes from the closest node that still holds the
full buffered burst.

Pure pieces first (cost model, route selection, a reference flood model),
then the per-node controller.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

from . import phy as phymod
from .frames import BROADCAST, Frame, FrameType, stream_id
from .mac import airtime_us
from .routing_common import NodeBase


# ---------------------------------------------------------------------------
# route cost model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyCostParams:
    """Inputs of the per-link energy cost for one burst exchange."""
    p_ctrl: float            # W
    p_max: float             # W
    beta_min_bits: float     # burst payload bits
    data_rate: float         # bits/s
    t_inc_total: float       # s spent at p_max during the burst
    t_rts: float             # s
    t_fdcts: float           # s
    e_on: float              # J receiver-on energy for the exchange
    p_fail: float            # probability of transmission failure
    literal_chi: bool = False

    def __post_init__(self):
        if not (0.0 <= self.p_fail < 1.0):
            raise ValueError("p_fail must be in [0, 1)")
        if self.beta_min_bits / self.data_rate <= self.t_inc_total:
            raise ValueError("inconsistent timing")


def attempts_multiplier(p_fail: float, literal_chi: bool = False) -> float:
    """Expected transmission attempts for a link with failure probability p.

    Default is the expected-attempts form 1/(1-p); literal_chi selects the
    reciprocal form 1/p (floored near zero), kept for fidelity experiments.
    """
    if literal_chi:
        return 1.0 / max(p_fail, 1e-12)
    return 1.0 / (1.0 - p_fail)


def link_energy_cost(params: EnergyCostParams) -> float:
    """Energy in joules to push one burst across a link, retries included.

    E_data charges the controlled power for the burst airtime minus the
    cumulative excursion time and p_max for the excursions; E_ctrl charges
    the RTS/FD-CTS exchange at p_max.
    """
    burst_time = params.beta_min_bits / params.data_rate
    e_data = params.p_ctrl * (burst_time - params.t_inc_total) \
        + params.p_max * params.t_inc_total
    e_ctrl = params.p_max * (params.t_rts + params.t_fdcts)
    chi = attempts_multiplier(params.p_fail, params.literal_chi)
    return chi * (e_data + e_ctrl + params.e_on)


def route_cost(link_costs) -> float:
    """Total route cost: arithmetic sum of per-link costs."""
    total = 0.0
    for c in link_costs:
        if c < 0 or not math.isfinite(c):
            raise ValueError("link costs must be finite and non-negative")
        total += c
    return total


@dataclass
class RouteEntry:
    destination: int
    next_hop: int
    route: tuple              # ordered node ids, source to destination
    total_cost: float         # joules
    beta_min: int             # packets
    state: str = "Valid"      # Valid | Broken
    last_refresh: int = 0

    def __post_init__(self):
        if self.beta_min < 1:
            raise ValueError("beta_min must be >= 1")
        if self.total_cost < 0:
            raise ValueError("total_cost must be >= 0")


def select_min_route(candidates) -> RouteEntry:
    """Minimum-cost candidate; ties break on fewer hops, then on the
    lexicographically smallest node-id sequence."""
    candidates = list(candidates)
    if not candidates:
        raise ValueError("no route")
    return min(candidates, key=lambda c: (c.total_cost, len(c.route), tuple(c.route)))


def flood_candidates(adjacency: dict, src: int, dst: int, link_cost,
                     suppress: bool = True) -> list[RouteEntry]:
    """Reference model of discovery flooding.

    adjacency maps node -> iterable of neighbors; link_cost(a, b) gives the
    per-link cost.  With suppress=True only the first copy arriving at each
    intermediate node is rebroadcast (per-hop unit latency, node-id order
    tiebreak), mirroring duplicate suppression in the live protocol; with
    suppress=False every simple path is enumerated.
    """
    out: list[RouteEntry] = []
    forwarded: set[int] = set()
    queue: list[tuple[int, int, int, tuple, float]] = [(0, 0, src, (src,), 0.0)]
    order = 1
    while queue:
        queue.sort()
        hops, _, node, path, cost = queue.pop(0)
        if node == dst:
            out.append(RouteEntry(destination=dst, next_hop=path[1],
                                  route=path, total_cost=cost, beta_min=1))
            continue
        if suppress:
            if node in forwarded:
                continue
            forwarded.add(node)
        for nb in sorted(adjacency.get(node, ())):
            if nb in path:
                continue
            queue.append((hops + 1, order, nb, path + (nb,),
                          cost + link_cost(node, nb)))
            order += 1
    return out


# ---------------------------------------------------------------------------
# controller state
# ---------------------------------------------------------------------------

@dataclass
class TransferState:
    """Per-stream transfer role and burst bookkeeping at one node."""
    stream: int
    role: str                 # Source | Relay | Destination
    route: tuple = ()
    upstream: int = BROADCAST
    downstream: int = BROADCAST
    beta: int = 1             # negotiated burst window, packets
    p_ctrl: float = 0.0
    # sender side, toward downstream
    win_lo: int = 1
    win_hi: int = 0
    down_acked: int = 0
    buffer: dict = field(default_factory=dict)   # seq -> eq flag
    sent_hi: int = 0
    retx_hi: int = 0
    rounds: int = 0
    anchor: int = 0           # excursion schedule anchor of the data phase
    resuming: bool = False
    # receiver side, from upstream
    up_acked: int = 0
    hi_inorder: int = 0
    eq_at: int = 0
    win_end_in: int = 0   # burst window boundary announced by the sender
    gen: int = 0          # route generation, stamped by the destination
    got: set = field(default_factory=set)
    reacks: int = 0
    burst_timer: object = None
    paused: bool = False

    def rx_win_end(self) -> int:
        if self.win_end_in > self.up_acked:
            end = self.win_end_in
        else:
            end = self.up_acked + self.beta
        if self.eq_at and self.eq_at < end:
            end = self.eq_at
        return end

    def tx_win_end(self) -> int:
        if self.role == "Source":
            return self.win_hi
        return max(self.buffer.keys(), default=self.down_acked)


class XfdrNode(NodeBase):
    """Per-node protocol controller."""

    def __init__(self, sim, idx):
        super().__init__(sim, idx)
        scn = sim.scn
        self.beta_own = scn.beta_packets
        self.rreq_seen: dict[tuple, int] = {}
        self.rreq_id = 0
        self.candidates: list[tuple] = []    # (RouteEntry, stream_tag)
        self.collect_timer = None
        self.rrep_pending = None             # (frame, tries)
        self.ctrl_pending = None             # (frame, tries) for RERR/RUPD
        self.discover_timer = None
        self.discover_tries = 0
        self.flow_dst = None
        self.send_queue: list[int] = []
        self.streams: dict[int, TransferState] = {}
        self.rts_retries = 0
        self.fdcts_timer = None
        self.supervise_timer = None
        self.forward_q: list[list] = []      # [seq, eq, ready, retx]
        self.fwd_inflight: Optional[int] = None
        self.t_data = airtime_us(scn.packet_size_bytes + 32, scn.data_rate_bps)
        self.t_fdcts = airtime_us(24, scn.data_rate_bps)
        self.t_rts = airtime_us(20, scn.data_rate_bps)
        self.t_ackf = airtime_us(16, scn.data_rate_bps)
        sifs = scn.timing.sifs_us
        self.pipe_delay = max(airtime_us(32, scn.data_rate_bps),
                              self.t_fdcts + 2 * sifs)

    # -- cost estimation -----------------------------------------------------

    def estimate_link_cost_pj(self, meas_power: float, beta_packets: int) -> int:
        """Cost of the link a control frame just arrived on, in picojoules."""
        scn = self.sim.scn
        p = scn.phy
        p_ctrl = phymod.controlled_power(p.p_max, meas_power, p.zeta_th, p.c_hat)
        d_alpha = p.p_max / meas_power
        rsi = phymod.residual_si_power(p_ctrl, p)
        p_fail = phymod.link_outage_probability(
            p_ctrl, d_alpha ** (1.0 / p.alpha), p.alpha,
            p.sinr_decode_threshold, rsi, 0.0, p.n0)
        p_fail = min(p_fail, 1.0 - 1e-9)
        bits = beta_packets * scn.packet_size_bytes * 8
        burst_time = bits / scn.data_rate_bps
        periods = int(burst_time * 1e6) // scn.timing.eifs_us
        t_inc = periods * scn.timing.excursion_us * 1e-6
        t_rts = self.t_rts * 1e-6
        t_fdcts = self.t_fdcts * 1e-6
        e_on = scn.p_rx_on_w * (burst_time + t_rts + t_fdcts + self.t_ackf * 1e-6)
        cost = link_energy_cost(EnergyCostParams(
            p_ctrl=p_ctrl, p_max=p.p_max, beta_min_bits=bits,
            data_rate=scn.data_rate_bps, t_inc_total=t_inc, t_rts=t_rts,
            t_fdcts=t_fdcts, e_on=e_on, p_fail=p_fail,
            literal_chi=scn.literal_chi))
        return int(round(cost * 1e12))

    # -- application -----------------------------------------------------------

    def on_app_flow(self, dst: int, packets):
        self.flow_dst = dst
        self.send_queue = list(packets)
        sid = stream_id(self.idx)
        self.streams[sid] = TransferState(stream=sid, role="Source")
        self._start_discovery(stream_tag=0)

    def active_route(self):
        st = self.streams.get(stream_id(self.idx))
        if st and st.route:
            return list(st.route)
        return None

    # -- discovery ---------------------------------------------------------------

    def _start_discovery(self, stream_tag: int):
        if not self.alive():
            return
        self.discover_tries += 1
        if self.discover_tries > 4:
            # back off and keep trying; only the simulation horizon gives up
            self.discover_tries = 0
            self.sim.schedule(self.sim.now + 2_000_000,
                              self._discovery_timeout, stream_tag)
            return
        self.rreq_id += 1
        frame = Frame(kind=FrameType.RREQ, origin=self.idx, final=self.flow_dst,
                      prev=self.idx, next_hop=BROADCAST, seq=self.rreq_id,
                      cost_pj=0, beta_min=self.beta_own, path=(self.idx,),
                      stream=stream_tag, retx=self.discover_tries > 1)
        self.contend(lambda: self.send_now(frame))
        timeout = self.sim.scn.rreq_collect_window_us + 100_000
        if self.discover_timer:
            self.discover_timer.cancel()
        self.discover_timer = self.sim.schedule(
            self.sim.now + timeout, self._discovery_timeout, stream_tag)

    def _discovery_timeout(self, stream_tag: int):
        stream = stream_tag if stream_tag else stream_id(self.idx)
        st = self.streams.get(stream)
        if st is not None and st.route and not st.paused:
            return
        self._start_discovery(stream_tag)

    def _handle_rreq(self, frame: Frame, meas: float):
        if frame.origin == self.idx or self.idx in frame.path:
            return
        cost = frame.cost_pj + self.estimate_link_cost_pj(meas, frame.beta_min)
        if self.idx == frame.final:
            # the destination buffers every copy that survived forwarding;
            # each one traveled a distinct route
            beta = min(frame.beta_min, self.beta_own)
            entry = RouteEntry(destination=self.idx, next_hop=frame.path[-1],
                               route=frame.path + (self.idx,),
                               total_cost=cost * 1e-12, beta_min=beta,
                               last_refresh=self.sim.now)
            self.candidates.append((entry, frame.stream))
            if self.collect_timer is None:
                self.collect_timer = self.sim.schedule(
                    self.sim.now + self.sim.scn.rreq_collect_window_us,
                    self._collect_expired)
            return
        # intermediate nodes rebroadcast only the first copy per (origin, id)
        key = (frame.origin, frame.seq)
        if key in self.rreq_seen:
            return
        self.rreq_seen[key] = self.sim.now
        beta = min(frame.beta_min, self.beta_own)
        fwd = replace(frame, prev=self.idx, cost_pj=cost, beta_min=beta,
                      path=frame.path + (self.idx,))
        self.contend(lambda: self.send_now(fwd))

    def _collect_expired(self):
        self.collect_timer = None
        if not self.candidates:
            return
        entries = [c[0] for c in self.candidates]
        best = select_min_route(entries)
        stream_tag = next(s for e, s in self.candidates if e is best)
        self.candidates = [c for c in self.candidates if c[0] is not best]
        beta = min(best.beta_min, self.beta_own)
        route = best.route
        stream = stream_tag if stream_tag else stream_id(route[0])
        st = self.streams.get(stream)
        if st is None:
            st = TransferState(stream=stream, role="Destination")
            self.streams[stream] = st
        st.role = "Destination"
        st.upstream = route[-2]
        st.beta = beta
        st.route = route
        gen = self.sim.now
        st.gen = gen
        st.up_acked = st.hi_inorder
        st.eq_at = 0
        st.win_end_in = 0
        self.sim.set_exchange_peer(self.idx, st.upstream)
        rrep = Frame(kind=FrameType.RREP, origin=route[0], final=self.idx,
                     prev=self.idx, next_hop=route[-2], seq=st.hi_inorder,
                     cost_pj=int(best.total_cost * 1e12), beta_min=beta,
                     path=route, stream=stream_tag, win_end=gen,
                     duration_us=self.sim.scn.timing.sifs_us + 60)
        self._send_rrep(rrep, tries=0)

    def _send_rrep(self, rrep: Frame, tries: int):
        self.rrep_pending = (rrep, tries)
        wire = replace(rrep, retx=tries > 0)
        self.contend(lambda: self.send_now(wire), retry_count=tries)
        self.sim.schedule(self.sim.now + 6000 * (tries + 1),
                          self._rrep_timeout, rrep, tries)

    def _rrep_timeout(self, rrep: Frame, tries: int):
        if self.rrep_pending is None or self.rrep_pending[0] is not rrep \
                or self.rrep_pending[1] != tries:
            return
        if tries + 1 < self.sim.scn.r_ack_retries:
            self._send_rrep(rrep, tries + 1)
            return
        self.rrep_pending = None
        # hop to the chosen route is dead: fall back to the next candidate
        if self.idx == rrep.final and self.candidates:
            self._collect_expired()

    def _handle_rrep(self, frame: Frame, meas: float):
        rack = Frame(kind=FrameType.R_ACK, origin=frame.origin, final=frame.final,
                     prev=self.idx, next_hop=frame.prev, seq=frame.seq,
                     stream=frame.stream)
        self.send_after_sifs(rack)
        route = frame.path
        if self.idx not in route:
            return
        i = route.index(self.idx)
        stream = frame.stream if frame.stream else stream_id(route[0])
        st = self.streams.get(stream)
        if i > 0:
            # a relay on the (possibly repaired) path
            if st is None:
                st = TransferState(stream=stream, role="Relay")
                self.streams[stream] = st
            if st.role == "Relay":
                self._setup_relay(st, frame, meas, i)
            return
        # i == 0: the node that requested this route (source or detector)
        if st is None:
            return
        if frame.stream:
            self._apply_repair(st, frame, meas)
        elif st.role == "Source" and not st.route:
            self._establish_route(st, frame, meas)

    def _setup_relay(self, st: TransferState, frame: Frame, meas: float, i: int):
        if frame.win_end < st.gen:
            return  # stale reply from an earlier repair generation
        st.gen = frame.win_end
        p = self.sim.scn.phy
        route = frame.path
        st.role = "Relay"
        st.upstream = route[i - 1]
        st.downstream = route[i + 1]
        st.beta = frame.beta_min
        st.route = route
        st.p_ctrl = max(st.p_ctrl,
                        phymod.controlled_power(p.p_max, meas, p.zeta_th, p.c_hat))
        if frame.stream:
            # repair path: the destination's piggybacked ack is authoritative;
            # only the detector's buffer carries packets forward, so a
            # re-enlisted relay starts from a clean slate
            st.up_acked = st.hi_inorder = st.down_acked = frame.seq
            st.buffer.clear()
            st.got.clear()
            st.eq_at = 0
            st.win_end_in = 0
            self.forward_q.clear()
            self.fwd_inflight = None
        self.sim.set_exchange_peer(self.idx, st.upstream)
        self.sim.set_exchange_peer(self.idx, st.downstream)
        members = self.sim.stream_members.get(st.stream, set()) | set(route)
        self.sim.register_stream(st.stream, members)
        fwd = replace(frame, prev=self.idx, next_hop=route[i - 1])
        self.sim.schedule(self.sim.now + self.sim.scn.timing.sifs_us + 60,
                          self._send_rrep_fwd, fwd)

    def _send_rrep_fwd(self, fwd: Frame):
        self._send_rrep(fwd, tries=0)

    def _establish_route(self, st: TransferState, frame: Frame, meas: float):
        p = self.sim.scn.phy
        st.gen = frame.win_end
        st.route = frame.path
        st.beta = frame.beta_min
        st.downstream = frame.path[1]
        st.p_ctrl = phymod.controlled_power(p.p_max, meas, p.zeta_th, p.c_hat)
        if self.discover_timer:
            self.discover_timer.cancel()
            self.discover_timer = None
        self.sim.set_exchange_peer(self.idx, st.downstream)
        self.sim.register_stream(st.stream, set(frame.path))
        self.sim.note_route(self.idx, frame.path)
        self._next_burst(st)

    def _handle_rack(self, frame: Frame):
        if self.rrep_pending is not None:
            pend = self.rrep_pending[0]
            if frame.prev == pend.next_hop:
                self.rrep_pending = None
                return
        if self.ctrl_pending is not None:
            pend = self.ctrl_pending[0]
            if frame.prev == pend.next_hop:
                self.ctrl_pending = None

    # -- burst transfer: sender side -----------------------------------------

    def _next_burst(self, st: TransferState):
        if st.paused or not self.send_queue:
            return
        n = min(st.beta, len(self.send_queue))
        window = self.send_queue[:n]
        st.win_lo, st.win_hi = window[0], window[-1]
        st.buffer = {s: False for s in window}
        if n < st.beta:
            # the queue ran short of a full window: flag end-of-queue
            st.buffer[window[-1]] = True
        st.sent_hi = st.down_acked
        st.retx_hi = 0
        st.rounds = 0
        self.rts_retries = 0
        self._send_rts(st)

    def _send_rts(self, st: TransferState):
        if st.paused or not self.alive() or not st.route:
            return
        lo = st.down_acked + 1
        dur = max(st.tx_win_end() - st.down_acked, 1) * self.t_data + 3000
        rts = Frame(kind=FrameType.RTS, origin=st.route[0], final=st.route[-1],
                    prev=self.idx, next_hop=st.downstream, seq=lo,
                    beta_min=st.beta, duration_us=dur, stream=st.stream,
                    retx=self.rts_retries > 0)

        def go():
            if st.paused:
                return
            self.send_now(rts)
            if self.fdcts_timer:
                self.fdcts_timer.cancel()
            timeout = self.sim.now + self.t_rts \
                + 2 * self.sim.scn.timing.sifs_us + self.t_fdcts + 1200
            self.fdcts_timer = self.sim.schedule(timeout, self._fdcts_missing, st)

        self.contend(go, retry_count=self.rts_retries)

    def _fdcts_missing(self, st: TransferState):
        self.fdcts_timer = None
        if st.paused or st.down_acked >= st.tx_win_end():
            return
        self.rts_retries += 1
        if self.rts_retries <= self.sim.scn.timing.retry_limit:
            self._send_rts(st)
            return
        # downstream silent through the MAC retry limit: the link is gone
        self._maintain(st)

    def _handle_fdcts(self, frame: Frame, meas: float):
        scn = self.sim.scn
        p = scn.phy
        up, down = frame.path[0], frame.path[1]
        st = self.streams.get(frame.stream)
        if up == self.idx and st is not None:
            # confirms our RTS (or continues the cascade past us)
            if self.fdcts_timer:
                self.fdcts_timer.cancel()
                self.fdcts_timer = None
            p_new = phymod.controlled_power(p.p_max, meas, p.zeta_th, p.c_hat)
            # a relay keeps the higher of the upstream- and downstream-derived
            # levels to stay connected to both neighbors
            st.p_ctrl = max(st.p_ctrl, p_new) if st.role == "Relay" else p_new
            if (st.role == "Source" or st.resuming) and self.idx in st.route:
                # data starts once the whole FD-CTS cascade has cleared the
                # air; control frames go out at p_max and would crush the
                # power-controlled data at downstream relays
                sifs = scn.timing.sifs_us
                hops_after = len(st.route) - st.route.index(self.idx) - 1
                stagger = sifs + max(hops_after - 1, 0) * (self.t_fdcts + sifs)
                st.anchor = self.sim.now + stagger
                st.resuming = False
                self.sim.schedule(st.anchor, self._send_window, st)
        elif down == self.idx and st is not None:
            p_new = phymod.controlled_power(p.p_max, meas, p.zeta_th, p.c_hat)
            st.p_ctrl = max(st.p_ctrl, p_new)
            if st.role in ("Relay", "Destination"):
                self._send_fdcts(st)
        elif st is None:
            nd = self.sim.nodes[self.idx]
            nd.nav_until = max(nd.nav_until, self.sim.now + frame.duration_us)

    def _send_fdcts(self, st: TransferState):
        # carries the source-side and next-hop addresses: the node we confirm
        # the channel to (our upstream) and the node the cascade continues to
        nxt = st.downstream if st.role != "Destination" else BROADCAST
        dur = st.beta * self.t_data + 3000
        fdcts = Frame(kind=FrameType.FD_CTS,
                      origin=st.route[0] if st.route else self.idx,
                      final=BROADCAST, prev=self.idx, next_hop=BROADCAST,
                      path=(st.upstream, nxt), duration_us=dur, stream=st.stream)
        self.send_after_sifs(fdcts)

    def _send_window(self, st: TransferState):
        if st.paused or not self.alive():
            return
        if st.role == "Source":
            st.sent_hi = st.down_acked
            self._send_next_data(st)
        else:
            self._queue_relay_retx(st)
            self._forward_next(st)

    def _send_next_data(self, st: TransferState):
        if st.paused:
            return
        nxt = st.sent_hi + 1
        while nxt <= st.win_hi and nxt not in st.buffer:
            nxt += 1
        if nxt > st.win_hi:
            self._arm_supervision(st)
            return
        st.sent_hi = nxt
        remaining = (st.win_hi - nxt) * self.t_data + self.t_ackf + 64
        frame = Frame(kind=FrameType.DATA, origin=st.route[0], final=st.route[-1],
                      prev=self.idx, next_hop=st.downstream, seq=nxt,
                      eq=st.buffer[nxt], beta_min=st.beta, win_end=st.win_hi,
                      cost_pj=st.gen, duration_us=remaining,
                      payload_bits=self.sim.scn.packet_size_bytes * 8,
                      stream=st.stream, retx=nxt <= st.retx_hi)
        self.send_now(frame, p_ctrl=st.p_ctrl, anchor=st.anchor)

    def on_tx_done(self, frame: Frame):
        if frame.kind == FrameType.DATA:
            st = self.streams.get(frame.stream)
            if st is not None and frame.prev == self.idx and not st.paused:
                if st.role == "Relay":
                    self.fwd_inflight = None
                    self._forward_next(st)
                elif st.role == "Source":
                    self._send_next_data(st)
                return
        self._drain_txq()

    # -- supervision (ack timer + continuous sensing of the downstream relay) --

    def _t_ack_us(self, st: TransferState) -> int:
        win = max(st.tx_win_end() - st.win_lo + 1, 1)
        hops = max(len(st.route) - 1, 1)
        return 2 * (win * self.t_data + hops * self.pipe_delay)

    def _arm_supervision(self, st: TransferState):
        if self.supervise_timer:
            self.supervise_timer.cancel()
            self.supervise_timer = None
        if st.paused or st.down_acked >= st.tx_win_end():
            return
        # a full-duplex sender can hear its downstream relay forwarding;
        # silence past the abort window means trouble.  The hop into the
        # destination has nothing to overhear and uses the ack timer.
        relayed = bool(st.route) and st.downstream != st.route[-1]
        interval = 2 * self.t_data if relayed else self._t_ack_us(st)
        self.supervise_timer = self.sim.schedule(
            self.sim.now + interval, self._supervise, st, relayed)

    def _supervise(self, st: TransferState, relayed: bool):
        self.supervise_timer = None
        if st.paused or st.down_acked >= st.tx_win_end() or not self.alive():
            return
        if relayed and self.sim.node_busy(self.idx):
            # downstream forwarding audible: continue
            self._arm_supervision(st)
            return
        st.rounds += 1
        if st.rounds > self.sim.scn.data_retry_rounds:
            self._maintain(st)
            return
        self._resend_unacked(st)

    def _resend_unacked(self, st: TransferState):
        if st.role == "Source":
            st.retx_hi = max(st.retx_hi, st.sent_hi)
            st.sent_hi = st.down_acked
            if self.tx_free():
                self.sim.schedule(self.sim.now + self.sim.scn.timing.sifs_us,
                                  self._send_next_data, st)
        else:
            self._queue_relay_retx(st)
            self.sim.schedule(self.sim.now + self.sim.scn.timing.sifs_us,
                              self._forward_next, st)
        self._arm_supervision(st)

    def _queue_relay_retx(self, st: TransferState):
        queued = {it[0] for it in self.forward_q}
        end = st.rx_win_end()
        for s in sorted(st.buffer):
            if s > st.down_acked and s != self.fwd_inflight and s not in queued:
                self.forward_q.append([s, st.buffer[s], end, True, True])

    def _handle_ack(self, frame: Frame):
        st = self.streams.get(frame.stream)
        if st is None or frame.prev != st.downstream:
            return
        if frame.cost_pj != st.gen:
            return
        k = frame.seq
        if k <= st.down_acked:
            return
        st.down_acked = k
        for s in [s for s in st.buffer if s <= k]:
            del st.buffer[s]
        if st.down_acked >= st.tx_win_end():
            if self.supervise_timer:
                self.supervise_timer.cancel()
                self.supervise_timer = None
            st.rounds = 0
            if st.role == "Source":
                del self.send_queue[:st.win_hi - st.win_lo + 1]
                self._next_burst(st)
            else:
                self._maybe_ack_upstream(st)
        else:
            st.rounds += 1
            if st.rounds > self.sim.scn.data_retry_rounds:
                self._maintain(st)
                return
            self._resend_unacked(st)

    # -- receiver side --------------------------------------------------------

    def on_rx_started(self, frame: Frame, t_end: int):
        st = self.streams.get(frame.stream)
        if st is None or st.role != "Relay" or st.paused or not st.route:
            return
        if not self._gen_current(st, frame):
            return
        if frame.prev != st.upstream:
            return
        # immediate forwarding: relay the packet as soon as its header has
        # been processed, while reception continues; the header carries the
        # burst window boundary
        if frame.win_end > st.win_end_in:
            st.win_end_in = frame.win_end
        self.forward_q.append([frame.seq, frame.eq, frame.win_end, False, False])
        self.sim.schedule(self.sim.now + self.pipe_delay, self._mark_ready,
                          st, frame.seq)

    def _mark_ready(self, st: TransferState, seq: int):
        for item in self.forward_q:
            if item[0] == seq:
                item[3] = True
        self._forward_next(st)

    def _forward_next(self, st: TransferState):
        if st.paused or not self.alive() or not self.tx_free() or not st.route:
            return
        while self.forward_q:
            seq, eq, win_end, ready, retx = self.forward_q[0]
            if not ready:
                return
            self.forward_q.pop(0)
            if seq <= st.down_acked:
                continue
            if st.anchor == 0:
                st.anchor = self.sim.now
            self.fwd_inflight = seq
            remaining = max(win_end - seq, 0) * self.t_data + self.t_ackf + 64
            frame = Frame(kind=FrameType.DATA, origin=st.route[0],
                          final=st.route[-1], prev=self.idx,
                          next_hop=st.downstream, seq=seq, eq=eq,
                          beta_min=st.beta, win_end=win_end,
                          cost_pj=st.gen, duration_us=remaining,
                          payload_bits=self.sim.scn.packet_size_bytes * 8,
                          stream=st.stream, retx=retx)
            self.send_now(frame, p_ctrl=st.p_ctrl, anchor=st.anchor)
            return
        if st.role == "Relay" and st.buffer and st.down_acked < st.tx_win_end():
            self._arm_supervision(st)
        self._drain_txq()

    def on_rx_failed(self, frame: Frame):
        if frame.kind != FrameType.DATA:
            return
        st = self.streams.get(frame.stream)
        if st is None:
            return
        nd = self.sim.nodes[self.idx]
        if st.role == "Relay" and nd.tx is not None \
                and nd.tx.frame.kind == FrameType.DATA \
                and nd.tx.frame.seq == frame.seq and self.fwd_inflight == frame.seq:
            # the copy being relayed is corrupt: truncate it
            self.sim.abort_tx(self.idx)
            self.fwd_inflight = None
            self._forward_next(st)
        else:
            self.forward_q = [it for it in self.forward_q if it[0] != frame.seq]

    def _gen_current(self, st: TransferState, frame: Frame) -> bool:
        """Route-generation hygiene: drop traffic from retired generations;
        a relay overhearing a newer generation retires itself."""
        if frame.cost_pj < st.gen:
            return False
        if frame.cost_pj > st.gen:
            if st.role == "Relay":
                st.paused = True
                self.forward_q.clear()
                if self.supervise_timer:
                    self.supervise_timer.cancel()
                    self.supervise_timer = None
            return False
        return True

    def _handle_data(self, frame: Frame, st: TransferState):
        if not self._gen_current(st, frame):
            return
        if frame.prev != st.upstream:
            return
        seq = frame.seq
        if frame.win_end > st.win_end_in:
            st.win_end_in = frame.win_end
        if frame.eq:
            st.eq_at = seq
        if st.up_acked < seq <= st.up_acked + st.beta and seq not in st.got:
            # the negotiated window bounds what a node ever has to hold;
            # anything beyond it is refused and retransmitted later
            st.got.add(seq)
            if st.role == "Relay" and seq > st.down_acked:
                for old in [x for x in st.buffer if x <= st.down_acked]:
                    del st.buffer[old]
                if len(st.buffer) >= self.beta_own and seq not in st.buffer:
                    raise RuntimeError("relay buffer overflow: beta negotiation broken")
                st.buffer[seq] = frame.eq
            while st.hi_inorder + 1 in st.got:
                st.hi_inorder += 1
        if st.role == "Destination":
            self.sim.deliver(self.idx, seq)
        st.reacks = 0
        self._arm_burst_timer(st)
        self._maybe_ack_upstream(st)

    def _arm_burst_timer(self, st: TransferState):
        if st.burst_timer:
            st.burst_timer.cancel()
        st.burst_timer = self.sim.schedule(self.sim.now + 3 * self.t_data,
                                           self._burst_timeout, st)

    def _burst_timeout(self, st: TransferState):
        st.burst_timer = None
        if st.paused or st.reacks >= 3:
            return
        if st.hi_inorder >= st.rx_win_end():
            # window complete; the ack travels once the downstream hop is
            # done, not from this timer
            return
        st.reacks += 1
        self._send_up_ack(st, min(st.hi_inorder, st.rx_win_end()))
        self._arm_burst_timer(st)

    def _maybe_ack_upstream(self, st: TransferState):
        end = st.rx_win_end()
        if st.hi_inorder < end:
            return
        if st.role == "Relay" and st.down_acked < end:
            return  # the ack cascades back once the downstream hop is done
        if st.burst_timer:
            st.burst_timer.cancel()
            st.burst_timer = None
        self._send_up_ack(st, end)
        st.up_acked = end
        st.got = {s for s in st.got if s > st.up_acked}

    def _send_up_ack(self, st: TransferState, k: int):
        if k <= 0 or st.upstream == BROADCAST:
            return
        ack = Frame(kind=FrameType.ACK, origin=st.route[0] if st.route else self.idx,
                    final=st.route[-1] if st.route else self.idx, prev=self.idx,
                    next_hop=st.upstream, seq=k, cost_pj=st.gen, stream=st.stream)
        self.send_after_sifs(ack)

    # -- route maintenance -------------------------------------------------------

    def _maintain(self, st: TransferState):
        """Downstream unresponsive: mark the link broken, notify upstream
        hop-by-hop, rediscover from here, resume from the first packet the
        destination has not acknowledged."""
        if st.paused:
            return
        st.paused = True
        if self.supervise_timer:
            self.supervise_timer.cancel()
            self.supervise_timer = None
        if not st.route:
            return
        self.sim.mark_link_broken(self.idx, st.downstream)
        self.sim.set_exchange_peer(self.idx, st.downstream, enable=False)
        origin = st.stream - 1
        if self.idx != origin and st.upstream != BROADCAST:
            rerr = Frame(kind=FrameType.RERR, origin=origin,
                         final=st.route[-1], prev=self.idx, next_hop=st.upstream,
                         stream=st.stream, path=(self.idx, st.downstream),
                         duration_us=self.sim.scn.timing.sifs_us + 60)
            self._send_with_rack(rerr)
        self.flow_dst = st.route[-1]
        self.discover_tries = 0
        self._start_discovery(stream_tag=st.stream)

    def _send_with_rack(self, frame: Frame, tries: int = 0):
        self.ctrl_pending = (frame, tries)
        wire = replace(frame, retx=tries > 0)
        self.contend(lambda: self.send_now(wire), retry_count=tries)
        self.sim.schedule(self.sim.now + 6000 * (tries + 1),
                          self._rack_timeout, frame, tries)

    def _rack_timeout(self, frame: Frame, tries: int):
        if self.ctrl_pending is None or self.ctrl_pending[0] is not frame \
                or self.ctrl_pending[1] != tries:
            return
        if tries + 1 < self.sim.scn.r_ack_retries:
            self._send_with_rack(frame, tries + 1)
        else:
            self.ctrl_pending = None

    def _handle_rerr(self, frame: Frame, st: Optional[TransferState]):
        rack = Frame(kind=FrameType.R_ACK, origin=frame.origin, final=frame.final,
                     prev=self.idx, next_hop=frame.prev, seq=0, stream=frame.stream)
        self.send_after_sifs(rack)
        if st is None or st.paused:
            return
        # continuous sensing heard a route error: stop transmitting at once
        nd = self.sim.nodes[self.idx]
        if nd.tx is not None and nd.tx.frame.kind == FrameType.DATA:
            self.sim.abort_tx(self.idx)
            self.fwd_inflight = None
        st.paused = True
        if self.supervise_timer:
            self.supervise_timer.cancel()
            self.supervise_timer = None
        if len(frame.path) == 2:
            self.sim.mark_link_broken(frame.path[0], frame.path[1])
        origin = st.stream - 1
        if self.idx != origin and st.upstream != BROADCAST:
            fwd = replace(frame, prev=self.idx, next_hop=st.upstream)
            self._send_with_rack(fwd)
        else:
            # if the detector's local repair never reports back, fall back to
            # a fresh end-to-end discovery from the source
            self.sim.schedule(self.sim.now + 400_000, self._escalate, st)

    def _escalate(self, st: TransferState):
        if not st.paused:
            return
        st.paused = False
        if st.route:
            self.flow_dst = st.route[-1]
        self.discover_tries = 0
        st.route = ()
        self._start_discovery(stream_tag=st.stream)

    def _apply_repair(self, st: TransferState, rrep: Frame, meas: float):
        """The detector spliced a new tail to the destination: update the
        route, push an RUPD toward the source, and resume from the first
        packet the destination has not acknowledged."""
        if rrep.win_end < st.gen:
            return
        st.gen = rrep.win_end
        p = self.sim.scn.phy
        tail = rrep.path
        old = st.route
        head = old[:old.index(self.idx)] if self.idx in old else ()
        # splice, cutting the head at the first node the new tail reuses
        for i, n in enumerate(head):
            if n in tail:
                head = head[:i]
                break
        new_route = tuple(head) + tail
        st.route = new_route
        st.beta = min(st.beta, rrep.beta_min)
        st.downstream = tail[1]
        st.p_ctrl = phymod.controlled_power(p.p_max, meas, p.zeta_th, p.c_hat)
        st.paused = False
        st.rounds = 0
        if self.discover_timer:
            self.discover_timer.cancel()
            self.discover_timer = None
        self.sim.set_exchange_peer(self.idx, st.downstream)
        members = self.sim.stream_members.get(st.stream, set()) | set(new_route)
        self.sim.register_stream(st.stream, members)
        self.sim.note_route(self.idx, new_route)
        # rewind to the destination's piggybacked ack: it is the only
        # authoritative statement of what got through
        acked_by_dest = rrep.seq
        st.down_acked = acked_by_dest
        for s in [s for s in st.buffer if s <= acked_by_dest]:
            del st.buffer[s]
        if head:
            self._send_rupd(st, head)
        if st.role == "Source":
            # the source can regenerate any packet: rebuild the queue from
            # the first packet the destination does not have
            self.send_queue = list(range(acked_by_dest + 1,
                                         self.sim.expected_packets + 1))
            st.win_hi = 0
            self._next_burst(st)
            return
        if st.down_acked >= st.tx_win_end():
            return  # nothing buffered beyond the ack: nothing to resume
        st.anchor = 0
        st.resuming = True
        st.rounds = 0
        self.rts_retries = 0
        self._send_rts(st)

    def _send_rupd(self, st: TransferState, head: tuple):
        rupd = Frame(kind=FrameType.RUPD, origin=st.route[0], final=st.route[-1],
                     prev=self.idx, next_hop=head[-1], beta_min=st.beta,
                     path=st.route, stream=st.stream, win_end=st.gen,
                     duration_us=self.sim.scn.timing.sifs_us + 60)
        self._send_with_rack(rupd)

    def _handle_rupd(self, frame: Frame, st: Optional[TransferState]):
        rack = Frame(kind=FrameType.R_ACK, origin=frame.origin, final=frame.final,
                     prev=self.idx, next_hop=frame.prev, seq=0, stream=frame.stream)
        self.send_after_sifs(rack)
        if st is None:
            return
        route = frame.path
        if self.idx not in route:
            # spliced off the route by the repair: retire the stale state
            st.paused = True
            return
        if frame.win_end < st.gen:
            return
        st.gen = frame.win_end
        i = route.index(self.idx)
        st.route = route
        st.beta = min(st.beta, frame.beta_min)
        st.paused = False
        if i > 0:
            # reposition on the updated route
            st.upstream = route[i - 1]
            st.downstream = route[i + 1]
            self.sim.set_exchange_peer(self.idx, st.upstream)
            self.sim.set_exchange_peer(self.idx, st.downstream)
            fwd = replace(frame, prev=self.idx, next_hop=route[i - 1])
            self._send_with_rack(fwd)
        else:
            # source: route updated; the outstanding window completes through
            # the resumed chained acks
            st.downstream = route[1]
            self.sim.set_exchange_peer(self.idx, st.downstream)
            self.sim.note_route(self.idx, route)
            st.rounds = 0
            self._arm_supervision(st)

    # -- dispatch ------------------------------------------------------------------

    def on_frame(self, frame: Frame, meas_power: float):
        kind = frame.kind
        st = self.streams.get(frame.stream)
        if kind == FrameType.RREQ:
            self._handle_rreq(frame, meas_power)
        elif kind == FrameType.RREP:
            if frame.next_hop == self.idx:
                self._handle_rrep(frame, meas_power)
        elif kind == FrameType.R_ACK:
            if frame.next_hop == self.idx:
                self._handle_rack(frame)
        elif kind == FrameType.RTS:
            if frame.next_hop == self.idx:
                self._accept_rts(frame, meas_power)
        elif kind == FrameType.FD_CTS:
            self._handle_fdcts(frame, meas_power)
        elif kind == FrameType.DATA:
            if frame.next_hop == self.idx and st is not None \
                    and st.role in ("Relay", "Destination"):
                self._handle_data(frame, st)
        elif kind == FrameType.ACK:
            if frame.next_hop == self.idx:
                self._handle_ack(frame)
        elif kind == FrameType.RERR:
            if frame.next_hop == self.idx:
                self._handle_rerr(frame, st)
        elif kind == FrameType.RUPD:
            if frame.next_hop == self.idx:
                self._handle_rupd(frame, st)

    def _accept_rts(self, frame: Frame, meas: float):
        st = self.streams.get(frame.stream)
        if st is None or st.role not in ("Relay", "Destination"):
            return
        p = self.sim.scn.phy
        p_new = phymod.controlled_power(p.p_max, meas, p.zeta_th, p.c_hat)
        st.p_ctrl = max(st.p_ctrl, p_new) if st.role == "Relay" else p_new
        st.paused = False
        self._send_fdcts(st)
