"""Deterministic discrete-event simulation core.

Time is integer microseconds.  The event queue pops in (time, insertion seq)
order, so identical scenarios and seeds replay bit-identically.  The channel
keeps the set of active transmissions; every transmission start, end, power
level change and fading epoch boundary re-evaluates the SINR of all in-flight
receptions and latches a failure the moment SINR dips below the decode
threshold.

Reception model, in order:
  - a receiver locks onto a frame at its start if it is radio-capable (alive,
    not half-duplex-transmitting, not already locked) and either the
    fading-averaged received power p_tx * d^-alpha clears zeta_th (preamble
    detection) or the transmitter is a registered exchange peer (the receiver
    was told to expect it during handshake);
  - the frame decodes iff SINR >= theta at every instant of the reception;
  - nodes relaying an established stream cancel that stream's own frames
    (data and its acks) out of their interference sums: the data is a replica
    of bits the node itself buffered and forwarded, and the short
    acknowledgments are synchronized, known-format frames of the captured
    exchange, so the machinery that suppresses self-interference removes
    them too.  Self-interference from the node's own transmitter is always
    charged through the RSI model, and frames from outside the stream
    interfere honestly;
  - a node busy receiving stream data can concurrently detect one short
    acknowledgment of the same exchange addressed to it (a dedicated control
    correlator); everything else needs the primary lock.

Half-duplex radios never receive while transmitting; full-duplex radios do,
paying RSI in every concurrent SINR evaluation.
"""
from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import phy as phymod
from .config import Scenario, ScenarioError, FAILURE_POSITIONS
from .fading import FadingField
from .frames import (
    BROADCAST, Frame, FrameType,
    EV_ENQUEUE, EV_DELIVER, EV_TX_START, EV_TX_RETX, EV_TX_END, EV_TX_ABORT,
    EV_RX_OK, EV_RX_FAIL, EV_POWER, EV_NODE_FAIL, EV_LINK_BROKEN, EV_ROUTE,
    trace_line, TRACE_SCHEMA,
)
from .mac import MacTiming, airtime_us, backoff_slots, excursion_boundaries, tx_power_at


def place_nodes(n: int, region_side: float, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. uniform positions in the square region; deterministic under seed."""
    if n < 2:
        raise ScenarioError("N >= 2 required")
    return rng.uniform(0.0, region_side, size=(n, 2))


class Timer:
    __slots__ = ("cancelled",)

    def __init__(self):
        self.cancelled = False

    def cancel(self):
        self.cancelled = True


@dataclass
class Transmission:
    node: int
    frame: Frame
    power: float
    t0: int
    t_end: int
    p_ctrl: Optional[float] = None   # excursion schedule when set
    anchor: int = 0
    last_t: int = 0
    energy: float = 0.0
    active: bool = True
    end_timer: Optional[Timer] = None


@dataclass
class Reception:
    node: int
    tx_node: int
    trans: Transmission
    frame: Frame
    t0: int
    t_end: int
    ok: bool = True
    ctrl: bool = False    # control-correlator slot beside a primary lock
    end_timer: Optional[Timer] = None


class _NodeRt:
    """Per-node radio runtime state."""
    __slots__ = ("idx", "fd", "alive", "tx", "rx", "rx_ctrl", "nav_until",
                 "eifs_until", "energy_tx", "tx_time_us", "exchange_peers",
                 "rng", "fail_time", "busy", "busy_lock")

    def __init__(self, idx: int, fd: bool, rng: random.Random):
        self.idx = idx
        self.fd = fd
        self.alive = True
        self.tx: Optional[Transmission] = None
        self.rx: Optional[Reception] = None
        self.rx_ctrl: Optional[Reception] = None
        self.nav_until = 0
        self.eifs_until = 0
        self.energy_tx = 0.0
        self.tx_time_us = 0
        self.exchange_peers: set[int] = set()
        self.rng = rng
        self.fail_time: Optional[int] = None
        self.busy = False
        self.busy_lock = False


class Contender:
    """CSMA/CA channel access for one node: NAV/EIFS deferral, DIFS plus
    binary-exponential backoff with freeze on busy."""

    def __init__(self, sim: "Simulator", node: int):
        self.sim = sim
        self.node = node
        self.pending: Optional[Callable[[], None]] = None
        self.slots = 0
        self._grant_timer: Optional[Timer] = None
        self._difs_start = 0

    def request(self, on_grant: Callable[[], None], retry_count: int = 0):
        if self.pending is not None:
            raise RuntimeError(f"node {self.node}: contention already pending")
        self.pending = on_grant
        nd = self.sim.nodes[self.node]
        self.slots = backoff_slots(nd.rng, retry_count, self.sim.scn.timing)
        self.sim.add_watcher(self.node, self._on_channel)
        self._arm()

    def cancel(self):
        self.pending = None
        if self._grant_timer:
            self._grant_timer.cancel()
            self._grant_timer = None
        self.sim.remove_watcher(self.node)

    def _arm(self):
        if self.pending is None:
            return
        sim, nd = self.sim, self.sim.nodes[self.node]
        if self._grant_timer:
            self._grant_timer.cancel()
            self._grant_timer = None
        if nd.rx is not None:
            # defer until the ongoing reception completes
            self._grant_timer = sim.schedule(nd.rx.t_end + 1, self._arm)
            return
        if sim.node_busy(self.node):
            return  # watcher will call back on the idle transition
        start = max(sim.now, nd.nav_until, nd.eifs_until)
        if start > sim.now:
            self._grant_timer = sim.schedule(start, self._arm)
            return
        timing = sim.scn.timing
        self._difs_start = sim.now
        self._grant_timer = sim.schedule(
            sim.now + timing.difs_us + self.slots * timing.slot_us, self._grant)

    def _on_channel(self, busy: bool):
        if self.pending is None:
            return
        timing = self.sim.scn.timing
        if busy:
            if self._grant_timer:
                elapsed = self.sim.now - (self._difs_start + timing.difs_us)
                if elapsed > 0:
                    self.slots = max(0, self.slots - elapsed // timing.slot_us)
                self._grant_timer.cancel()
                self._grant_timer = None
        else:
            self._arm()

    def _grant(self):
        sim, nd = self.sim, self.sim.nodes[self.node]
        if self.pending is None:
            return
        if sim.node_busy(self.node) or nd.rx is not None or \
                max(nd.nav_until, nd.eifs_until) > sim.now:
            self._arm()
            return
        cb = self.pending
        self.pending = None
        sim.remove_watcher(self.node)
        cb()


class Simulator:
    """One deterministic simulation instance of a Scenario iteration."""

    def __init__(self, scn: Scenario, iteration: int = 0,
                 positions: Optional[np.ndarray] = None,
                 flow: Optional[tuple[int, int]] = None):
        self.scn = scn
        self.iteration = iteration
        self.now = 0
        self._heap: list = []
        self._seq = 0
        self.trace: list[tuple] = []

        ss = np.random.SeedSequence(entropy=scn.seed, spawn_key=(iteration,))
        topo_ss, traffic_ss, mac_ss = ss.spawn(3)
        topo_rng = np.random.default_rng(topo_ss)
        self.positions = positions if positions is not None else \
            place_nodes(scn.nodes, scn.region_side_m, topo_rng)
        n = len(self.positions)
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        self.dist = np.sqrt((diff ** 2).sum(axis=2))
        with np.errstate(divide="ignore"):
            dp = np.where(self.dist > 0, self.dist, np.inf) ** (-scn.phy.alpha)
        self._dpow = dp.tolist()
        self.dist_l = self.dist.tolist()

        mac_seeds = mac_ss.generate_state(n)
        fd = scn.protocol in ("XFDR", "FDAODV")
        self.nodes = [_NodeRt(i, fd, random.Random(int(mac_seeds[i]))) for i in range(n)]

        self.fading = FadingField(scn.seed, iteration, scn.fading_coherence_us,
                                  scn.fading_enabled)

        traffic_rng = np.random.default_rng(traffic_ss)
        if flow is not None:
            self.src, self.dst = flow
        else:
            self.src, self.dst = self._pick_flow(traffic_rng)

        self.expected_packets = scn.packet_count
        self.delivered: dict[int, int] = {}
        self.enqueued: dict[int, int] = {}
        self.aborted = False
        self.scenario_error: Optional[str] = None
        self.end_time = 0

        self._transmitting: dict[int, Transmission] = {}
        self._receptions: list[Reception] = []
        self._watchers: dict[int, Callable[[bool], None]] = {}
        self.stream_members: dict[int, set[int]] = {}
        self._loss_remaining = {(p, nx, s): c for (p, nx, s, c) in scn.loss_script}
        self._epoch_armed = False
        self.max_time_us = int(scn.max_sim_time_s * 1e6)

        from .routing_xfdr import XfdrNode
        from .routing_baseline import AodvNode, FdAodvNode
        cls = {"XFDR": XfdrNode, "AODV": AodvNode, "FDAODV": FdAodvNode}[scn.protocol]
        self.controllers = [cls(self, i) for i in range(n)]

    # -- setup ------------------------------------------------------------

    def _pick_flow(self, rng: np.random.Generator) -> tuple[int, int]:
        """Random source/destination pair among pairs that can communicate
        (connected at the control lock range), honoring the minimum pair
        distance when one is configured."""
        n = len(self.positions)
        phy = self.scn.phy
        lock_range = (phy.p_max / phy.zeta_th) ** (1.0 / phy.alpha)
        adj = (self.dist > 0) & (self.dist <= lock_range)
        best, best_d = (0, 1), -1.0
        for _ in range(2000):
            a, b = rng.choice(n, size=2, replace=False)
            a, b = int(a), int(b)
            d = self.dist_l[a][b]
            if not self._connected(adj, a, b):
                continue
            if d > best_d:
                best, best_d = (a, b), d
            if d >= self.scn.min_pair_distance_m:
                return a, b
        return best

    @staticmethod
    def _connected(adj, a: int, b: int) -> bool:
        seen = {a}
        frontier = [a]
        while frontier:
            nxt = []
            for v in frontier:
                for w in np.nonzero(adj[v])[0]:
                    w = int(w)
                    if w not in seen:
                        if w == b:
                            return True
                        seen.add(w)
                        nxt.append(w)
            frontier = nxt
        return False

    # -- event queue -------------------------------------------------------

    def schedule(self, t_us: int, fn: Callable, *args) -> Timer:
        if t_us < self.now:
            raise RuntimeError(f"event scheduled in the past: {t_us} < {self.now}")
        timer = Timer()
        self._seq += 1
        heapq.heappush(self._heap, (int(t_us), self._seq, timer, fn, args))
        return timer

    def run(self):
        scn = self.scn
        for seq in range(1, self.expected_packets + 1):
            self.enqueued[seq] = scn.flow_start_us
            self._trace(scn.flow_start_us, self.src, EV_ENQUEUE, "DATA",
                        self.src, self.dst, seq, 0.0)
        if scn.failure_time_us is not None:
            self.schedule(scn.failure_time_us, self._inject_failure)
        self.schedule(scn.flow_start_us, self._start_flow)

        deadline = None
        while self._heap:
            t, _, timer, fn, args = heapq.heappop(self._heap)
            if timer.cancelled:
                continue
            if t > self.max_time_us:
                self.aborted = True
                break
            if deadline is not None and t > deadline:
                break
            self.now = t
            fn(*args)
            if deadline is None and len(self.delivered) >= self.expected_packets:
                # flow complete; let the trailing acks and teardown settle
                deadline = self.now + 100_000
        self.end_time = self.now
        return self

    def _start_flow(self):
        packets = list(range(1, self.expected_packets + 1))
        self.controllers[self.src].on_app_flow(self.dst, packets)

    # -- failure injection ---------------------------------------------------

    def resolve_failure_target(self) -> int:
        scn = self.scn
        if scn.failure_node is not None:
            node = scn.failure_node
            if node >= len(self.nodes) or node in (self.src, self.dst):
                raise ScenarioError("failure node must exist and not be source/destination")
            return node
        route = self.controllers[self.src].active_route()
        if route is None or len(route) < 3:
            raise ScenarioError("failure tag unresolvable: no multi-hop route at injection time")
        relays = route[1:-1]
        tag = scn.failure_position
        if tag == "after-source":
            return route[1]
        if tag == "before-destination":
            return route[-2]
        if tag == "middle":
            return route[len(route) // 2]
        raise ScenarioError(f"unknown failure position {tag!r}")

    def _inject_failure(self):
        try:
            node = self.resolve_failure_target()
        except ScenarioError as e:
            self.scenario_error = str(e)
            return
        nd = self.nodes[node]
        nd.alive = False
        nd.fail_time = self.now
        self._trace(self.now, node, EV_NODE_FAIL, "-", -1, -1, 0, 0.0)
        if nd.tx is not None:
            self.abort_tx(node)
        for rec in [r for r in self._receptions if r.node == node]:
            if rec.end_timer:
                rec.end_timer.cancel()
            self._receptions.remove(rec)
        nd.rx = None
        nd.rx_ctrl = None

    # -- radio: transmission ---------------------------------------------

    def transmit(self, node: int, frame: Frame, power_w: Optional[float] = None,
                 p_ctrl: Optional[float] = None, anchor: Optional[int] = None,
                 retx: bool = False) -> bool:
        """Start sending a frame.  Either a constant power_w, or an excursion
        schedule (p_ctrl plus the anchor time of the data phase)."""
        nd = self.nodes[node]
        if not nd.alive:
            return False
        if nd.tx is not None:
            raise RuntimeError(f"node {node} already transmitting")
        if not nd.fd and nd.rx is not None:
            # half-duplex radio switches to transmit; the reception is lost
            self._finish_rx(nd.rx, force_fail=True)
        scn = self.scn
        dur = airtime_us(frame.size_bytes(), scn.data_rate_bps)
        if p_ctrl is not None:
            if anchor is None or anchor > self.now:
                anchor = self.now
            power = tx_power_at(self.now - anchor, p_ctrl, scn.phy.p_max, scn.timing)
        else:
            power = scn.phy.p_max if power_w is None else power_w
        trans = Transmission(node, frame, power, self.now, self.now + dur,
                             p_ctrl=p_ctrl, anchor=anchor or 0, last_t=self.now)
        trans.end_timer = self.schedule(trans.t_end, self._end_tx, trans)
        nd.tx = trans
        self._transmitting[node] = trans
        self._trace(self.now, node, EV_TX_RETX if (retx or frame.retx) else EV_TX_START,
                    frame.kind.name, node, frame.next_hop, frame.seq, power)
        if p_ctrl is not None:
            for when, at_max in excursion_boundaries(self.now, trans.t_end,
                                                     trans.anchor, scn.timing):
                self.schedule(when, self._toggle_power, trans, at_max)
        self._lock_receivers(trans)
        self._channel_changed()
        self._arm_epoch()
        return True

    def abort_tx(self, node: int):
        nd = self.nodes[node]
        trans = nd.tx
        if trans is None:
            return
        self._account_tx(trans)
        trans.active = False
        if trans.end_timer:
            trans.end_timer.cancel()
        nd.tx = None
        del self._transmitting[node]
        self._trace(self.now, node, EV_TX_ABORT, trans.frame.kind.name,
                    node, trans.frame.next_hop, trans.frame.seq, trans.power)
        # truncated frame: all of its receptions fail immediately
        for rec in [r for r in self._receptions if r.trans is trans]:
            self._finish_rx(rec, force_fail=True)
        self._channel_changed()

    def _toggle_power(self, trans: Transmission, at_max: bool):
        if not trans.active:
            return
        self._account_tx(trans)
        scn = self.scn
        trans.power = scn.phy.p_max if at_max else trans.p_ctrl
        self._trace(self.now, trans.node, EV_POWER, trans.frame.kind.name,
                    trans.node, trans.frame.next_hop, trans.frame.seq, trans.power)
        self._channel_changed()

    def _account_tx(self, trans: Transmission):
        dt = self.now - trans.last_t
        if dt > 0:
            trans.energy += trans.power * dt * 1e-6
            trans.last_t = self.now

    def _end_tx(self, trans: Transmission):
        if not trans.active:
            return
        self._account_tx(trans)
        trans.active = False
        nd = self.nodes[trans.node]
        nd.energy_tx += trans.energy
        nd.tx_time_us += self.now - trans.t0
        nd.tx = None
        del self._transmitting[trans.node]
        self._trace(self.now, trans.node, EV_TX_END, trans.frame.kind.name,
                    trans.node, trans.frame.next_hop, trans.frame.seq, trans.power)
        self._channel_changed()
        self.controllers[trans.node].on_tx_done(trans.frame)

    # -- radio: reception ---------------------------------------------------

    def _lock_receivers(self, trans: Transmission):
        scn = self.scn
        frame = trans.frame
        tx = trans.node
        for m, nd in enumerate(self.nodes):
            if m == tx or not nd.alive:
                continue
            if nd.rx is not None and nd.rx.t_end <= self.now:
                # back-to-back frames: finalize the reception ending right now
                # so the radio is free for the next lock decision
                self._end_rx_now(nd.rx)
            if not nd.fd and nd.tx is not None:
                continue
            if frame.stream and frame.next_hop != m \
                    and frame.next_hop != BROADCAST \
                    and m in self.stream_members.get(frame.stream, ()):
                # members of an established exchange stay synchronized to it
                # and do not chase the stream's frames for other hops; their
                # radio stays free for their own traffic
                continue
            ctrl = False
            if nd.rx is not None:
                # the control correlator picks up one concurrent short ack of
                # an exchange this node is part of
                if not (frame.kind == FrameType.ACK and frame.next_hop == m
                        and tx in nd.exchange_peers and nd.rx_ctrl is None
                        and m in self.stream_members.get(frame.stream, ())):
                    continue
                ctrl = True
            mean_rx = trans.power * self._dpow[tx][m]
            if mean_rx < scn.phy.zeta_th and tx not in nd.exchange_peers:
                continue
            rec = Reception(m, tx, trans, frame, self.now, trans.t_end, ctrl=ctrl)
            rec.end_timer = self.schedule(trans.t_end, self._end_rx, rec)
            if ctrl:
                nd.rx_ctrl = rec
            else:
                nd.rx = rec
            self._receptions.append(rec)
            if nd.idx in self._watchers:
                nd.busy_lock = True
            self._eval_reception(rec)
            if frame.kind == FrameType.DATA and frame.next_hop == m:
                self.controllers[m].on_rx_started(frame, trans.t_end)

    def _interference_at(self, rx_node: int, signal_tx: int) -> float:
        total = 0.0
        for a, tr in self._transmitting.items():
            if a == rx_node or a == signal_tx:
                continue
            if tr.frame.kind in (FrameType.DATA, FrameType.ACK) \
                    and tr.frame.stream \
                    and rx_node in self.stream_members.get(tr.frame.stream, ()):
                continue
            total += tr.power * self.fading.gain(a, rx_node, self.now) * self._dpow[a][rx_node]
        return total

    def _eval_reception(self, rec: Reception):
        if not rec.ok or rec.t_end <= self.now:
            return
        scn = self.scn
        nd = self.nodes[rec.node]
        sig = rec.trans.power * self.fading.gain(rec.tx_node, rec.node, self.now) \
            * self._dpow[rec.tx_node][rec.node]
        rsi = phymod.residual_si_power(nd.tx.power, scn.phy) if nd.tx is not None else 0.0
        interference = self._interference_at(rec.node, rec.tx_node)
        s = phymod.sinr(sig, rsi, interference, scn.phy.n0)
        if not phymod.decode_ok(s, scn.phy.sinr_decode_threshold):
            rec.ok = False

    def _finish_rx(self, rec: Reception, force_fail: bool = False):
        if rec.end_timer:
            rec.end_timer.cancel()
        if force_fail:
            rec.ok = False
        self._conclude_rx(rec)

    def _end_rx(self, rec: Reception):
        self._eval_reception(rec)
        self._conclude_rx(rec)

    def _end_rx_now(self, rec: Reception):
        if rec.end_timer:
            rec.end_timer.cancel()
        self._eval_reception(rec)
        self._conclude_rx(rec)

    def _conclude_rx(self, rec: Reception):
        nd = self.nodes[rec.node]
        if rec in self._receptions:
            self._receptions.remove(rec)
        if nd.rx is rec:
            nd.rx = None
        if nd.rx_ctrl is rec:
            nd.rx_ctrl = None
        if not nd.alive:
            return
        frame = rec.frame
        ok = rec.ok
        if ok and frame.kind == FrameType.DATA:
            key = (rec.tx_node, rec.node, frame.seq)
            left = self._loss_remaining.get(key, 0)
            if left > 0:
                self._loss_remaining[key] = left - 1
                ok = False
        scn = self.scn
        addressed = frame.next_hop == rec.node or frame.next_hop == BROADCAST
        meas = rec.trans.power * self.fading.gain(rec.tx_node, rec.node, self.now) \
            * self._dpow[rec.tx_node][rec.node]
        if ok:
            if addressed:
                self._trace(self.now, rec.node, EV_RX_OK, frame.kind.name,
                            rec.tx_node, frame.next_hop, frame.seq, meas)
                self.controllers[rec.node].on_frame(frame, meas)
            else:
                nd.nav_until = max(nd.nav_until, self.now + frame.duration_us)
        else:
            if addressed:
                self._trace(self.now, rec.node, EV_RX_FAIL, frame.kind.name,
                            rec.tx_node, frame.next_hop, frame.seq, meas)
            nd.eifs_until = max(nd.eifs_until, self.now + scn.timing.eifs_us)
            self.controllers[rec.node].on_rx_failed(frame)

    # -- carrier sensing ----------------------------------------------------

    def sensed_power(self, node: int) -> float:
        total = 0.0
        for a, tr in self._transmitting.items():
            if a == node:
                continue
            total += tr.power * self.fading.gain(a, node, self.now) * self._dpow[a][node]
        return total

    def node_busy(self, node: int) -> bool:
        return phymod.carrier_sensed(self.sensed_power(node), self.scn.phy.cs_threshold)

    def add_watcher(self, node: int, cb: Callable[[bool], None]):
        self._watchers[node] = cb
        nd = self.nodes[node]
        nd.busy = self.node_busy(node)
        nd.busy_lock = nd.rx is not None

    def remove_watcher(self, node: int):
        self._watchers.pop(node, None)

    def _channel_changed(self):
        for rec in list(self._receptions):
            self._eval_reception(rec)
        if not self._watchers:
            return
        timing = self.scn.timing
        for node, cb in list(self._watchers.items()):
            nd = self.nodes[node]
            busy = self.node_busy(node)
            if busy == nd.busy:
                continue
            nd.busy = busy
            if busy:
                nd.busy_lock = nd.rx is not None
            else:
                if not nd.busy_lock:
                    # energy sensed but nothing decodable: defer EIFS
                    nd.eifs_until = max(nd.eifs_until, self.now + timing.eifs_us)
            cb(busy)

    def _arm_epoch(self):
        if self._epoch_armed or not self.scn.fading_enabled:
            return
        nxt = (self.now // self.scn.fading_coherence_us + 1) * self.scn.fading_coherence_us
        self._epoch_armed = True
        self.schedule(nxt, self._epoch_tick)

    def _epoch_tick(self):
        self._epoch_armed = False
        self._channel_changed()
        if self._transmitting:
            self._arm_epoch()

    # -- services for controllers -------------------------------------------

    def frame_airtime(self, frame: Frame) -> int:
        return airtime_us(frame.size_bytes(), self.scn.data_rate_bps)

    def set_exchange_peer(self, node: int, peer: int, enable: bool = True):
        peers = self.nodes[node].exchange_peers
        if enable:
            peers.add(peer)
        else:
            peers.discard(peer)

    def register_stream(self, stream: int, members) -> None:
        self.stream_members[stream] = set(members)

    def deliver(self, node: int, seq: int):
        if node != self.dst or seq in self.delivered:
            return
        self.delivered[seq] = self.now
        self._trace(self.now, node, EV_DELIVER, "DATA", self.src, self.dst, seq, 0.0)

    def mark_link_broken(self, node: int, peer: int):
        self._trace(self.now, node, EV_LINK_BROKEN, "-", node, peer, 0, 0.0)

    def note_route(self, node: int, route) -> None:
        self._trace(self.now, node, EV_ROUTE, "-", route[0], route[-1],
                    len(route) - 1, 0.0)

    def measured_mean_power(self, tx: int, rx: int, p_tx: float) -> float:
        return p_tx * self._dpow[tx][rx]

    # -- bookkeeping -------------------------------------------------------

    def _trace(self, t, node, event, ftype, src, dst, seq, power_w):
        self.trace.append((t, node, event, ftype, src, dst, seq, power_w))

    def rx_on_energy(self, node: int) -> float:
        """Receiver-chain energy: on whenever alive, except while a
        half-duplex radio is transmitting."""
        nd = self.nodes[node]
        span = (nd.fail_time if nd.fail_time is not None else self.end_time)
        if not nd.fd:
            span -= nd.tx_time_us
        return self.scn.p_rx_on_w * max(span, 0) * 1e-6

    def total_energy(self, node: int) -> float:
        return self.nodes[node].energy_tx + self.rx_on_energy(node)

    def trace_lines(self):
        yield f"# scenario_hash={self.scn.digest()} iteration={self.iteration}"
        yield f"# schema={TRACE_SCHEMA}"
        for t, node, event, ftype, src, dst, seq, power_w in self.trace:
            yield trace_line(t, node, event, ftype, src, dst, seq, power_w)
