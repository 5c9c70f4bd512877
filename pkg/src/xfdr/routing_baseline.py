"""AODV and FD-AODV baselines sharing the engine and PHY.

AODV runs half-duplex radios: hop-count (first-arrival) discovery, RTS/CTS
plus a MAC-layer ACK for every data frame, store-and-forward relaying, full
rediscovery from the source on link breaks, everything at p_max.

FD-AODV runs full-duplex radios with immediate forwarding and one routing
ACK per packet per hop (window 1), no power control, no burst negotiation.
"""
from __future__ import annotations

from collections import deque
from dataclasses import replace
from typing import Optional

from .frames import BROADCAST, Frame, FrameType, stream_id
from .mac import airtime_us
from .routing_common import NodeBase


class _BaselineBase(NodeBase):
    """Discovery and routing-table plumbing shared by both baselines."""

    def __init__(self, sim, idx):
        super().__init__(sim, idx)
        scn = sim.scn
        self.rreq_seen: dict[tuple, int] = {}
        self.rreq_id = 0
        self.next_toward: dict[int, int] = {}
        self.path_toward: dict[int, tuple] = {}
        self.flow_dst = None
        self.queue: deque[int] = deque()
        self.seen_data: set[int] = set()
        self.discover_timer = None
        self.discover_tries = 0
        self.t_data = airtime_us(scn.packet_size_bytes + 32, scn.data_rate_bps)
        self.t_rts = airtime_us(20, scn.data_rate_bps)
        self.t_cts = airtime_us(14, scn.data_rate_bps)
        self.t_ackf = airtime_us(16, scn.data_rate_bps)
        self.t_rack = airtime_us(14, scn.data_rate_bps)

    def active_route(self):
        path = self.path_toward.get(self.flow_dst) if self.flow_dst is not None else None
        return list(path) if path else None

    # -- discovery: flood, destination answers the first arrival ---------------

    def _discover(self, dst: int):
        if not self.alive():
            return
        self.discover_tries += 1
        if self.discover_tries > 4:
            return
        self.rreq_id += 1
        rreq = Frame(kind=FrameType.RREQ, origin=self.idx, final=dst,
                     prev=self.idx, next_hop=BROADCAST, seq=self.rreq_id,
                     path=(self.idx,), retx=self.discover_tries > 1)
        self.contend(lambda: self.send_now(rreq))
        if self.discover_timer:
            self.discover_timer.cancel()
        self.discover_timer = self.sim.schedule(self.sim.now + 150_000,
                                                self._discover_timeout, dst)

    def _discover_timeout(self, dst: int):
        self.discover_timer = None
        if self.next_toward.get(dst) is None:
            self._discover(dst)

    def _handle_rreq(self, frame: Frame):
        key = (frame.origin, frame.seq)
        if frame.origin == self.idx or key in self.rreq_seen:
            return
        self.rreq_seen[key] = self.sim.now
        if self.idx in frame.path:
            return
        self.next_toward[frame.origin] = frame.prev
        if self.idx == frame.final:
            route = frame.path + (self.idx,)
            self.path_toward[frame.origin] = tuple(reversed(route))
            self._on_destination_reply(route)
            rrep = Frame(kind=FrameType.RREP, origin=frame.origin, final=self.idx,
                         prev=self.idx, next_hop=route[-2], path=route,
                         duration_us=200)
            self._send_rrep(rrep)
            return
        fwd = replace(frame, prev=self.idx, path=frame.path + (self.idx,))
        self.contend(lambda: self.send_now(fwd))

    def _learn_from_rrep(self, frame: Frame) -> int:
        """Update forward/reverse pointers; returns this node's path index."""
        route = frame.path
        i = route.index(self.idx)
        self.next_toward[frame.final] = route[i + 1] if i + 1 < len(route) else -1
        if i > 0:
            self.next_toward[frame.origin] = route[i - 1]
        self.path_toward[frame.final] = route
        return i

    def _route_established(self, dst: int):
        if self.discover_timer:
            self.discover_timer.cancel()
            self.discover_timer = None
        self.discover_tries = 0
        self.sim.note_route(self.idx, self.path_toward[dst])
        self._pump()

    def _invalidate(self, dst: int):
        self.next_toward.pop(dst, None)
        self.path_toward.pop(dst, None)

    def _pump(self):
        raise NotImplementedError

    def _send_rrep(self, frame: Frame):
        raise NotImplementedError

    def _on_destination_reply(self, route):
        pass


class AodvNode(_BaselineBase):
    """Half-duplex hop-count routing with a per-frame MAC ACK."""

    def __init__(self, sim, idx):
        super().__init__(sim, idx)
        self.txn = None   # dict: frame, use_rts, retries, stage, timer, on_done

    # -- application / pump ---------------------------------------------------

    def on_app_flow(self, dst: int, packets):
        self.flow_dst = dst
        self.queue.extend(packets)
        self._discover(dst)

    def _pump(self):
        if self.txn is not None or not self.queue or not self.alive():
            return
        dst = self.flow_dst
        nh = self.next_toward.get(dst)
        if nh is None:
            if self.discover_timer is None:
                self.discover_tries = 0
                self._discover(dst)
            return
        seq = self.queue[0]
        frame = Frame(kind=FrameType.DATA, origin=self.sim.src, final=dst,
                      prev=self.idx, next_hop=nh, seq=seq,
                      payload_bits=self.sim.scn.packet_size_bytes * 8,
                      duration_us=self.t_ackf + 2 * self.sim.scn.timing.sifs_us)
        self._start_txn(frame, use_rts=True, on_done=self._data_done)

    def _data_done(self, ok: bool, frame: Frame):
        if ok:
            if self.queue and self.queue[0] == frame.seq:
                self.queue.popleft()
            self._pump()
        else:
            self._link_broken(frame)

    def _link_broken(self, frame: Frame):
        dst = frame.final
        self.sim.mark_link_broken(self.idx, frame.next_hop)
        self._invalidate(dst)
        if self.idx == self.sim.src:
            self.discover_tries = 0
            self._discover(dst)
            return
        # report upstream; the source restarts discovery end to end
        up = self.next_toward.get(self.sim.src)
        if up is not None:
            rerr = Frame(kind=FrameType.RERR, origin=self.sim.src, final=dst,
                         prev=self.idx, next_hop=up,
                         path=(self.idx, frame.next_hop))
            self._start_txn(rerr, use_rts=False, on_done=lambda ok, f: None)
        self.queue.clear()

    # -- unicast MAC transaction: [RTS/CTS] FRAME / ACK with retries -----------

    def _start_txn(self, frame: Frame, use_rts: bool, on_done):
        if self.txn is not None:
            raise RuntimeError(f"node {self.idx}: MAC transaction already active")
        self.txn = {"frame": frame, "use_rts": use_rts, "retries": 0,
                    "stage": "idle", "timer": None, "done": on_done}
        self._attempt()

    def _attempt(self):
        txn = self.txn
        if txn is None or not self.alive():
            return
        txn["stage"] = "contend"

        def go():
            if self.txn is not txn:
                return
            if txn["use_rts"]:
                txn["stage"] = "rts"
                sifs = self.sim.scn.timing.sifs_us
                dur = (self.t_cts + self.t_data + self.t_ackf + 3 * sifs)
                rts = Frame(kind=FrameType.RTS, origin=txn["frame"].origin,
                            final=txn["frame"].final, prev=self.idx,
                            next_hop=txn["frame"].next_hop,
                            seq=txn["frame"].seq, duration_us=dur,
                            retx=txn["retries"] > 0)
                self.send_now(rts)
            else:
                txn["stage"] = "frame"
                self.send_now(replace(txn["frame"], retx=txn["retries"] > 0))

        self.contend(go, retry_count=txn["retries"])

    def _txn_fail_or_retry(self):
        txn = self.txn
        if txn is None:
            return
        txn["retries"] += 1
        if txn["retries"] > self.sim.scn.timing.retry_limit:
            frame, done = txn["frame"], txn["done"]
            self.txn = None
            done(False, frame)
            return
        self._attempt()

    def _txn_timeout(self, txn, stage):
        if self.txn is not txn or txn["stage"] != stage:
            return
        self._txn_fail_or_retry()

    def on_tx_done(self, frame: Frame):
        txn = self.txn
        sifs = self.sim.scn.timing.sifs_us
        if txn is not None:
            if txn["stage"] == "rts" and frame.kind == FrameType.RTS:
                t = self.sim.now + sifs + self.t_cts + 300
                self.sim.schedule(t, self._txn_timeout, txn, "rts")
                return
            if txn["stage"] == "frame" and frame.kind == txn["frame"].kind \
                    and frame.seq == txn["frame"].seq:
                t = self.sim.now + sifs + self.t_ackf + 300
                self.sim.schedule(t, self._txn_timeout, txn, "frame")
                return
        self._drain_txq()

    def on_frame(self, frame: Frame, meas_power: float):
        kind = frame.kind
        txn = self.txn
        sifs = self.sim.scn.timing.sifs_us
        if kind == FrameType.RREQ:
            self._handle_rreq(frame)
            return
        if frame.next_hop != self.idx:
            return
        if kind == FrameType.CTS:
            if txn is not None and txn["stage"] == "rts" \
                    and frame.prev == txn["frame"].next_hop:
                txn["stage"] = "frame"
                self.send_after_sifs(replace(txn["frame"], retx=txn["retries"] > 0))
            return
        if kind == FrameType.ACK:
            if txn is not None and txn["stage"] == "frame" \
                    and frame.prev == txn["frame"].next_hop \
                    and frame.seq == txn["frame"].seq:
                fr, done = txn["frame"], txn["done"]
                self.txn = None
                done(True, fr)
            return
        if kind == FrameType.RTS:
            nd = self.sim.nodes[self.idx]
            if nd.nav_until <= self.sim.now and self.txn is None:
                cts = Frame(kind=FrameType.CTS, prev=self.idx, next_hop=frame.prev,
                            seq=frame.seq, origin=frame.origin, final=frame.final,
                            duration_us=self.t_data + self.t_ackf + 2 * sifs)
                self.send_after_sifs(cts)
            return
        # unicast frames below get a MAC ACK
        mac_ack = Frame(kind=FrameType.ACK, prev=self.idx, next_hop=frame.prev,
                        seq=frame.seq, origin=frame.origin, final=frame.final)
        self.send_after_sifs(mac_ack)
        if kind == FrameType.DATA:
            self._accept_data(frame)
        elif kind == FrameType.RREP:
            i = self._learn_from_rrep(frame)
            if i == 0:
                self.flow_dst = frame.final
                self._route_established(frame.final)
            else:
                fwd = replace(frame, prev=self.idx, next_hop=frame.path[i - 1])
                self.sim.schedule(self.sim.now + sifs + self.t_ackf + 60,
                                  self._forward_ctrl, fwd)
        elif kind == FrameType.RERR:
            self._invalidate(frame.final)
            if self.idx == self.sim.src:
                self.flow_dst = frame.final
                self.discover_tries = 0
                self._discover(frame.final)
            else:
                up = self.next_toward.get(self.sim.src)
                if up is not None:
                    fwd = replace(frame, prev=self.idx, next_hop=up)
                    self.sim.schedule(self.sim.now + sifs + self.t_ackf + 60,
                                      self._forward_ctrl, fwd)

    def _forward_ctrl(self, frame: Frame):
        if self.txn is None:
            self._start_txn(frame, use_rts=False, on_done=self._ctrl_done)
        else:
            self.sim.schedule(self.sim.now + 2000, self._forward_ctrl, frame)

    def _ctrl_done(self, ok: bool, frame: Frame):
        self._pump()

    def _send_rrep(self, frame: Frame):
        self.sim.schedule(self.sim.now + 60, self._forward_ctrl, frame)

    def _accept_data(self, frame: Frame):
        if frame.seq in self.seen_data:
            return
        self.seen_data.add(frame.seq)
        if self.idx == frame.final:
            self.sim.deliver(self.idx, frame.seq)
            return
        self.flow_dst = frame.final
        self.queue.append(frame.seq)
        self._pump()


class FdAodvNode(_BaselineBase):
    """Hop-count routing on full-duplex radios: immediate forwarding and a
    routing ACK per packet per hop (cumulative sequence numbers), all at
    p_max, no power control.  The source paces the pipeline so each relay can
    interleave its per-packet ack between forwarded frames."""

    def __init__(self, sim, idx):
        super().__init__(sim, idx)
        self.stream = 0
        self.unacked: dict[int, int] = {}    # seq -> transmit count
        self.down_acked = 0
        self.hi_inorder = 0
        self.got: set[int] = set()
        self.fwd_pending: list[list] = []    # [seq, final, ready]
        self.pace_until = 0
        self.next_unsent = 0                 # index into self.queue (source)
        self.stall_timer = None
        self.stalls = 0
        self.ctrl_pending = None
        self.ack_gap = 2 * sim.scn.timing.sifs_us + self.t_ackf

    def _on_destination_reply(self, route):
        self.stream = stream_id(route[0])
        self.flow_dst = self.idx
        self._register(route)
        self.sim.set_exchange_peer(self.idx, route[-2])

    def on_app_flow(self, dst: int, packets):
        self.flow_dst = dst
        self.queue.extend(packets)
        self.stream = stream_id(self.idx)
        self._discover(dst)

    def _register(self, route):
        members = self.sim.stream_members.get(self.stream, set()) | set(route)
        self.sim.register_stream(self.stream, members)

    def _pump(self):
        # source-side pacing: keep the pipeline fed, at most beta outstanding
        if not self.alive() or self.idx != self.sim.src:
            return
        dst = self.flow_dst
        nh = self.next_toward.get(dst)
        if nh is None:
            if self.discover_timer is None:
                self.discover_tries = 0
                self._discover(dst)
            return
        if not self.tx_free() or self._txq or self.sim.now < self.pace_until:
            return
        if self.next_unsent >= len(self.queue) \
                or len(self.unacked) >= self.sim.scn.beta_packets:
            return
        seq = self.queue[self.next_unsent]
        self.next_unsent += 1
        self.unacked[seq] = 1
        self._tx_data(seq, nh, dst, retx=False)
        self._arm_stall()

    def _tx_data(self, seq: int, nh: int, dst: int, retx: bool):
        frame = Frame(kind=FrameType.DATA, origin=self.sim.src, final=dst,
                      prev=self.idx, next_hop=nh, seq=seq,
                      payload_bits=self.sim.scn.packet_size_bytes * 8,
                      duration_us=self.ack_gap, stream=self.stream, retx=retx)
        self.send_now(frame)

    # -- receiver side ---------------------------------------------------------

    def on_rx_started(self, frame: Frame, t_end: int):
        if self.idx == frame.final or frame.next_hop != self.idx:
            return
        pipe = airtime_us(32, self.sim.scn.data_rate_bps)
        self.fwd_pending.append([frame.seq, frame.final, False])
        self.sim.schedule(self.sim.now + pipe, self._fwd_ready, frame.seq)

    def _fwd_ready(self, seq: int):
        for item in self.fwd_pending:
            if item[0] == seq:
                item[2] = True
        self._try_forward()

    def _try_forward(self):
        if not self.alive() or not self.tx_free() or self._txq:
            return
        while self.fwd_pending:
            seq, final, ready = self.fwd_pending[0]
            if not ready:
                return
            if seq <= self.down_acked:
                self.fwd_pending.pop(0)
                continue
            nh = self.next_toward.get(final)
            if nh is None:
                return  # pointer refresh (rediscovery) will restart us
            self.fwd_pending.pop(0)
            self.flow_dst = final
            self.unacked[seq] = self.unacked.get(seq, 0) + 1
            self._tx_data(seq, nh, final, retx=False)
            self._arm_stall()
            return

    def on_rx_failed(self, frame: Frame):
        if frame.kind != FrameType.DATA:
            return
        nd = self.sim.nodes[self.idx]
        if nd.tx is not None and nd.tx.frame.kind == FrameType.DATA \
                and nd.tx.frame.seq == frame.seq:
            # relaying a truncated copy: stop it
            self.sim.abort_tx(self.idx)
        self.fwd_pending = [it for it in self.fwd_pending if it[0] != frame.seq]

    def on_tx_done(self, frame: Frame):
        if frame.kind == FrameType.DATA and frame.prev == self.idx:
            if self.idx == self.sim.src:
                # leave room for the per-packet acks of the hops below
                self.pace_until = self.sim.now + self.ack_gap
                self.sim.schedule(self.pace_until, self._pump)
            else:
                # one cumulative ack per forwarded packet, then the next frame
                self._send_hop_ack()
            return
        self._drain_txq()
        if not self._txq:
            self._try_forward()
            if self.idx == self.sim.src:
                self._pump()

    def _send_hop_ack(self):
        up = self.next_toward.get(self.sim.src)
        if up is not None and self.hi_inorder > 0:
            ack = Frame(kind=FrameType.ACK, prev=self.idx, next_hop=up,
                        seq=self.hi_inorder, origin=self.sim.src,
                        final=self.flow_dst, stream=self.stream)
            self.send_after_sifs(ack)
        else:
            self._try_forward()

    # -- supervision ------------------------------------------------------------

    def _arm_stall(self):
        if self.stall_timer:
            self.stall_timer.cancel()
        self.stall_timer = self.sim.schedule(
            self.sim.now + self.t_data + 2000, self._stalled, self.down_acked)

    def _stalled(self, acked_then: int):
        self.stall_timer = None
        if not self.unacked or not self.alive():
            return
        if self.down_acked > acked_then:
            self.stalls = 0
            self._arm_stall()
            return
        self.stalls += 1
        nh = self.next_toward.get(self.flow_dst)
        if self.stalls > self.sim.scn.timing.retry_limit or nh is None:
            self.stalls = 0
            self._link_broken(nh, self.flow_dst)
            return
        seq = min(self.unacked)
        self.unacked[seq] += 1
        if self.tx_free() and not self._txq:
            self._tx_data(seq, nh, self.flow_dst, retx=True)
        self._arm_stall()

    def _link_broken(self, nh, dst):
        if self.stall_timer:
            self.stall_timer.cancel()
            self.stall_timer = None
        if nh is not None:
            self.sim.mark_link_broken(self.idx, nh)
        self._invalidate(dst)
        if self.idx == self.sim.src:
            self.discover_tries = 0
            self._discover(dst)
            return
        up = self.next_toward.get(self.sim.src)
        if up is not None:
            rerr = Frame(kind=FrameType.RERR, origin=self.sim.src, final=dst,
                         prev=self.idx, next_hop=up, path=(self.idx, nh or -1))
            self._send_ctrl(rerr)
        # the buffered packets stay; a refreshed route pointer resumes them

    # -- reliable control frames (R-ACK confirmed; no MAC ACKs in FD mode) -----

    def _send_ctrl(self, frame: Frame, tries: int = 0):
        self.ctrl_pending = (frame, tries)
        wire = replace(frame, retx=tries > 0)
        self.contend(lambda: self.send_now(wire), retry_count=tries)
        self.sim.schedule(self.sim.now + 6000 * (tries + 1),
                          self._ctrl_timeout, frame, tries)

    def _ctrl_timeout(self, frame: Frame, tries: int):
        if self.ctrl_pending is None or self.ctrl_pending[0] is not frame \
                or self.ctrl_pending[1] != tries:
            return
        if tries + 1 < self.sim.scn.r_ack_retries:
            self._send_ctrl(frame, tries + 1)
        else:
            self.ctrl_pending = None

    def _send_rrep(self, frame: Frame):
        self._send_ctrl(frame)

    # -- dispatch ----------------------------------------------------------------

    def on_frame(self, frame: Frame, meas_power: float):
        kind = frame.kind
        sifs = self.sim.scn.timing.sifs_us
        if kind == FrameType.RREQ:
            self._handle_rreq(frame)
            return
        if frame.next_hop != self.idx:
            if kind in (FrameType.DATA, FrameType.RREP) and frame.final != self.idx:
                nd = self.sim.nodes[self.idx]
                nd.nav_until = max(nd.nav_until, self.sim.now + frame.duration_us)
            return
        if kind == FrameType.DATA:
            self.stream = frame.stream
            self.flow_dst = frame.final
            if frame.seq > self.down_acked and frame.seq not in self.got:
                self.got.add(frame.seq)
                while self.hi_inorder + 1 in self.got:
                    self.hi_inorder += 1
            if self.idx == frame.final:
                self.sim.deliver(self.idx, frame.seq)
                ack = Frame(kind=FrameType.ACK, prev=self.idx, next_hop=frame.prev,
                            seq=self.hi_inorder, origin=frame.origin,
                            final=frame.final, stream=frame.stream)
                self.send_after_sifs(ack)
            return
        if kind == FrameType.ACK:
            if frame.seq > self.down_acked:
                self.down_acked = frame.seq
                for s in [s for s in self.unacked if s <= frame.seq]:
                    del self.unacked[s]
                self.stalls = 0
                if self.idx == self.sim.src:
                    self._pump()
            return
        if kind == FrameType.R_ACK:
            if self.ctrl_pending is not None \
                    and frame.prev == self.ctrl_pending[0].next_hop:
                self.ctrl_pending = None
            return
        rack = Frame(kind=FrameType.R_ACK, prev=self.idx, next_hop=frame.prev,
                     seq=frame.seq, origin=frame.origin, final=frame.final)
        self.send_after_sifs(rack)
        if kind == FrameType.RREP:
            i = self._learn_from_rrep(frame)
            self.stream = stream_id(frame.origin)
            self._register(frame.path)
            self.sim.set_exchange_peer(self.idx, frame.prev)
            if i + 1 < len(frame.path):
                self.sim.set_exchange_peer(self.idx, frame.path[i + 1])
            if i > 0:
                self.sim.set_exchange_peer(self.idx, frame.path[i - 1])
            if i == 0:
                self.flow_dst = frame.final
                self._route_established(frame.final)
            else:
                self.flow_dst = frame.final
                fwd = replace(frame, prev=self.idx, next_hop=frame.path[i - 1])
                self.sim.schedule(self.sim.now + sifs + self.t_rack + 60,
                                  self._send_ctrl, fwd)
                if self.unacked:
                    self.stalls = 0
                    self._arm_stall()
                self._try_forward()
        elif kind == FrameType.RERR:
            self._invalidate(frame.final)
            if self.idx == self.sim.src:
                self.flow_dst = frame.final
                self.discover_tries = 0
                self._discover(frame.final)
            else:
                up = self.next_toward.get(self.sim.src)
                if up is not None:
                    fwd = replace(frame, prev=self.idx, next_hop=up)
                    self.sim.schedule(self.sim.now + sifs + self.t_rack + 60,
                                      self._send_ctrl, fwd)
