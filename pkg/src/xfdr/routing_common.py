"""Shared controller plumbing: per-node transmit queue with SIFS spacing,
contention access, and reliable control-frame delivery with R-ACK retries.
"""
from __future__ import annotations

from collections import deque
from typing import Optional

from .engine import Contender, Simulator
from .frames import Frame, FrameType


class NodeBase:
    """Base for per-node protocol controllers driven by the engine."""

    def __init__(self, sim: Simulator, idx: int):
        self.sim = sim
        self.idx = idx
        self.contender = Contender(sim, idx)
        self._txq: deque = deque()
        self._contq: deque = deque()
        self._contending = False

    # -- engine callbacks (overridden as needed) ---------------------------

    def on_app_flow(self, dst: int, packets):
        pass

    def on_frame(self, frame: Frame, meas_power: float):
        pass

    def on_rx_started(self, frame: Frame, t_end: int):
        pass

    def on_rx_failed(self, frame: Frame):
        pass

    def on_tx_done(self, frame: Frame):
        self._drain_txq()

    def active_route(self) -> Optional[list]:
        return None

    # -- transmit helpers ---------------------------------------------------

    def alive(self) -> bool:
        return self.sim.nodes[self.idx].alive

    def tx_free(self) -> bool:
        return self.sim.nodes[self.idx].tx is None

    def send_after_sifs(self, frame: Frame, **kw):
        """Queue a frame to go out SIFS after now (or after the current
        transmission ends); responses bypass contention."""
        self._txq.append((frame, kw))
        self.sim.schedule(self.sim.now + self.sim.scn.timing.sifs_us, self._drain_txq)

    def send_now(self, frame: Frame, **kw) -> bool:
        if not self.alive() or not self.tx_free():
            self._txq.append((frame, kw))
            return False
        return self.sim.transmit(self.idx, frame, **kw)

    def _drain_txq(self):
        if not self.alive() or not self._txq or not self.tx_free():
            return
        frame, kw = self._txq.popleft()
        self.sim.transmit(self.idx, frame, **kw)

    # -- contention helpers --------------------------------------------------

    def contend(self, cb, retry_count: int = 0):
        """Serialize CSMA/CA access requests through one contender."""
        self._contq.append((cb, retry_count))
        self._pump_contention()

    def _pump_contention(self):
        if self._contending or not self._contq or not self.alive():
            return
        cb, retry = self._contq.popleft()
        self._contending = True

        def granted():
            self._contending = False
            cb()
            self._pump_contention()

        self.contender.request(granted, retry)
