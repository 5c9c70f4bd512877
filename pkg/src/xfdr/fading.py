"""Block-fading field: one unit-mean exponential gain per (link, coherence
block), derived by hashing so that a gain depends only on the scenario seed,
the link and the time block, never on protocol execution order.
"""
from __future__ import annotations

import hashlib
import math
import struct


class FadingField:
    """Deterministic Rayleigh block-fading gains.

    The channel is symmetric: gain(i, j, t) == gain(j, i, t).  Gains are
    constant within a coherence block and independent across blocks.
    """

    def __init__(self, seed: int, stream: int, coherence_us: int, enabled: bool = True):
        self._key = struct.pack(">qq", seed, stream)
        self.coherence_us = int(coherence_us)
        self.enabled = enabled
        self._cache: dict[tuple[int, int, int], float] = {}

    def gain(self, i: int, j: int, t_us: int) -> float:
        if not self.enabled:
            return 1.0
        a, b = (i, j) if i < j else (j, i)
        block = t_us // self.coherence_us
        key = (a, b, block)
        g = self._cache.get(key)
        if g is None:
            h = hashlib.sha256(self._key + struct.pack(">iiq", a, b, block)).digest()
            u = int.from_bytes(h[:8], "big") / 2.0 ** 64
            g = -math.log1p(-u)
            self._cache[key] = g
        return g
