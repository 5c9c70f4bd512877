"""Protocol frame records, nominal over-the-air sizes, the binary wire codec
used when frames are serialized into trace artifacts, and the text trace line
format.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum


class FrameType(IntEnum):
    RTS = 1
    FD_CTS = 2
    CTS = 3        # baseline half-duplex MAC only
    DATA = 4
    ACK = 5        # MAC ack (AODV) or routing burst/packet ack (FD modes)
    RREQ = 6
    RREP = 7
    R_ACK = 8
    RERR = 9
    RUPD = 10


BROADCAST = -1


def stream_id(origin: int) -> int:
    """Nonzero stream identifier derived from the flow's source node;
    zero marks frames that belong to no established stream."""
    return origin + 1

# Nominal over-the-air sizes in bytes used for airtime computations.  RREQ and
# RREP additionally carry 4 bytes per recorded hop.
BASE_SIZE_BYTES = {
    FrameType.RTS: 20,
    FrameType.FD_CTS: 24,   # RTS plus one more address
    FrameType.CTS: 14,
    FrameType.ACK: 16,
    FrameType.RREQ: 24,
    FrameType.RREP: 24,
    FrameType.R_ACK: 14,
    FrameType.RERR: 20,
    FrameType.RUPD: 24,
}
DATA_HEADER_BYTES = 32


@dataclass
class Frame:
    """A typed protocol message.

    prev/next_hop are the per-hop transmitter and intended receiver; origin
    and final are the stream endpoints.  seq doubles as the data sequence
    number or a control correlator (e.g. the RREQ id).  cost_pj carries the
    accumulated route cost in picojoules; beta_min the negotiated burst
    window in packets; eq flags the final packet of a short burst.
    """
    kind: FrameType
    origin: int = BROADCAST
    final: int = BROADCAST
    prev: int = BROADCAST
    next_hop: int = BROADCAST
    seq: int = 0
    duration_us: int = 0
    cost_pj: int = 0
    beta_min: int = 0
    eq: bool = False
    win_end: int = 0      # last sequence number of the current burst window
    payload_bits: int = 0
    stream: int = 0
    path: tuple = ()      # RREQ/RREP accumulated route
    retx: bool = False    # marks any re-transmission for accounting

    def size_bytes(self) -> int:
        if self.kind == FrameType.DATA:
            return DATA_HEADER_BYTES + (self.payload_bits + 7) // 8
        extra = 4 * len(self.path) if self.kind in (FrameType.RREQ, FrameType.RREP) else 0
        return BASE_SIZE_BYTES[self.kind] + extra


_WIRE = struct.Struct(">BiiiiIIQHBI")  # 40-byte fixed header


def pack_frame(frame: Frame) -> bytes:
    """Serialize a frame to the fixed wire format plus path payload.

    Layout: type (1), origin/final/prev/next (4 x 4, signed), seq (4),
    duration us (4), accumulated cost picojoules (8), beta_min packets (2),
    flags (1: bit0 EQ), payload length (4), then payload bytes (the RREQ/RREP
    path as big-endian int32s).
    """
    payload = b"".join(struct.pack(">i", n) for n in frame.path)
    head = _WIRE.pack(
        int(frame.kind), frame.origin, frame.final, frame.prev, frame.next_hop,
        frame.seq, frame.duration_us, frame.cost_pj, frame.beta_min,
        1 if frame.eq else 0, len(payload),
    )
    return head + payload


def unpack_frame(blob: bytes) -> Frame:
    """Inverse of pack_frame (payload_bits and stream are not on the wire)."""
    kind, origin, final, prev, nxt, seq, dur, cost, beta, flags, plen = _WIRE.unpack_from(blob)
    payload = blob[_WIRE.size:_WIRE.size + plen]
    path = tuple(struct.unpack(">i", payload[i:i + 4])[0] for i in range(0, plen, 4))
    return Frame(
        kind=FrameType(kind), origin=origin, final=final, prev=prev,
        next_hop=nxt, seq=seq, duration_us=dur, cost_pj=cost, beta_min=beta,
        eq=bool(flags & 1), path=path,
    )


# Trace events.  One line per frame event:
#   time_us,node,event,frame_type,src,dst,seq,power_mw
EV_ENQUEUE = "enqueue"
EV_DELIVER = "deliver"
EV_TX_START = "tx_start"
EV_TX_RETX = "tx_retx_start"
EV_TX_END = "tx_end"
EV_TX_ABORT = "tx_abort"
EV_RX_OK = "rx_ok"
EV_RX_FAIL = "rx_fail"
EV_POWER = "power"
EV_NODE_FAIL = "node_fail"
EV_LINK_BROKEN = "link_broken"
EV_ROUTE = "route"

TRACE_SCHEMA = "time_us,node,event,frame_type,src,dst,seq,power_mw"


def trace_line(t_us: int, node: int, event: str, ftype: str, src: int,
               dst: int, seq: int, power_w: float) -> str:
    return f"{t_us},{node},{event},{ftype},{src},{dst},{seq},{power_w * 1e3:.6f}"


def parse_trace_line(line: str) -> tuple:
    t, node, event, ftype, src, dst, seq, power_mw = line.split(",")
    return (int(t), int(node), event, ftype, int(src), int(dst), int(seq),
            float(power_mw) * 1e-3)
