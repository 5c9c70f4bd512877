"""Frame records, wire codec roundtrip, trace line format."""
import pytest
from hypothesis import given
from hypothesis import strategies as st

from xfdr.frames import (BROADCAST, Frame, FrameType, pack_frame, unpack_frame,
                         parse_trace_line, trace_line)


class TestSizes:
    def test_fd_cts_is_rts_plus_one_address(self):
        rts = Frame(kind=FrameType.RTS)
        fdcts = Frame(kind=FrameType.FD_CTS)
        assert fdcts.size_bytes() == rts.size_bytes() + 4

    def test_data_includes_header(self):
        f = Frame(kind=FrameType.DATA, payload_bits=8192)
        assert f.size_bytes() == 32 + 1024

    def test_rreq_grows_with_path(self):
        a = Frame(kind=FrameType.RREQ, path=(1,))
        b = Frame(kind=FrameType.RREQ, path=(1, 2, 3))
        assert b.size_bytes() == a.size_bytes() + 8


class TestWireCodec:
    def test_header_is_40_bytes(self):
        blob = pack_frame(Frame(kind=FrameType.RTS))
        assert len(blob) == 40

    def test_roundtrip_simple(self):
        f = Frame(kind=FrameType.DATA, origin=3, final=9, prev=4, next_hop=5,
                  seq=17, duration_us=4224, cost_pj=123456789, beta_min=10,
                  eq=True)
        g = unpack_frame(pack_frame(f))
        for attr in ("kind", "origin", "final", "prev", "next_hop", "seq",
                     "duration_us", "cost_pj", "beta_min", "eq"):
            assert getattr(g, attr) == getattr(f, attr)

    def test_roundtrip_path_payload(self):
        f = Frame(kind=FrameType.RREQ, origin=0, final=7, prev=2,
                  next_hop=BROADCAST, seq=3, path=(0, 4, 2))
        g = unpack_frame(pack_frame(f))
        assert g.path == (0, 4, 2)

    @given(kind=st.sampled_from(list(FrameType)),
           origin=st.integers(-1, 1000), final=st.integers(-1, 1000),
           seq=st.integers(0, 2 ** 31), cost=st.integers(0, 2 ** 60),
           beta=st.integers(0, 65535), eq=st.booleans(),
           path=st.lists(st.integers(0, 500), max_size=8))
    def test_roundtrip_property(self, kind, origin, final, seq, cost, beta, eq, path):
        f = Frame(kind=kind, origin=origin, final=final, seq=seq,
                  cost_pj=cost, beta_min=beta, eq=eq, path=tuple(path))
        g = unpack_frame(pack_frame(f))
        assert (g.kind, g.origin, g.final, g.seq, g.cost_pj, g.beta_min,
                g.eq, g.path) == (kind, origin, final, seq, cost, beta, eq, tuple(path))


class TestTraceLines:
    def test_format_and_parse(self):
        line = trace_line(1234, 5, "tx_start", "DATA", 5, 6, 42, 0.04)
        assert line == "1234,5,tx_start,DATA,5,6,42,40.000000"
        t, node, event, ftype, src, dst, seq, p = parse_trace_line(line)
        assert (t, node, event, ftype, src, dst, seq) == (1234, 5, "tx_start", "DATA", 5, 6, 42)
        assert p == pytest.approx(0.04)
