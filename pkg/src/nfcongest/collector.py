"""Sequence-corrected NetFlow v5 ingestion.

Each exporter stream (source address, engine type, engine id) tracks a
frontier: the next flow_sequence it expects. Datagrams at the frontier
are accepted, datagrams ahead of it wait in a bounded reorder buffer,
and datagrams behind it are duplicates. A buffered datagram that has
waited longer than the reorder window (or that overflows the buffer) is
accepted anyway and the skipped sequence range is booked as lost.

All sequence arithmetic is modulo 2**32 with a 2**31 comparison window.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, fields
from typing import NamedTuple

from .records import NormalizedFlow
from .wire import CodecError, PacketHeader, WireFlowRecord, WirePacket, decode_packet

__all__ = [
    "StreamId",
    "Counters",
    "StreamState",
    "Collector",
    "NegativeTime",
    "normalize_record",
    "seq_add",
    "seq_diff",
    "seq_lt",
]

log = logging.getLogger(__name__)

SEQ_MOD = 1 << 32
_HALF = 1 << 31


def seq_add(a: int, n: int) -> int:
    return (a + n) % SEQ_MOD


def seq_diff(a: int, b: int) -> int:
    """Forward distance from a to b."""
    return (b - a) % SEQ_MOD


def seq_lt(a: int, b: int) -> bool:
    return 0 < seq_diff(a, b) < _HALF


class NegativeTime(ValueError):
    pass


class StreamId(NamedTuple):
    exporter_addr: str
    engine_type: int
    engine_id: int


@dataclass
class Counters:
    flows_accepted: int = 0
    flows_lost: int = 0
    duplicate_packets: int = 0
    reordered_packets: int = 0
    overlap_packets: int = 0
    decode_errors: int = 0

    def __iadd__(self, other: "Counters"):
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self

    def as_dict(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class _Pending:
    arrival_ms: int
    packet: WirePacket
    flows: list[NormalizedFlow]


@dataclass
class StreamState:
    frontier: int | None = 0
    reorder_buffer: dict[int, _Pending] = field(default_factory=dict)
    accepted_ranges: deque = field(default_factory=lambda: deque(maxlen=1024))
    counters: Counters = field(default_factory=Counters)


def normalize_record(header: PacketHeader, rec: WireFlowRecord, exporter: StreamId) -> NormalizedFlow:
    boot_ms = header.unix_secs * 1000 + header.unix_nsecs // 1_000_000 - header.sys_uptime_ms
    first = boot_ms + rec.first_uptime_ms
    last = boot_ms + rec.last_uptime_ms
    if first < 0 or last < 0:
        raise NegativeTime(f"record time {min(first, last)} ms is before the epoch")
    return NormalizedFlow(
        exporter=exporter.exporter_addr,
        engine_type=exporter.engine_type,
        engine_id=exporter.engine_id,
        src_addr=rec.src_addr,
        src_port=rec.src_port,
        dst_addr=rec.dst_addr,
        dst_port=rec.dst_port,
        protocol=rec.protocol,
        tos=rec.tos,
        tcp_flags=rec.tcp_flags,
        input_if=rec.input_if,
        output_if=rec.output_if,
        next_hop=rec.next_hop,
        packets=rec.d_pkts,
        bytes=rec.d_octets,
        first_ms=first,
        last_ms=last,
        src_as=rec.src_as,
        dst_as=rec.dst_as,
    )


def _usable(rec: WireFlowRecord) -> bool:
    return rec.first_uptime_ms <= rec.last_uptime_ms and 1 <= rec.d_pkts <= rec.d_octets


class Collector:
    """Per-stream sequence tracking for any number of exporters.

    ``initial_frontier=None`` makes a new stream start at the first
    sequence number it sees, which suits collectors that join exporters
    already running. The default of 0 assumes exporters start with the
    collector, so losses and reordering at the very start are caught.
    """

    def __init__(self, reorder_window_ms: int = 2000, max_buffered: int = 64,
                 initial_frontier: int | None = 0):
        self.reorder_window_ms = reorder_window_ms
        self.max_buffered = max_buffered
        self.initial_frontier = initial_frontier
        self.streams: dict[StreamId, StreamState] = {}
        # datagrams that cannot be attributed to a stream
        self.decode_errors = 0

    def stream(self, sid: StreamId) -> StreamState:
        st = self.streams.get(sid)
        if st is None:
            st = self.streams[sid] = StreamState(frontier=self.initial_frontier)
            log.info("new stream %s/%d/%d", *sid)
        return st

    def totals(self) -> Counters:
        total = Counters(decode_errors=self.decode_errors)
        for st in self.streams.values():
            total += st.counters
        return total

    def ingest(self, source_addr: str, data: bytes, arrival_ms: int) -> list[NormalizedFlow]:
        try:
            packet = decode_packet(data)
        except CodecError as exc:
            self.decode_errors += 1
            log.debug("undecodable datagram from %s: %s", source_addr, exc)
            return []
        h = packet.header
        sid = StreamId(source_addr, h.engine_type, h.engine_id)
        st = self.stream(sid)
        try:
            if not all(_usable(r) for r in packet.records):
                raise ValueError("record violates counter/time invariants")
            flows = [normalize_record(h, r, sid) for r in packet.records]
        except ValueError as exc:
            st.counters.decode_errors += 1
            log.debug("rejecting datagram from %s: %s", source_addr, exc)
            return []

        out: list[NormalizedFlow] = []
        self._classify(st, _Pending(arrival_ms, packet, flows), out)
        self._expire(st, arrival_ms, out)
        return out

    def _classify(self, st: StreamState, item: _Pending, out: list) -> None:
        c = st.counters
        seq = item.packet.header.flow_sequence
        count = item.packet.header.count
        end = seq_add(seq, count)
        if st.frontier is None:
            st.frontier = seq
        front = st.frontier

        if seq == front:
            if self._hits_accepted(st, seq, end):
                c.duplicate_packets += 1
                return
            self._accept(st, item, out)
            self._drain(st, out)
            return
        if seq_lt(seq, front):
            c.duplicate_packets += 1
            # straddles the frontier: part old, part new
            if seq_lt(front, end):
                c.overlap_packets += 1
            return
        if self._hits_accepted(st, seq, end):
            c.duplicate_packets += 1
            return
        for other_seq, other in st.reorder_buffer.items():
            other_end = seq_add(other_seq, other.packet.header.count)
            if self._overlaps(seq, end, other_seq, other_end):
                c.duplicate_packets += 1
                if other_seq != seq or other_end != end:
                    c.overlap_packets += 1
                return
        st.reorder_buffer[seq] = item
        c.reordered_packets += 1
        while len(st.reorder_buffer) > self.max_buffered:
            self._force_next(st, out)

    @staticmethod
    def _overlaps(a0, a1, b0, b1) -> bool:
        # half-open serial intervals [a0, a1) and [b0, b1)
        return seq_diff(b0, a0) < seq_diff(b0, b1) or seq_diff(a0, b0) < seq_diff(a0, a1)

    def _hits_accepted(self, st, seq, end) -> bool:
        return any(self._overlaps(seq, end, lo, hi) for lo, hi in st.accepted_ranges)

    def _accept(self, st: StreamState, item: _Pending, out: list) -> None:
        seq = item.packet.header.flow_sequence
        end = seq_add(seq, item.packet.header.count)
        st.accepted_ranges.append((seq, end))
        st.frontier = end
        st.counters.flows_accepted += len(item.flows)
        out.extend(item.flows)

    def _drain(self, st: StreamState, out: list) -> None:
        while st.frontier in st.reorder_buffer:
            self._accept(st, st.reorder_buffer.pop(st.frontier), out)

    def _force_next(self, st: StreamState, out: list) -> None:
        """Give up on the gap before the lowest buffered datagram."""
        seq = min(st.reorder_buffer, key=lambda s: seq_diff(st.frontier, s))
        st.counters.flows_lost += seq_diff(st.frontier, seq)
        st.frontier = seq
        self._drain(st, out)

    def _expire(self, st: StreamState, now_ms: int, out: list) -> None:
        window = self.reorder_window_ms
        while st.reorder_buffer and any(now_ms - p.arrival_ms > window
                                        for p in st.reorder_buffer.values()):
            self._force_next(st, out)

    def expire(self, now_ms: int) -> list[NormalizedFlow]:
        """Apply the reorder window to every stream without new input."""
        out: list[NormalizedFlow] = []
        for st in self.streams.values():
            self._expire(st, now_ms, out)
        return out

    def close(self, final_sequences: dict[StreamId, int] | None = None) -> list[NormalizedFlow]:
        """Drain every reorder buffer.

        ``final_sequences`` maps a stream to the exporter's sequence
        number after its last datagram, when that is known (an orderly
        exporter shutdown); records missing before it count as lost.
        """
        out: list[NormalizedFlow] = []
        for sid, st in self.streams.items():
            while st.reorder_buffer:
                self._force_next(st, out)
        for sid, final in (final_sequences or {}).items():
            st = self.stream(sid)
            if st.frontier is None:
                st.frontier = final
            elif seq_lt(st.frontier, final):
                st.counters.flows_lost += seq_diff(st.frontier, final)
                st.frontier = final
        return out
