"""Router flow-cache simulator that emits NetFlow v5 datagrams.

Packets are aggregated by the seven key fields. A flow leaves the cache
when it has been idle longer than the inactive timeout or has lived
longer than the active timeout; expired entries are queued and packed
into datagrams of at most ``max_records_per_packet`` records.

Expiry is lazy: it runs whenever :meth:`Exporter.observe` or
:meth:`Exporter.tick` is called, so replays are fully deterministic.
"""

from __future__ import annotations

import csv
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple

from .wire import MAX_RECORDS, PacketHeader, WireFlowRecord, WirePacket, is_ipv4

__all__ = [
    "FlowKey",
    "ObservedPacket",
    "CacheEntry",
    "ExporterConfig",
    "Exporter",
    "OutOfOrderTrace",
    "ClockBeforeBoot",
    "TraceError",
    "TRACE_HEADER",
    "read_trace",
    "write_trace",
    "run_trace",
]

TCP_FIN = 0x01
TCP_RST = 0x04
_U32 = 0xFFFFFFFF

TRACE_HEADER = (
    "time_ms,src_ip,src_port,dst_ip,dst_port,proto,tos,tcp_flags,"
    "bytes,input_if,output_if,next_hop"
)


class OutOfOrderTrace(ValueError):
    pass


class ClockBeforeBoot(ValueError):
    pass


class TraceError(ValueError):
    """A trace file line could not be parsed."""

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class FlowKey(NamedTuple):
    src_addr: str
    dst_addr: str
    src_port: int
    dst_port: int
    protocol: int
    tos: int
    input_if: int


@dataclass(frozen=True)
class ObservedPacket:
    time_ms: int
    key: FlowKey
    byte_len: int
    tcp_flags: int = 0
    next_hop: str = "0.0.0.0"
    output_if: int = 0


@dataclass
class CacheEntry:
    key: FlowKey
    first_ms: int
    last_ms: int
    packets: int
    bytes: int
    tcp_flags_or: int
    next_hop: str
    output_if: int


@dataclass(frozen=True)
class ExporterConfig:
    exporter_addr: str = "127.0.0.1"
    engine_type: int = 0
    engine_id: int = 0
    inactive_timeout_ms: int = 15_000
    active_timeout_ms: int = 1_800_000
    boot_time_ms: int = 0
    max_records_per_packet: int = MAX_RECORDS
    flush_interval_ms: int = 1_000
    expire_on_fin_rst: bool = False

    def __post_init__(self):
        if not 1 <= self.max_records_per_packet <= MAX_RECORDS:
            raise ValueError(f"max_records_per_packet must be in 1..{MAX_RECORDS}")
        if self.inactive_timeout_ms <= 0 or self.active_timeout_ms <= 0:
            raise ValueError("timeouts must be positive")
        if self.flush_interval_ms < 0:
            raise ValueError("flush_interval_ms must be non-negative")


class Exporter:
    """One router's flow cache plus its export queue.

    Every public method returns the datagrams that became due at the
    given instant, in emission order.
    """

    def __init__(self, config: ExporterConfig | None = None):
        self.config = config or ExporterConfig()
        # ordered by last_ms (least recently updated first)
        self._cache: OrderedDict[FlowKey, CacheEntry] = OrderedDict()
        # creation order == first_ms order; stale items are skipped lazily
        self._by_age: deque[CacheEntry] = deque()
        self._queue: list[tuple[int, CacheEntry]] = []
        self._now: int | None = None
        self.flow_sequence = 0
        self.records_emitted = 0
        self.packets_emitted = 0

    def __len__(self):
        return len(self._cache)

    def entries(self) -> list[CacheEntry]:
        return list(self._cache.values())

    def _advance(self, now_ms: int) -> None:
        if now_ms < self.config.boot_time_ms:
            raise ClockBeforeBoot(f"t={now_ms} precedes boot time {self.config.boot_time_ms}")
        if self._now is not None and now_ms < self._now:
            raise OutOfOrderTrace(f"t={now_ms} is earlier than previous t={self._now}")
        self._now = now_ms

    def _expire(self, now_ms: int) -> None:
        cfg = self.config
        expired = []
        while self._cache:
            entry = next(iter(self._cache.values()))
            if now_ms - entry.last_ms <= cfg.inactive_timeout_ms:
                break
            del self._cache[entry.key]
            expired.append(entry)
        while self._by_age:
            entry = self._by_age[0]
            if self._cache.get(entry.key) is not entry:
                self._by_age.popleft()
                continue
            if now_ms - entry.first_ms <= cfg.active_timeout_ms:
                break
            self._by_age.popleft()
            del self._cache[entry.key]
            expired.append(entry)
        expired.sort(key=lambda e: (e.first_ms, e.last_ms, e.key))
        self._queue.extend((now_ms, e) for e in expired)

    def _evict(self, entry: CacheEntry, now_ms: int) -> None:
        del self._cache[entry.key]
        self._queue.append((now_ms, entry))

    def _pack(self, now_ms: int, force: bool = False) -> list[WirePacket]:
        size = self.config.max_records_per_packet
        out = []
        while len(self._queue) >= size:
            out.append(self._make_packet(now_ms, self._queue[:size]))
            del self._queue[:size]
        if self._queue and (force or now_ms - self._queue[0][0] >= self.config.flush_interval_ms):
            out.append(self._make_packet(now_ms, self._queue))
            self._queue = []
        return out

    def _make_packet(self, now_ms: int, queued) -> WirePacket:
        cfg = self.config
        boot = cfg.boot_time_ms
        records = tuple(
            WireFlowRecord(
                src_addr=e.key.src_addr,
                dst_addr=e.key.dst_addr,
                next_hop=e.next_hop,
                input_if=e.key.input_if,
                output_if=e.output_if,
                d_pkts=e.packets,
                d_octets=e.bytes,
                first_uptime_ms=e.first_ms - boot,
                last_uptime_ms=e.last_ms - boot,
                src_port=e.key.src_port,
                dst_port=e.key.dst_port,
                tcp_flags=e.tcp_flags_or,
                protocol=e.key.protocol,
                tos=e.key.tos,
            )
            for _, e in queued
        )
        header = PacketHeader(
            version=5,
            count=len(records),
            sys_uptime_ms=now_ms - boot,
            unix_secs=now_ms // 1000,
            unix_nsecs=(now_ms % 1000) * 1_000_000,
            flow_sequence=self.flow_sequence,
            engine_type=cfg.engine_type,
            engine_id=cfg.engine_id,
        )
        self.flow_sequence = (self.flow_sequence + len(records)) & _U32
        self.records_emitted += len(records)
        self.packets_emitted += 1
        return WirePacket(header, records)

    def observe(self, pkt: ObservedPacket) -> list[WirePacket]:
        now = pkt.time_ms
        self._advance(now)
        if pkt.byte_len < 1:
            raise ValueError(f"byte_len must be >= 1, got {pkt.byte_len}")
        self._expire(now)

        entry = self._cache.get(pkt.key)
        # a router exports before a 32-bit counter would wrap
        if entry is not None and (entry.bytes + pkt.byte_len > _U32 or entry.packets == _U32):
            self._evict(entry, now)
            entry = None
        if entry is None:
            entry = CacheEntry(
                key=pkt.key, first_ms=now, last_ms=now, packets=1, bytes=pkt.byte_len,
                tcp_flags_or=pkt.tcp_flags, next_hop=pkt.next_hop, output_if=pkt.output_if,
            )
            self._cache[pkt.key] = entry
            self._by_age.append(entry)
        else:
            entry.packets += 1
            entry.bytes += pkt.byte_len
            entry.last_ms = now
            entry.tcp_flags_or |= pkt.tcp_flags
            self._cache.move_to_end(pkt.key)

        if self.config.expire_on_fin_rst and pkt.tcp_flags & (TCP_FIN | TCP_RST):
            self._evict(entry, now)
        return self._pack(now)

    def tick(self, now_ms: int) -> list[WirePacket]:
        self._advance(now_ms)
        self._expire(now_ms)
        return self._pack(now_ms)

    def flush(self, now_ms: int) -> list[WirePacket]:
        """Export every cached and queued flow regardless of timeouts."""
        self._advance(now_ms)
        self._expire(now_ms)
        remaining = sorted(self._cache.values(), key=lambda e: (e.first_ms, e.last_ms, e.key))
        self._cache.clear()
        self._by_age.clear()
        self._queue.extend((now_ms, e) for e in remaining)
        return self._pack(now_ms, force=True)


def run_trace(packets: Iterable[ObservedPacket], config: ExporterConfig | None = None,
              tick_ms: int | None = None) -> tuple[Exporter, list[tuple[int, WirePacket]]]:
    """Replay a time-sorted trace through a fresh exporter.

    The cache is also ticked at every multiple of ``tick_ms`` (default:
    the flush interval) between observed packets, so idle flows leave
    the cache at the time a router would export them rather than at the
    next observed packet. Returns the exporter and (emit_ms, packet)
    pairs ending with the final flush.
    """
    exporter = Exporter(config)
    step = tick_ms if tick_ms is not None else exporter.config.flush_interval_ms
    emitted: list[tuple[int, WirePacket]] = []
    last = None
    for pkt in packets:
        if last is not None and step > 0:
            t = (last // step + 1) * step
            while t < pkt.time_ms:
                emitted.extend((t, p) for p in exporter.tick(t))
                t += step
        emitted.extend((pkt.time_ms, p) for p in exporter.observe(pkt))
        last = pkt.time_ms
    if last is not None:
        emitted.extend((last, p) for p in exporter.flush(last))
    return exporter, emitted


def _parse_trace_row(row: list[str]) -> ObservedPacket:
    if len(row) != 12:
        raise ValueError(f"expected 12 fields, got {len(row)}")
    t, sip, sport, dip, dport, proto, tos, flags, nbytes, in_if, out_if, nh = row
    for name, addr in (("src_ip", sip), ("dst_ip", dip), ("next_hop", nh)):
        if not is_ipv4(addr):
            raise ValueError(f"{name} {addr!r} is not a dotted-quad address")
    ints = [int(x) for x in (t, sport, dport, proto, tos, flags, nbytes, in_if, out_if)]
    t, sport, dport, proto, tos, flags, nbytes, in_if, out_if = ints
    limits = (("src_port", sport, 0xFFFF), ("dst_port", dport, 0xFFFF), ("proto", proto, 0xFF),
              ("tos", tos, 0xFF), ("tcp_flags", flags, 0xFF), ("input_if", in_if, 0xFFFF),
              ("output_if", out_if, 0xFFFF))
    for name, value, hi in limits:
        if not 0 <= value <= hi:
            raise ValueError(f"{name}={value} out of range 0..{hi}")
    if nbytes < 1:
        raise ValueError(f"bytes must be >= 1, got {nbytes}")
    if t < 0:
        raise ValueError(f"time_ms must be non-negative, got {t}")
    return ObservedPacket(t, FlowKey(sip, dip, sport, dport, proto, tos, in_if), nbytes,
                          flags, nh, out_if)


def read_trace(path) -> Iterator[ObservedPacket]:
    """Yield packets from a trace file, checking header and time order."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or ",".join(h.strip() for h in header) != TRACE_HEADER:
            raise TraceError(path, 1, f"missing header line {TRACE_HEADER!r}")
        prev = None
        for row in reader:
            lineno = reader.line_num
            if not row:
                continue
            try:
                pkt = _parse_trace_row([c.strip() for c in row])
            except ValueError as exc:
                raise TraceError(path, lineno, str(exc)) from None
            if prev is not None and pkt.time_ms < prev:
                raise TraceError(path, lineno, f"time_ms {pkt.time_ms} goes backwards (previous {prev})")
            prev = pkt.time_ms
            yield pkt


def write_trace(packets: Iterable[ObservedPacket], path) -> int:
    n = 0
    with open(path, "w", newline="") as fh:
        fh.write(TRACE_HEADER + "\n")
        for p in packets:
            k = p.key
            fh.write(f"{p.time_ms},{k.src_addr},{k.src_port},{k.dst_addr},{k.dst_port},"
                     f"{k.protocol},{k.tos},{p.tcp_flags},{p.byte_len},{k.input_if},"
                     f"{p.output_if},{p.next_hop}\n")
            n += 1
    return n
