"""NetFlow v5 datagram encoder/decoder.

Header (24 bytes) and records (48 bytes each) are big-endian::

    header: version, count, sys_uptime, unix_secs, unix_nsecs,
            flow_sequence, engine_type, engine_id, sampling_interval
    record: srcaddr, dstaddr, nexthop, input, output, dPkts, dOctets,
            first, last, srcport, dstport, pad1, tcp_flags, prot, tos,
            src_as, dst_as, src_mask, dst_mask, pad2

Pads are skipped on decode and written as zero on encode.
"""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass
from typing import NamedTuple

__all__ = [
    "HEADER_LEN",
    "RECORD_LEN",
    "MAX_RECORDS",
    "PacketHeader",
    "WireFlowRecord",
    "WirePacket",
    "CodecError",
    "Truncated",
    "BadVersion",
    "BadCount",
    "LengthMismatch",
    "InvalidPacket",
    "decode_packet",
    "encode_packet",
    "ip_to_int",
    "int_to_ip",
    "is_ipv4",
]

VERSION = 5
HEADER_LEN = 24
RECORD_LEN = 48
MAX_RECORDS = 30

_HEADER = struct.Struct("!HHIIIIBBH")
# "x" skips pad1 on decode / writes zero on encode; "2x" does the same for pad2
_RECORD = struct.Struct("!IIIHHIIIIHHxBBBHHBB2x")


class CodecError(ValueError):
    """Base class for every wire-format failure."""


class Truncated(CodecError):
    pass


class BadVersion(CodecError):
    pass


class BadCount(CodecError):
    pass


class LengthMismatch(CodecError):
    pass


class InvalidPacket(CodecError):
    """Raised by encode_packet when a packet breaks a type invariant."""


def ip_to_int(addr: str) -> int:
    return int.from_bytes(socket.inet_aton(addr), "big")


def int_to_ip(value: int) -> str:
    return socket.inet_ntoa(value.to_bytes(4, "big"))


def is_ipv4(addr) -> bool:
    """Strict dotted-quad check (inet_aton alone accepts "10.1" and friends)."""
    if not isinstance(addr, str):
        return False
    try:
        return socket.inet_ntoa(socket.inet_aton(addr)) == addr
    except OSError:
        return False


class PacketHeader(NamedTuple):
    version: int
    count: int
    sys_uptime_ms: int
    unix_secs: int
    unix_nsecs: int
    flow_sequence: int
    engine_type: int = 0
    engine_id: int = 0
    sampling_interval: int = 0


class WireFlowRecord(NamedTuple):
    src_addr: str
    dst_addr: str
    next_hop: str
    input_if: int
    output_if: int
    d_pkts: int
    d_octets: int
    first_uptime_ms: int
    last_uptime_ms: int
    src_port: int
    dst_port: int
    tcp_flags: int
    protocol: int
    tos: int
    src_as: int = 0
    dst_as: int = 0
    src_mask: int = 0
    dst_mask: int = 0


@dataclass(frozen=True)
class WirePacket:
    header: PacketHeader
    records: tuple[WireFlowRecord, ...]


def _validate_header(h: PacketHeader, n_records: int) -> None:
    if h.version != VERSION:
        raise InvalidPacket(f"version must be {VERSION}, got {h.version}")
    if not 1 <= h.count <= MAX_RECORDS:
        raise InvalidPacket(f"count must be in 1..{MAX_RECORDS}, got {h.count}")
    if n_records != h.count:
        raise InvalidPacket(f"header count {h.count} != {n_records} records")
    if not 0 <= h.unix_nsecs < 1_000_000_000:
        raise InvalidPacket(f"unix_nsecs {h.unix_nsecs} outside 0..10^9-1")


def _addr(rec_no: int, name: str, addr) -> int:
    try:
        raw = socket.inet_aton(addr)
        if socket.inet_ntoa(raw) == addr:
            return int.from_bytes(raw, "big")
    except (OSError, TypeError):
        pass
    raise InvalidPacket(f"record {rec_no}: {name} {addr!r} is not a dotted-quad IPv4 address")


def encode_packet(packet: WirePacket) -> bytes:
    """Encode a packet; field widths are enforced by ``struct`` itself."""
    h = packet.header
    _validate_header(h, len(packet.records))
    try:
        out = [_HEADER.pack(*h)]
    except struct.error as exc:
        raise InvalidPacket(f"header: {exc}") from None
    for i, r in enumerate(packet.records):
        if r.first_uptime_ms > r.last_uptime_ms:
            raise InvalidPacket(f"record {i}: first_uptime_ms > last_uptime_ms")
        if r.d_pkts < 1 or r.d_octets < r.d_pkts:
            raise InvalidPacket(f"record {i}: need d_pkts >= 1 and d_octets >= d_pkts")
        try:
            out.append(_RECORD.pack(
                _addr(i, "src_addr", r.src_addr), _addr(i, "dst_addr", r.dst_addr),
                _addr(i, "next_hop", r.next_hop), *r[3:],
            ))
        except struct.error as exc:
            raise InvalidPacket(f"record {i}: {exc}") from None
    return b"".join(out)


def decode_packet(data: bytes) -> WirePacket:
    """Decode one datagram.

    Only framing is checked here (length, version, count); record
    contents are returned as found so that a collector can decide what
    to do with odd values.
    """
    if len(data) < HEADER_LEN:
        raise Truncated(f"{len(data)} bytes is shorter than the {HEADER_LEN}-byte header")
    header = PacketHeader(*_HEADER.unpack_from(data, 0))
    if header.version != VERSION:
        raise BadVersion(f"version {header.version}, expected {VERSION}")
    if not 1 <= header.count <= MAX_RECORDS:
        raise BadCount(f"count {header.count} outside 1..{MAX_RECORDS}")
    expected = HEADER_LEN + RECORD_LEN * header.count
    if len(data) != expected:
        raise LengthMismatch(f"{len(data)} bytes, header count implies {expected}")

    ntoa = socket.inet_ntoa
    records = []
    for off in range(HEADER_LEN, expected, RECORD_LEN):
        v = _RECORD.unpack_from(data, off)
        records.append(WireFlowRecord(
            ntoa(data[off:off + 4]), ntoa(data[off + 4:off + 8]), ntoa(data[off + 8:off + 12]),
            *v[3:],
        ))
    return WirePacket(header, tuple(records))
