"""Normalized flow records and the comma-separated record file."""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass, fields
from typing import Iterable

from .wire import is_ipv4

__all__ = [
    "NormalizedFlow",
    "RECORD_HEADER",
    "RecordFileError",
    "ParseError",
    "MissingHeader",
    "IoFailure",
    "RecordWriter",
    "write_records",
    "read_records",
    "format_record",
]

RECORD_HEADER = (
    "exporter,engine_type,engine_id,src_ip,src_port,dst_ip,dst_port,proto,tos,"
    "tcp_flags,input_if,output_if,next_hop,packets,bytes,first_ms,last_ms"
)


class RecordFileError(ValueError):
    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class ParseError(RecordFileError):
    pass


class MissingHeader(RecordFileError):
    pass


class IoFailure(OSError):
    pass


@dataclass(frozen=True, slots=True)
class NormalizedFlow:
    """One exported flow with absolute Unix-ms timestamps (UTC)."""

    exporter: str
    engine_type: int
    engine_id: int
    src_addr: str
    src_port: int
    dst_addr: str
    dst_port: int
    protocol: int
    tos: int
    tcp_flags: int
    input_if: int
    output_if: int
    next_hop: str
    packets: int
    bytes: int
    first_ms: int
    last_ms: int
    src_as: int = 0
    dst_as: int = 0

    @property
    def conversation(self) -> tuple[str, int, str, int]:
        return (self.src_addr, self.src_port, self.dst_addr, self.dst_port)

    @property
    def link(self) -> tuple[str, str]:
        return (self.exporter, self.next_hop)


_FIELDS = [f.name for f in fields(NormalizedFlow)][:17]
_IP_COLUMNS = {0, 3, 5, 12}


def format_record(flow: NormalizedFlow) -> str:
    return ",".join([str(getattr(flow, name)) for name in _FIELDS])


def _parse_line(text: str) -> NormalizedFlow:
    cols = text.split(",")
    if len(cols) != 17:
        raise ValueError(f"expected 17 fields, got {len(cols)}")
    values = []
    for i, col in enumerate(cols):
        col = col.strip()
        if i in _IP_COLUMNS:
            if not is_ipv4(col):
                raise ValueError(f"{_FIELDS[i]} {col!r} is not a dotted-quad address")
            values.append(col)
        else:
            try:
                v = int(col)
            except ValueError:
                raise ValueError(f"{_FIELDS[i]} {col!r} is not an integer") from None
            if v < 0:
                raise ValueError(f"{_FIELDS[i]} must be non-negative")
            values.append(v)
    flow = NormalizedFlow(*values)
    if flow.first_ms > flow.last_ms:
        raise ValueError("first_ms > last_ms")
    if flow.packets < 1 or flow.bytes < flow.packets:
        raise ValueError("need packets >= 1 and bytes >= packets")
    return flow


class RecordWriter:
    """Append-only sink; writes the header when the file is new or empty.

    ``append`` is safe to call from several threads, each record line is
    written whole.
    """

    def __init__(self, path, truncate: bool = False):
        self.path = os.fspath(path)
        self._lock = threading.Lock()
        try:
            self._fh = open(self.path, "w" if truncate else "a", newline="")
            if self._fh.tell() == 0:
                self._fh.write(RECORD_HEADER + "\n")
        except OSError as exc:
            raise IoFailure(f"{self.path}: {exc.strerror or exc}") from exc
        self.written = 0

    def append(self, flows: Iterable[NormalizedFlow]) -> int:
        lines = "".join(format_record(f) + "\n" for f in flows)
        if not lines:
            return 0
        n = lines.count("\n")
        with self._lock:
            try:
                self._fh.write(lines)
            except OSError as exc:
                raise IoFailure(f"{self.path}: {exc.strerror or exc}") from exc
            self.written += n
        return n

    def flush(self):
        with self._lock:
            self._fh.flush()

    def close(self):
        with self._lock:
            if not self._fh.closed:
                try:
                    self._fh.close()
                except OSError as exc:
                    raise IoFailure(f"{self.path}: {exc.strerror or exc}") from exc

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_records(flows: Iterable[NormalizedFlow], path) -> int:
    with RecordWriter(path) as w:
        return w.append(flows)


def read_records(path) -> list[NormalizedFlow]:
    path = os.fspath(path)
    out = []
    with open(path, newline="") as fh:
        first = fh.readline()
        if first.rstrip("\r\n") != RECORD_HEADER:
            raise MissingHeader(path, 1, f"first line must be {RECORD_HEADER!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\r\n")
            if not line:
                continue
            try:
                out.append(_parse_line(line))
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
    return out
