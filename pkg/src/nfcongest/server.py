"""UDP listener feeding a :class:`Collector` and a record file."""

from __future__ import annotations

import logging
import socket
import threading
import time

from .collector import Collector
from .records import RecordWriter

__all__ = ["BindFailure", "CollectorServer", "serve_udp", "parse_endpoint"]

log = logging.getLogger(__name__)

MAX_DATAGRAM = 65535


class BindFailure(OSError):
    pass


def parse_endpoint(text: str, default_port: int | None = None) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep:
        if default_port is None:
            raise ValueError(f"expected ip:port, got {text!r}")
        host, port = text, str(default_port)
    try:
        port_no = int(port)
    except ValueError:
        raise ValueError(f"bad port in {text!r}") from None
    if not 0 <= port_no <= 65535:
        raise ValueError(f"port {port_no} out of range")
    return host or "0.0.0.0", port_no


class CollectorServer:
    """Receive datagrams on one socket and process them on one thread.

    A single worker keeps per-stream processing in arrival order. The
    socket is bound in the constructor so that ``address`` is usable
    (port 0 picks a free port) before :meth:`serve_forever` starts.
    """

    poll_interval = 0.1

    def __init__(self, bind: tuple[str, int], sink: RecordWriter,
                 collector: Collector | None = None, clock=time.time):
        self.collector = collector or Collector()
        self.sink = sink
        self._clock = clock
        self._stop = threading.Event()
        self._lock = threading.Lock()
        self.datagrams = 0
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        try:
            sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 4 << 20)
            sock.bind(bind)
        except OSError as exc:
            sock.close()
            raise BindFailure(f"cannot bind {bind[0]}:{bind[1]}: {exc.strerror or exc}") from exc
        sock.settimeout(self.poll_interval)
        self._sock = sock
        self.address = sock.getsockname()

    def _now_ms(self) -> int:
        return int(self._clock() * 1000)

    def counters(self):
        with self._lock:
            return self.collector.totals()

    def serve_forever(self) -> None:
        try:
            while not self._stop.is_set():
                try:
                    data, (addr, _port) = self._sock.recvfrom(MAX_DATAGRAM)
                except socket.timeout:
                    with self._lock:
                        flows = self.collector.expire(self._now_ms())
                    self.sink.append(flows)
                    continue
                except OSError:
                    if self._stop.is_set():
                        break
                    raise
                with self._lock:
                    self.datagrams += 1
                    flows = self.collector.ingest(addr, data, self._now_ms())
                self.sink.append(flows)
        finally:
            self._finish()

    def _finish(self) -> None:
        # pick up whatever is still queued in the kernel before draining
        self._sock.setblocking(False)
        while True:
            try:
                data, (addr, _port) = self._sock.recvfrom(MAX_DATAGRAM)
            except OSError:
                break
            with self._lock:
                self.datagrams += 1
                self.sink.append(self.collector.ingest(addr, data, self._now_ms()))
        with self._lock:
            self.sink.append(self.collector.close())
        self._sock.close()
        self.sink.flush()
        log.info("collector stopped: %s", self.collector.totals().as_dict())

    def shutdown(self) -> None:
        self._stop.set()


def serve_udp(bind: tuple[str, int], sink: RecordWriter, stop: threading.Event | None = None,
              collector: Collector | None = None) -> CollectorServer:
    """Run a collector until ``stop`` is set (or forever without one)."""
    server = CollectorServer(bind, sink, collector)
    if stop is not None:
        server._stop = stop
    server.serve_forever()
    return server
