import socket
import threading

import pytest

from nfcongest.collector import Collector
from nfcongest.exporter import ExporterConfig, run_trace
from nfcongest.records import RecordWriter, read_records
from nfcongest.server import BindFailure, CollectorServer, parse_endpoint
from nfcongest.tracegen import generate_trace
from nfcongest.wire import encode_packet

pytestmark = pytest.mark.network


def start(tmp_path, **kw):
    sink = RecordWriter(tmp_path / "out.csv")
    server = CollectorServer(("127.0.0.1", 0), sink, Collector(**kw))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, sink, thread


def stop(server, sink, thread):
    server.shutdown()
    thread.join(5)
    sink.close()


def test_loopback_zero_faults(tmp_path):
    trace = generate_trace(n_packets=5000, n_hosts=40, n_flows=300, seed=8, duration_ms=600_000)
    exporter, emitted = run_trace(trace, ExporterConfig(boot_time_ms=trace[0].time_ms))
    server, sink, thread = start(tmp_path)
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
        for _, p in emitted:
            s.sendto(encode_packet(p), server.address)
        s.sendto(b"garbage", server.address)
    stop(server, sink, thread)
    c = server.counters().as_dict()
    assert c.pop("flows_accepted") == exporter.records_emitted
    assert c.pop("decode_errors") == 1
    assert set(c.values()) == {0}
    assert len(read_records(tmp_path / "out.csv")) == exporter.records_emitted


def test_shutdown_drains_reorder_buffer(tmp_path):
    trace = generate_trace(n_packets=500, n_hosts=10, n_flows=80, seed=1, duration_ms=60_000)
    _, emitted = run_trace(trace, ExporterConfig(boot_time_ms=trace[0].time_ms))
    assert len(emitted) >= 2
    server, sink, thread = start(tmp_path, reorder_window_ms=60_000)
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
        for _, p in emitted[1:]:
            s.sendto(encode_packet(p), server.address)
    stop(server, sink, thread)
    c = server.counters()
    assert c.flows_lost == emitted[0][1].header.count
    assert len(read_records(tmp_path / "out.csv")) == c.flows_accepted


def test_bind_failure(tmp_path):
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
        s.bind(("127.0.0.1", 0))
        with pytest.raises(BindFailure):
            CollectorServer(s.getsockname(), RecordWriter(tmp_path / "o.csv"))


def test_parse_endpoint():
    assert parse_endpoint("127.0.0.1:9995") == ("127.0.0.1", 9995)
    assert parse_endpoint("10.0.0.1", default_port=2055) == ("10.0.0.1", 2055)
    assert parse_endpoint(":2055") == ("0.0.0.0", 2055)
    with pytest.raises(ValueError):
        parse_endpoint("10.0.0.1:x")
