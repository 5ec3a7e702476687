import pytest

from nfcongest.exporter import FlowKey, ObservedPacket
from nfcongest.records import NormalizedFlow
from nfcongest.tracegen import generate_network
from nfcongest.wire import PacketHeader, WireFlowRecord, WirePacket


def make_record(**kw):
    base = dict(src_addr="10.0.0.1", dst_addr="10.0.0.2", next_hop="0.0.0.0", input_if=0,
                output_if=0, d_pkts=1, d_octets=1, first_uptime_ms=0, last_uptime_ms=0,
                src_port=0, dst_port=0, tcp_flags=0, protocol=0, tos=0)
    base.update(kw)
    return WireFlowRecord(**base)


def make_packet(records, seq=0, uptime=0, secs=0, nsecs=0, engine_type=0, engine_id=0):
    records = tuple(records)
    return WirePacket(PacketHeader(5, len(records), uptime, secs, nsecs, seq, engine_type, engine_id),
                      records)


def pkt(t, nbytes=100, src="10.0.0.1", dst="10.0.0.2", sport=1000, dport=80, proto=6, tos=0,
        in_if=1, flags=0, nh="10.9.9.9", out_if=2):
    return ObservedPacket(t, FlowKey(src, dst, sport, dport, proto, tos, in_if), nbytes, flags, nh, out_if)


def flow(src="10.0.0.1", dst="10.0.0.2", sport=1000, dport=80, nbytes=1000, first=0, last=None,
         exporter="10.0.0.254", nh="0.0.0.0", proto=6, tos=0, packets=1):
    return NormalizedFlow(exporter, 0, 0, src, sport, dst, dport, proto, tos, 0, 1, 2, nh,
                          packets, nbytes, first, first if last is None else last)


@pytest.fixture(scope="session")
def network():
    return generate_network(n_routers=16, n_conversations=80, seed=11,
                            services=(("10.1.12.7", 32001),))


ACCEPTANCE_RESULTS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    number, title = marker.args
    ACCEPTANCE_RESULTS[number] = (title, report.passed, getattr(item, "elapsed", None))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        title, ok, elapsed = ACCEPTANCE_RESULTS[number]
        took = f" ({elapsed:.2f} s)" if elapsed is not None else ""
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number}. {title}{took}")
