"""Command-line entry point.

Exit codes: 0 ok, 1 alerts raised, 2 unreadable/unparsable input,
3 network or output I/O failure, 4 unknown host/link/conversation.
"""

from __future__ import annotations

import argparse
import logging
import signal
import socket
import sys
import threading
import time

from . import __version__
from .analysis import (UnknownEntity, evaluate_alerts, load_alert_config, table_conversation_paths,
                       table_host_inout, table_host_load, table_host_peers, table_host_ports,
                       table_link_load, table_unloaded_links, trace_bottlenecks)
from .analysis.alerts import RAISED, ConfigError
from .analysis.tables import dedup_conversation_view
from .collector import Collector, StreamId
from .exporter import ExporterConfig, TraceError, read_trace, run_trace
from .faults import FaultProfile, inject_faults
from .records import IoFailure, RecordFileError, RecordWriter, read_records
from .server import BindFailure, CollectorServer, parse_endpoint
from .wire import encode_packet, is_ipv4

log = logging.getLogger("nfcongest")

EXIT_OK, EXIT_ALERT, EXIT_PARSE, EXIT_IO, EXIT_UNKNOWN = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _err(msg):
    print(f"nfcongest: {msg}", file=sys.stderr)


def _load_trace(path):
    try:
        return list(read_trace(path))
    except TraceError as exc:
        raise CliError(EXIT_PARSE, str(exc)) from None
    except OSError as exc:
        raise CliError(EXIT_PARSE, f"{path}: {exc.strerror or exc}") from None


def _load_records(path):
    try:
        return read_records(path)
    except RecordFileError as exc:
        raise CliError(EXIT_PARSE, str(exc)) from None
    except OSError as exc:
        raise CliError(EXIT_PARSE, f"{path}: {exc.strerror or exc}") from None


def _exporter_config(args, packets) -> ExporterConfig:
    boot = args.boot_time_ms
    if boot is None:
        boot = packets[0].time_ms if packets else 0
    try:
        return ExporterConfig(
            exporter_addr=args.exporter_addr,
            engine_type=args.engine_type,
            engine_id=args.engine_id,
            inactive_timeout_ms=args.inactive_timeout_ms,
            active_timeout_ms=args.active_timeout_ms,
            boot_time_ms=boot,
            flush_interval_ms=args.flush_interval_ms,
            expire_on_fin_rst=args.expire_on_fin_rst,
        )
    except ValueError as exc:
        raise CliError(EXIT_PARSE, str(exc)) from None


def _run_exporter(packets, config):
    try:
        return run_trace(packets, config)
    except ValueError as exc:
        raise CliError(EXIT_PARSE, str(exc)) from None


def cmd_export(args) -> int:
    packets = _load_trace(args.trace)
    exporter, emitted = _run_exporter(packets, _exporter_config(args, packets))
    try:
        target = parse_endpoint(args.target)
    except ValueError as exc:
        raise CliError(EXIT_PARSE, str(exc)) from None
    try:
        with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as sock:
            wall0 = time.monotonic()
            t0 = emitted[0][0] if emitted else 0
            for emit_ms, packet in emitted:
                if args.time_scale > 0:
                    delay = wall0 + (emit_ms - t0) / 1000 * args.time_scale - time.monotonic()
                    if delay > 0:
                        time.sleep(delay)
                sock.sendto(encode_packet(packet), target)
    except OSError as exc:
        raise CliError(EXIT_IO, f"sending to {args.target}: {exc.strerror or exc}") from None
    print(f"exported {exporter.records_emitted} records in {exporter.packets_emitted} datagrams")
    return EXIT_OK


def _print_counters(counters):
    c = counters
    print(f"accepted {c.flows_accepted}")
    print(f"lost {c.flows_lost}")
    print(f"duplicates {c.duplicate_packets}")
    print(f"reordered {c.reordered_packets}")
    print(f"overlaps {c.overlap_packets}")
    print(f"decode_errors {c.decode_errors}")


def cmd_collect(args) -> int:
    try:
        bind = parse_endpoint(args.listen, default_port=2055)
    except ValueError as exc:
        raise CliError(EXIT_PARSE, str(exc)) from None
    try:
        sink = RecordWriter(args.out)
    except IoFailure as exc:
        raise CliError(EXIT_IO, str(exc)) from None
    collector = Collector(reorder_window_ms=args.reorder_window_ms,
                          initial_frontier=None if args.sync_first else 0)
    try:
        server = CollectorServer(bind, sink, collector)
    except BindFailure as exc:
        sink.close()
        raise CliError(EXIT_IO, str(exc)) from None

    stop = lambda *_: server.shutdown()  # noqa: E731
    if threading.current_thread() is threading.main_thread():
        signal.signal(signal.SIGINT, stop)
        signal.signal(signal.SIGTERM, stop)
    if args.duration is not None:
        timer = threading.Timer(args.duration, server.shutdown)
        timer.daemon = True
        timer.start()
    host, port = server.address
    print(f"listening on {host}:{port}", flush=True)
    try:
        server.serve_forever()
    except IoFailure as exc:
        raise CliError(EXIT_IO, str(exc)) from None
    finally:
        sink.close()
    _print_counters(server.counters())
    return EXIT_OK


def cmd_simulate(args) -> int:
    packets = _load_trace(args.trace)
    config = _exporter_config(args, packets)
    exporter, emitted = _run_exporter(packets, config)
    try:
        profile = FaultProfile(args.loss, args.dup, args.reorder_delay_ms, args.reorder, args.seed)
    except ValueError as exc:
        raise CliError(EXIT_PARSE, str(exc)) from None
    dropped: list[int] = []
    deliveries = inject_faults(emitted, profile, dropped)

    collector = Collector(reorder_window_ms=args.reorder_window_ms)
    try:
        with RecordWriter(args.out, truncate=True) as sink:
            for d in deliveries:
                sink.append(collector.ingest(config.exporter_addr, d.data, d.arrival_ms))
            sid = StreamId(config.exporter_addr, config.engine_type, config.engine_id)
            sink.append(collector.close({sid: exporter.flow_sequence}))
    except IoFailure as exc:
        raise CliError(EXIT_IO, str(exc)) from None

    print(f"emitted {exporter.records_emitted}")
    print(f"emitted_datagrams {exporter.packets_emitted}")
    print(f"dropped {sum(emitted[i][1].header.count for i in dropped)}")
    _print_counters(collector.totals())
    return EXIT_OK


def _parse_link(text):
    parts = text.split(",")
    if len(parts) != 2 or not all(is_ipv4(p.strip()) for p in parts):
        raise argparse.ArgumentTypeError(f"expected from_ip,to_ip, got {text!r}")
    return tuple(p.strip() for p in parts)


def _parse_conv(text):
    try:
        a, b = text.split(",")
        (sip, sport), (dip, dport) = (x.strip().rsplit(":", 1) for x in (a, b))
        if not (is_ipv4(sip) and is_ipv4(dip)):
            raise ValueError
        return (sip, int(sport), dip, int(dport))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected src:sport,dst:dport, got {text!r}") from None


def _ip(text):
    if not is_ipv4(text):
        raise argparse.ArgumentTypeError(f"{text!r} is not a dotted-quad IPv4 address")
    return text


def _emit(table, text, figure):
    sys.stdout.write(text)
    if figure:
        from .plotting import save_figure

        try:
            save_figure(table, figure)
        except OSError as exc:
            raise CliError(EXIT_IO, f"{figure}: {exc.strerror or exc}") from None


def cmd_analyze(args, parser) -> int:
    need = {"link": "link", "conversation": "conv", "peers": "host", "inout": "host", "ports": "host"}
    opt = need.get(args.report)
    if opt and getattr(args, opt) is None:
        parser.error(f"--report {args.report} requires --{opt}")
    records = _load_records(args.records)
    view = dedup_conversation_view(records, args.merge_tolerance_ms)
    report = args.report
    if report == "hosts":
        table = table_host_load(records, view=view)
        text = table.render()
    elif report == "link":
        table = table_link_load(records, args.link)
        text = table.render(top=args.top)
    elif report == "unloaded":
        table = table_unloaded_links(records, args.top or 5)
        text = table.render()
    elif report == "conversation":
        table = table_conversation_paths(records, args.conv, view=view)
        text = table.render()
    else:
        build = {"peers": table_host_peers, "inout": table_host_inout, "ports": table_host_ports}
        table = build[report](records, args.host, view=view)
        text = table.render()
    _emit(table, text, args.figure)
    return EXIT_OK


def cmd_alert(args) -> int:
    try:
        config = load_alert_config(args.config)
    except ConfigError as exc:
        raise CliError(EXIT_PARSE, str(exc)) from None
    except OSError as exc:
        raise CliError(EXIT_PARSE, f"{args.config}: {exc.strerror or exc}") from None
    records = _load_records(args.records)
    events = evaluate_alerts(records, config.rules, config.window_sec)
    for e in events:
        print(e.render())
    return EXIT_ALERT if any(e.state == RAISED for e in events) else EXIT_OK


def cmd_trace_bottleneck(args) -> int:
    records = _load_records(args.records)
    report = trace_bottlenecks(records, args.host, args.port, args.top)
    _emit(report, report.render(), args.figure)
    return EXIT_OK


def _add_exporter_flags(p):
    p.add_argument("--exporter-addr", type=_ip, default="127.0.0.1",
                   help="exporter address used as the stream source in simulate")
    p.add_argument("--engine-type", type=int, default=0)
    p.add_argument("--engine-id", type=int, default=0)
    p.add_argument("--inactive-timeout-ms", type=int, default=15_000)
    p.add_argument("--active-timeout-ms", type=int, default=1_800_000)
    p.add_argument("--flush-interval-ms", type=int, default=1_000)
    p.add_argument("--boot-time-ms", type=int, default=None,
                   help="exporter boot time (default: time of the first trace packet)")
    p.add_argument("--expire-on-fin-rst", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nfcongest", description="NetFlow v5 congestion monitoring")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="replay a packet trace through a simulated router")
    p.add_argument("trace")
    p.add_argument("--target", default="127.0.0.1:2055")
    p.add_argument("--time-scale", type=float, default=0.0,
                   help="wall seconds per trace second (0 = as fast as possible)")
    _add_exporter_flags(p)

    p = sub.add_parser("collect", help="receive NetFlow v5 over UDP into a record file")
    p.add_argument("--listen", default="0.0.0.0:2055")
    p.add_argument("--out", required=True)
    p.add_argument("--reorder-window-ms", type=int, default=2000)
    p.add_argument("--duration", type=float, default=None, help="stop after this many seconds")
    p.add_argument("--sync-first", action="store_true",
                   help="start each stream at its first seen sequence number instead of 0")

    p = sub.add_parser("simulate", help="export, inject faults and collect in-process")
    p.add_argument("trace")
    p.add_argument("--out", required=True)
    p.add_argument("--loss", type=float, default=0.0)
    p.add_argument("--dup", type=float, default=0.0)
    p.add_argument("--reorder", type=float, default=0.0)
    p.add_argument("--reorder-delay-ms", type=int, default=500)
    p.add_argument("--reorder-window-ms", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    _add_exporter_flags(p)

    p = sub.add_parser("analyze", help="render a traffic table")
    p.add_argument("records")
    p.add_argument("--report", required=True,
                   choices=["hosts", "link", "unloaded", "conversation", "peers", "inout", "ports"])
    p.add_argument("--host", type=_ip)
    p.add_argument("--link", type=_parse_link)
    p.add_argument("--conv", type=_parse_conv)
    p.add_argument("--top", type=int)
    p.add_argument("--merge-tolerance-ms", type=int, default=1000)
    p.add_argument("--figure", help="also write a matplotlib figure to this file")

    p = sub.add_parser("alert", help="evaluate threshold alerts")
    p.add_argument("records")
    p.add_argument("--config", required=True)

    p = sub.add_parser("trace-bottleneck", help="find bottleneck links serving host:port")
    p.add_argument("records")
    p.add_argument("--host", type=_ip, required=True)
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--top", type=int, default=3)
    p.add_argument("--figure")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {
        "export": cmd_export,
        "collect": cmd_collect,
        "simulate": cmd_simulate,
        "analyze": lambda a: cmd_analyze(a, parser),
        "alert": cmd_alert,
        "trace-bottleneck": cmd_trace_bottleneck,
    }
    try:
        return handlers[args.command](args)
    except CliError as exc:
        _err(exc)
        return exc.code
    except UnknownEntity as exc:
        _err(exc)
        return EXIT_UNKNOWN


if __name__ == "__main__":
    sys.exit(main())
