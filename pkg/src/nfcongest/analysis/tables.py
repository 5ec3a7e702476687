"""Traffic tables built from normalized flow records.

Link-centric tables (link load, unloaded links, per-link rows of a
conversation path) use raw records: a flow crossing k routers really
loads k links. Endpoint-centric tables (host load, peers, in/out,
ports, conversation totals) first collapse the k observations of one
flow into a single representative via :func:`dedup_conversation_view`.

Each table is a small dataclass with a ``render()`` method producing
the tab-separated text form.
"""

from __future__ import annotations

import dataclasses
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

from ..records import NormalizedFlow
from ..wire import ip_to_int
from .periods import format_mb, percent, period_histogram, render_histogram

__all__ = [
    "ConversationKey",
    "LinkId",
    "UnknownEntity",
    "UnknownHost",
    "UnknownLink",
    "UnknownConversation",
    "MERGE_TOLERANCE_MS",
    "dedup_conversation_view",
    "link_totals",
    "host_flows",
    "HostLoadRow",
    "HostLoadTable",
    "LinkLoadTable",
    "UnloadedLinksTable",
    "ConversationPathTable",
    "HostPeersTable",
    "HostInOutTable",
    "HostPortsTable",
    "table_host_load",
    "table_link_load",
    "table_unloaded_links",
    "table_conversation_paths",
    "table_host_peers",
    "table_host_inout",
    "table_host_ports",
]

MERGE_TOLERANCE_MS = 1000
NO_HOP = "0.0.0.0"
TCP, UDP = 6, 17


class UnknownEntity(LookupError):
    pass


class UnknownHost(UnknownEntity):
    pass


class UnknownLink(UnknownEntity):
    pass


class UnknownConversation(UnknownEntity):
    pass


class ConversationKey(NamedTuple):
    src_addr: str
    src_port: int
    dst_addr: str
    dst_port: int

    def sort_key(self):
        return (ip_to_int(self.src_addr), self.src_port, ip_to_int(self.dst_addr), self.dst_port)

    def __str__(self):
        return f"{self.src_addr}:{self.src_port}\t->\t{self.dst_addr}:{self.dst_port}"


class LinkId(NamedTuple):
    from_addr: str
    to_addr: str

    def sort_key(self):
        return (ip_to_int(self.from_addr), ip_to_int(self.to_addr))

    def __str__(self):
        return f"{self.from_addr} => {self.to_addr}"


def _conv(f: NormalizedFlow) -> ConversationKey:
    return ConversationKey(f.src_addr, f.src_port, f.dst_addr, f.dst_port)


def _link(f: NormalizedFlow) -> LinkId | None:
    if f.next_hop == NO_HOP or f.next_hop == f.exporter:
        return None
    return LinkId(f.exporter, f.next_hop)


def dedup_conversation_view(records: Sequence[NormalizedFlow],
                            merge_tolerance_ms: int = MERGE_TOLERANCE_MS) -> list[NormalizedFlow]:
    """Collapse observations of one flow made by several exporters.

    Records sharing conversation, protocol and ToS are clustered when
    their start times lie within ``merge_tolerance_ms`` of the cluster's
    earliest start and come from distinct exporters. A cluster becomes
    one record carrying the largest byte/packet counts and the widest
    time span. Output keeps input order (by each cluster's first member).
    """
    groups: dict[tuple, list[int]] = defaultdict(list)
    for i, f in enumerate(records):
        groups[(f.src_addr, f.src_port, f.dst_addr, f.dst_port, f.protocol, f.tos)].append(i)

    reps: list[tuple[int, NormalizedFlow]] = []
    for idx in groups.values():
        idx.sort(key=lambda i: (records[i].first_ms, i))
        cluster: list[int] = []
        seen: set[str] = set()
        for i in idx:
            f = records[i]
            if cluster and (f.first_ms - records[cluster[0]].first_ms > merge_tolerance_ms
                            or f.exporter in seen):
                reps.append(_merge(records, cluster))
                cluster, seen = [], set()
            cluster.append(i)
            seen.add(f.exporter)
        if cluster:
            reps.append(_merge(records, cluster))
    reps.sort(key=lambda t: t[0])
    return [f for _, f in reps]


def _merge(records, cluster):
    if len(cluster) == 1:
        return cluster[0], records[cluster[0]]
    members = [records[i] for i in cluster]
    base = members[0]
    merged = dataclasses.replace(
        base,
        bytes=max(m.bytes for m in members),
        packets=max(m.packets for m in members),
        first_ms=min(m.first_ms for m in members),
        last_ms=max(m.last_ms for m in members),
    )
    return min(cluster), merged


def host_flows(view: Iterable[NormalizedFlow], host: str):
    """(inbound, outbound) flows of ``host`` in a deduplicated view."""
    inbound, outbound = [], []
    for f in view:
        if f.dst_addr == host:
            inbound.append(f)
        if f.src_addr == host:
            outbound.append(f)
    return inbound, outbound


def link_totals(records: Iterable[NormalizedFlow]) -> dict[LinkId, int]:
    totals: dict[LinkId, int] = defaultdict(int)
    for f in records:
        link = _link(f)
        if link is not None:
            totals[link] += f.bytes
    return dict(totals)


def _sum_hist(a, b):
    return [x + y for x, y in zip(a, b)]


# -- A. host load ---------------------------------------------------------

@dataclass(frozen=True)
class HostLoadRow:
    host: str
    total: int
    buckets: list[int]


@dataclass(frozen=True)
class HostLoadTable:
    rows: list[HostLoadRow]

    def render(self) -> str:
        lines = ["IP\tTotal"]
        lines += [f"{r.host}\t{format_mb(r.total)} {render_histogram(r.buckets)}" for r in self.rows]
        return "\n".join(lines) + "\n"


def table_host_load(records: Sequence[NormalizedFlow], view=None) -> HostLoadTable:
    view = dedup_conversation_view(records) if view is None else view
    inbound: dict[str, list] = defaultdict(list)
    outbound: dict[str, list] = defaultdict(list)
    for f in view:
        inbound[f.dst_addr].append(f)
        outbound[f.src_addr].append(f)
    rows = []
    for host in set(inbound) | set(outbound):
        buckets = _sum_hist(period_histogram(inbound.get(host, ())),
                            period_histogram(outbound.get(host, ())))
        rows.append(HostLoadRow(host, sum(buckets), buckets))
    rows.sort(key=lambda r: (r.total, ip_to_int(r.host)))
    return HostLoadTable(rows)


# -- B. link load ---------------------------------------------------------

@dataclass(frozen=True)
class LinkLoadTable:
    link: LinkId
    total: int
    conversations: list[tuple[ConversationKey, int]]

    def render(self, top: int | None = None) -> str:
        lines = [f"{self.link}\t\tTotal: {format_mb(self.total)}"]
        for conv, nbytes in self.conversations[:top]:
            lines.append(f"{conv.src_addr}:{conv.src_port}\t-> {conv.dst_addr}:{conv.dst_port}\t"
                         f"{percent(nbytes, self.total)}% ({format_mb(nbytes)})")
        return "\n".join(lines) + "\n"


def table_link_load(records: Sequence[NormalizedFlow], link) -> LinkLoadTable:
    link = LinkId(*link)
    per_conv: dict[ConversationKey, int] = defaultdict(int)
    for f in records:
        if _link(f) == link:
            per_conv[_conv(f)] += f.bytes
    if not per_conv:
        raise UnknownLink(f"no records for link {link}")
    convs = sorted(per_conv.items(), key=lambda kv: (-kv[1], kv[0].sort_key()))
    return LinkLoadTable(link, sum(per_conv.values()), convs)


# -- C. most unloaded links -----------------------------------------------

@dataclass(frozen=True)
class UnloadedLinksTable:
    rows: list[tuple[LinkId, int]]

    def render(self) -> str:
        return "".join(f"{i}.\t{link}\t{format_mb(b)}\n" for i, (link, b) in enumerate(self.rows, 1))


def table_unloaded_links(records: Sequence[NormalizedFlow], n: int) -> UnloadedLinksTable:
    if n < 1:
        raise ValueError("n must be >= 1")
    rows = sorted(link_totals(records).items(), key=lambda kv: (kv[1], kv[0].sort_key()))
    return UnloadedLinksTable(rows[:n])


# -- D. conversation paths ------------------------------------------------

@dataclass(frozen=True)
class ConversationPathTable:
    conversation: ConversationKey
    total: int
    hops: list[tuple[LinkId, int, int]]  # link, conversation bytes on it, link total

    def render(self) -> str:
        lines = [str(self.conversation)]
        for link, nbytes, link_total in self.hops:
            lines.append(f"{link.from_addr}\t=>\t{link.to_addr}\t{format_mb(nbytes)}\t"
                         f"(of {format_mb(link_total)})")
        lines.append(f"Total:\t{format_mb(self.total)}")
        return "\n".join(lines) + "\n"


def _path_order(links: Iterable[LinkId]) -> list[LinkId]:
    """Chain links into hop order where they form a path; sort the rest."""
    remaining = sorted(links, key=LinkId.sort_key)
    heads = {l.to_addr for l in remaining}
    ordered = []
    while remaining:
        starts = [l for l in remaining if l.from_addr not in heads] or remaining
        cur = starts[0]
        while cur is not None:
            ordered.append(cur)
            remaining.remove(cur)
            cur = next((l for l in remaining if l.from_addr == cur.to_addr), None)
        heads = {l.to_addr for l in remaining}
    return ordered


def table_conversation_paths(records: Sequence[NormalizedFlow], conv,
                             view=None, totals: dict | None = None) -> ConversationPathTable:
    conv = ConversationKey(*conv)
    view = dedup_conversation_view(records) if view is None else view
    totals = link_totals(records) if totals is None else totals
    on_link: dict[LinkId, int] = defaultdict(int)
    seen = False
    for f in records:
        if _conv(f) == conv:
            seen = True
            link = _link(f)
            if link is not None:
                on_link[link] += f.bytes
    if not seen:
        raise UnknownConversation(f"no records for conversation {conv}")
    total = sum(f.bytes for f in view if _conv(f) == conv)
    hops = [(link, on_link[link], totals[link]) for link in _path_order(on_link)]
    return ConversationPathTable(conv, total, hops)


# -- E. peers and protocols -----------------------------------------------

@dataclass(frozen=True)
class HostPeersTable:
    host: str
    peers: list[tuple[str, int]]
    total: int
    protocols: tuple[int, int, int]  # TCP, UDP, other bytes

    def render(self) -> str:
        lines = [self.host]
        lines += [f"{peer}\t{format_mb(b)}\t({percent(b, self.total)}%)" for peer, b in self.peers]
        lines.append(f"Total traffic:\t{format_mb(self.total)}")
        tcp, udp, other = (percent(b, self.total) for b in self.protocols)
        lines.append(f"Protocols:\tTCP - {tcp}%, UDP - {udp}%, Other - {other}%")
        return "\n".join(lines) + "\n"


def _require_host(view, host):
    inbound, outbound = host_flows(view, host)
    if not inbound and not outbound:
        raise UnknownHost(f"no traffic for host {host}")
    return inbound, outbound


def table_host_peers(records: Sequence[NormalizedFlow], host: str, view=None) -> HostPeersTable:
    view = dedup_conversation_view(records) if view is None else view
    inbound, outbound = _require_host(view, host)
    peers: dict[str, int] = defaultdict(int)
    proto = [0, 0, 0]
    for f, peer in [(f, f.src_addr) for f in inbound] + [(f, f.dst_addr) for f in outbound]:
        peers[peer] += f.bytes
        proto[0 if f.protocol == TCP else 1 if f.protocol == UDP else 2] += f.bytes
    rows = sorted(peers.items(), key=lambda kv: (-kv[1], ip_to_int(kv[0])))
    return HostPeersTable(host, rows, sum(peers.values()), tuple(proto))


# -- F. input / output ----------------------------------------------------

@dataclass(frozen=True)
class HostInOutTable:
    host: str
    inbound: list[int]
    outbound: list[int]

    @property
    def both(self) -> list[int]:
        return _sum_hist(self.inbound, self.outbound)

    def render(self) -> str:
        lines = [f"*** {self.host} ***"]
        for label, hist in (("IN", self.inbound), ("OUT", self.outbound), ("IN&OUT", self.both)):
            lines.append(f"{label}\t{format_mb(sum(hist))}\t{render_histogram(hist)}")
        return "\n".join(lines) + "\n"


def table_host_inout(records: Sequence[NormalizedFlow], host: str, view=None) -> HostInOutTable:
    view = dedup_conversation_view(records) if view is None else view
    inbound, outbound = _require_host(view, host)
    return HostInOutTable(host, period_histogram(inbound), period_histogram(outbound))


# -- G. active ports ------------------------------------------------------

@dataclass(frozen=True)
class HostPortsTable:
    host: str
    ports: list[tuple[int, int]]
    total: int

    def render(self) -> str:
        lines = [self.host]
        lines += [f":{port}\t{format_mb(b)}\t({percent(b, self.total)}%)" for port, b in self.ports]
        lines.append(f"Total:\t{format_mb(self.total)}")
        return "\n".join(lines) + "\n"


def table_host_ports(records: Sequence[NormalizedFlow], host: str, view=None) -> HostPortsTable:
    view = dedup_conversation_view(records) if view is None else view
    inbound, outbound = _require_host(view, host)
    ports: dict[int, int] = defaultdict(int)
    for f in inbound:
        ports[f.dst_port] += f.bytes
    for f in outbound:
        ports[f.src_port] += f.bytes
    rows = sorted(ports.items(), key=lambda kv: (-kv[1], kv[0]))
    return HostPortsTable(host, rows, sum(ports.values()))
