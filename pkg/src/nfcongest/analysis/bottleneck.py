"""Service bottleneck trace: which links carry a host:port service and how loaded are they."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from ..records import NormalizedFlow
from .periods import format_mb
from .tables import (
    ConversationKey,
    ConversationPathTable,
    LinkId,
    LinkLoadTable,
    _require_host,
    dedup_conversation_view,
    link_totals,
    table_conversation_paths,
    table_link_load,
)

__all__ = ["BottleneckReport", "trace_bottlenecks"]


@dataclass(frozen=True)
class BottleneckReport:
    host: str
    port: int
    conversations: list[tuple[ConversationKey, int]]
    paths: list[ConversationPathTable]
    candidates: list[tuple[LinkId, int]]
    link_loads: list[LinkLoadTable]

    def render(self) -> str:
        out = [f"Service {self.host}:{self.port}\n"]
        if not self.conversations:
            out.append("No conversations on this port.\n")
            return "".join(out)
        out.append("\nConversations:\n")
        out += [f"{conv}\t{format_mb(b)}\n" for conv, b in self.conversations]
        out.append("\nPaths:\n")
        out += [p.render() for p in self.paths]
        out.append("\nBottlenecks:\n")
        for rank, ((link, total), load) in enumerate(zip(self.candidates, self.link_loads), 1):
            out.append(f"{rank}.\t{link}\t{format_mb(total)}\n")
            out.append(load.render())
        return "".join(out)


def trace_bottlenecks(records: Sequence[NormalizedFlow], host: str, port: int,
                      top_k: int = 3) -> BottleneckReport:
    view = dedup_conversation_view(records)
    inbound, outbound = _require_host(view, host)
    convs: dict[ConversationKey, int] = {}
    for f in outbound:
        if f.src_port == port:
            key = ConversationKey(f.src_addr, f.src_port, f.dst_addr, f.dst_port)
            convs[key] = convs.get(key, 0) + f.bytes
    for f in inbound:
        if f.dst_port == port:
            key = ConversationKey(f.src_addr, f.src_port, f.dst_addr, f.dst_port)
            convs[key] = convs.get(key, 0) + f.bytes
    conv_rows = sorted(convs.items(), key=lambda kv: (-kv[1], kv[0].sort_key()))

    totals = link_totals(records)
    paths = [table_conversation_paths(records, c, view=view, totals=totals) for c, _ in conv_rows]
    used = {link for p in paths for link, _, _ in p.hops}
    ranked = sorted(((l, totals[l]) for l in used), key=lambda kv: (-kv[1], kv[0].sort_key()))
    candidates = ranked[:top_k]
    loads = [table_link_load(records, link) for link, _ in candidates]
    return BottleneckReport(host, port, conv_rows, paths, candidates, loads)
