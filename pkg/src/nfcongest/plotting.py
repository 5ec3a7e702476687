"""Matplotlib figures for the analysis tables.

Figures are written to files only; the Agg backend is selected so this
works on headless hosts.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .analysis.bottleneck import BottleneckReport  # noqa: E402
from .analysis.tables import (  # noqa: E402
    ConversationPathTable,
    HostInOutTable,
    HostLoadTable,
    HostPeersTable,
    HostPortsTable,
    LinkLoadTable,
    UnloadedLinksTable,
)

__all__ = ["save_figure", "PERIOD_LABELS"]

PERIOD_LABELS = ["00-04", "04-08", "08-12", "12-16", "16-20", "20-24"]
MB = 1e6

plt.rcParams.update({
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
})


def _hbar(ax, labels, values, xlabel="MB"):
    y = range(len(labels))
    ax.barh(list(y), [v / MB for v in values], color="tab:blue")
    ax.set_yticks(list(y), labels)
    ax.invert_yaxis()
    ax.set_xlabel(xlabel)


def _host_load(ax, t: HostLoadTable):
    hosts = [r.host for r in t.rows]
    left = [0.0] * len(hosts)
    for p, label in enumerate(PERIOD_LABELS):
        vals = [r.buckets[p] / MB for r in t.rows]
        ax.barh(hosts, vals, left=left, label=label)
        left = [a + b for a, b in zip(left, vals)]
    ax.set_xlabel("MB")
    ax.legend(title="UTC period", fontsize=7, loc="lower right")
    ax.set_title("Load of hosts")


def _link_load(ax, t: LinkLoadTable):
    labels = [f"{c.src_addr}:{c.src_port} -> {c.dst_addr}:{c.dst_port}" for c, _ in t.conversations]
    _hbar(ax, labels, [b for _, b in t.conversations])
    ax.set_title(f"Link {t.link}")


def _unloaded(ax, t: UnloadedLinksTable):
    _hbar(ax, [str(l) for l, _ in t.rows], [b for _, b in t.rows])
    ax.set_title("Most unloaded links")


def _conv_paths(ax, t: ConversationPathTable):
    labels = [str(l) for l, _, _ in t.hops]
    y = list(range(len(labels)))
    ax.barh(y, [lt / MB for _, _, lt in t.hops], color="lightgray", label="link total")
    ax.barh(y, [cb / MB for _, cb, _ in t.hops], color="tab:red", label="conversation")
    ax.set_yticks(y, labels)
    ax.invert_yaxis()
    ax.set_xlabel("MB")
    ax.legend(fontsize=7)
    c = t.conversation
    ax.set_title(f"{c.src_addr}:{c.src_port} -> {c.dst_addr}:{c.dst_port}")


def _peers(ax, t: HostPeersTable):
    _hbar(ax, [p for p, _ in t.peers], [b for _, b in t.peers])
    ax.set_title(f"Peers of {t.host}")


def _inout(ax, t: HostInOutTable):
    x = range(len(PERIOD_LABELS))
    w = 0.4
    ax.bar([i - w / 2 for i in x], [b / MB for b in t.inbound], w, label="IN")
    ax.bar([i + w / 2 for i in x], [b / MB for b in t.outbound], w, label="OUT")
    ax.set_xticks(list(x), PERIOD_LABELS)
    ax.set_ylabel("MB")
    ax.legend(fontsize=7)
    ax.set_title(f"Input and output traffic of {t.host}")


def _ports(ax, t: HostPortsTable):
    _hbar(ax, [f":{p}" for p, _ in t.ports], [b for _, b in t.ports])
    ax.set_title(f"Active ports of {t.host}")


def _bottleneck(ax, r: BottleneckReport):
    _hbar(ax, [str(l) for l, _ in r.candidates], [b for _, b in r.candidates])
    ax.set_title(f"Bottleneck candidates for {r.host}:{r.port}")


_DRAW = {
    HostLoadTable: _host_load,
    LinkLoadTable: _link_load,
    UnloadedLinksTable: _unloaded,
    ConversationPathTable: _conv_paths,
    HostPeersTable: _peers,
    HostInOutTable: _inout,
    HostPortsTable: _ports,
    BottleneckReport: _bottleneck,
}


def _n_rows(table) -> int:
    for name in ("candidates", "rows", "conversations", "peers", "ports", "hops"):
        items = getattr(table, name, None)
        if items is not None:
            return len(items)
    return 0


def save_figure(table, path) -> None:
    """Render any table object (or a bottleneck report) to ``path``."""
    try:
        draw = _DRAW[type(table)]
    except KeyError:
        raise TypeError(f"no figure for {type(table).__name__}") from None
    rows = max(3, _n_rows(table))
    fig, ax = plt.subplots(figsize=(7, min(2 + 0.25 * rows, 20)))
    try:
        draw(ax, table)
        fig.tight_layout()
        fig.savefig(path)
    finally:
        plt.close(fig)
