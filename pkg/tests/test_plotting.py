import pytest

from nfcongest.analysis import (table_conversation_paths, table_host_inout, table_host_load,
                                table_host_peers, table_host_ports, table_link_load,
                                table_unloaded_links, trace_bottlenecks)
from nfcongest.plotting import save_figure


def tables(recs, paths):
    conv = next(iter(paths))
    link = table_unloaded_links(recs, 1).rows[0][0]
    return [
        table_host_load(recs),
        table_link_load(recs, link),
        table_unloaded_links(recs, 5),
        table_conversation_paths(recs, conv),
        table_host_peers(recs, "10.1.12.7"),
        table_host_inout(recs, "10.1.12.7"),
        table_host_ports(recs, "10.1.12.7"),
        trace_bottlenecks(recs, "10.1.12.7", 32001),
    ]


def test_every_table_has_a_figure(network, tmp_path):
    for i, table in enumerate(tables(*network)):
        path = tmp_path / f"{i}.png"
        save_figure(table, path)
        assert path.read_bytes()[:4] == b"\x89PNG"


def test_unsupported_object():
    with pytest.raises(TypeError):
        save_figure(object(), "x.png")
