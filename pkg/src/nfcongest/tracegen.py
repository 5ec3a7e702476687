"""Seeded synthetic traffic for replay runs and analysis tests.

``generate_trace`` produces a time-sorted packet trace for one router.
``generate_network`` produces flow records as a set of routers would
export them: each conversation follows the shortest path through a
random topology and every router on the way reports it, so the ground
truth paths are known.
"""

from __future__ import annotations

import random
from collections import deque

from .exporter import FlowKey, ObservedPacket
from .records import NormalizedFlow
from .wire import int_to_ip, ip_to_int

__all__ = ["DAY0_MS", "generate_trace", "generate_network"]

# 2024-01-01T00:00:00Z
DAY0_MS = 1_704_067_200_000

_PROTOCOLS = (6, 6, 6, 6, 17, 17, 1)
_TOS = (0, 0, 0, 0, 16, 32, 184)


def _hosts(base: str, n: int) -> list[str]:
    b = ip_to_int(base)
    return [int_to_ip(b + i) for i in range(n)]


def generate_trace(n_packets: int = 100_000, n_hosts: int = 200, n_flows: int = 2000,
                   duration_ms: int = 3_600_000, start_ms: int = DAY0_MS, seed: int = 0,
                   max_lifetime_ms: int = 2_400_000) -> list[ObservedPacket]:
    """Packets of ``n_flows`` flows among ``n_hosts`` hosts.

    Flow lifetimes go up to ``max_lifetime_ms`` (past the 30 min active
    timeout by default) and per-flow packet rates are skewed, so a run
    exercises both timeouts.
    """
    rng = random.Random(seed)
    hosts = _hosts("10.0.0.1", n_hosts)
    hops = _hosts("10.255.0.1", 4)
    keys: dict[FlowKey, tuple] = {}
    while len(keys) < n_flows:
        src, dst = rng.sample(hosts, 2)
        proto = rng.choice(_PROTOCOLS)
        sport = rng.randint(1024, 65535) if proto != 1 else 0
        dport = rng.choice((80, 443, 53, 22, 8080, rng.randint(1, 65535))) if proto != 1 else 0
        key = FlowKey(src, dst, sport, dport, proto, rng.choice(_TOS), rng.randint(1, 4))
        if key in keys:
            continue
        life = int(rng.expovariate(1 / 300_000))
        life = min(life, max_lifetime_ms)
        begin = rng.randrange(0, duration_ms)
        end = min(begin + life, duration_ms - 1)
        nh = rng.randrange(len(hops))
        keys[key] = (begin, end, hops[nh], nh + 1)
    flows = list(keys.items())
    weights = [rng.paretovariate(1.2) for _ in flows]
    chosen = rng.choices(range(len(flows)), weights=weights, k=n_packets)
    # every flow gets at least one packet
    chosen[: len(flows)] = range(len(flows))
    packets = []
    for i in chosen:
        key, (begin, end, nh, out_if) = flows[i]
        t = start_ms + rng.randint(begin, end)
        flags = rng.choice((0x10, 0x18, 0x02)) if key.protocol == 6 else 0
        size = rng.randint(40, 1500)
        packets.append(ObservedPacket(t, key, size, flags, nh, out_if))
    packets.sort(key=lambda p: p.time_ms)
    return packets


def _shortest_path(adj: dict[str, list[str]], a: str, b: str) -> list[str]:
    prev = {a: None}
    todo = deque([a])
    while todo:
        u = todo.popleft()
        if u == b:
            break
        for v in adj[u]:
            if v not in prev:
                prev[v] = u
                todo.append(v)
    path = [b]
    while path[-1] != a:
        path.append(prev[path[-1]])
    return path[::-1]


def generate_network(n_routers: int = 16, n_conversations: int = 60, flows_per_conversation: int = 3,
                     seed: int = 0, day_ms: int = DAY0_MS, base: str = "10.1.12.1",
                     services: tuple[tuple[str, int], ...] = (), hop_skew_ms: int = 2,
                     local_delivery: bool = True):
    """Multi-router flow records with known paths.

    Routers double as end hosts (as in small lab networks). Returns
    ``(records, paths)`` where ``paths`` maps each conversation 4-tuple
    to its router path. ``services`` adds conversations whose server
    side is the given ``(host, port)``. With ``local_delivery`` the last
    router also reports the flow with next hop 0.0.0.0, a linkless
    record.
    """
    rng = random.Random(seed)
    routers = _hosts(base, n_routers)
    adj: dict[str, list[str]] = {r: [] for r in routers}
    edges = {(routers[i], routers[(i + 1) % n_routers]) for i in range(n_routers)}
    for _ in range(n_routers // 2):
        a, b = rng.sample(routers, 2)
        edges.add((a, b))
    for a, b in edges:
        if b not in adj[a]:
            adj[a].append(b)
            adj[b].append(a)
    for r in routers:
        adj[r].sort(key=ip_to_int)

    conversations = []
    for _ in range(n_conversations):
        src, dst = rng.sample(routers, 2)
        conversations.append((src, rng.randint(1024, 32767), dst, rng.randint(1024, 32767)))
    for host, port in services:
        for _ in range(4):
            peer = rng.choice([r for r in routers if r != host])
            conversations.append((peer, rng.randint(1024, 32767), host, port))
            conversations.append((host, port, peer, rng.randint(1024, 32767)))

    records: list[NormalizedFlow] = []
    paths = {}
    for conv in dict.fromkeys(conversations):
        src, sport, dst, dport = conv
        path = _shortest_path(adj, src, dst)
        paths[conv] = path
        proto = rng.choice((6, 6, 6, 17, 17, 47))
        tos = rng.choice((0, 0, 16))
        for _ in range(flows_per_conversation):
            start = day_ms + rng.randrange(0, 86_400_000 - 2_000_000)
            duration = rng.randint(0, 1_800_000)
            pkts = rng.randint(1, 40_000)
            nbytes = pkts * rng.randint(40, 1500)
            hops = list(zip(path, path[1:] + ["0.0.0.0"]))
            if not local_delivery:
                hops = hops[:-1]
            for i, (router, nh) in enumerate(hops):
                t = start + i * hop_skew_ms
                records.append(NormalizedFlow(
                    exporter=router, engine_type=0, engine_id=0,
                    src_addr=src, src_port=sport, dst_addr=dst, dst_port=dport,
                    protocol=proto, tos=tos, tcp_flags=0x18 if proto == 6 else 0,
                    input_if=1, output_if=2 if nh != "0.0.0.0" else 0, next_hop=nh,
                    packets=pkts, bytes=nbytes, first_ms=t, last_ms=t + duration,
                ))
    records.sort(key=lambda f: (f.first_ms, ip_to_int(f.exporter)))
    return records, paths
