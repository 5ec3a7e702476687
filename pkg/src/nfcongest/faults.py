"""Seeded datagram loss, duplication and reordering."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

from .wire import WirePacket, encode_packet

__all__ = ["FaultProfile", "Delivery", "inject_faults"]


@dataclass(frozen=True)
class FaultProfile:
    loss_probability: float = 0.0
    duplicate_probability: float = 0.0
    reorder_delay_ms: int = 0
    reorder_probability: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("loss_probability", "duplicate_probability", "reorder_probability"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if self.reorder_delay_ms < 0:
            raise ValueError("reorder_delay_ms must be non-negative")


@dataclass(frozen=True)
class Delivery:
    arrival_ms: int
    data: bytes
    # position of the source datagram in the emission order
    index: int
    duplicate: bool = False


def inject_faults(packets: Sequence[tuple[int, WirePacket]], profile: FaultProfile,
                  dropped: list[int] | None = None) -> list[Delivery]:
    """Pass emitted datagrams through a lossy channel.

    Three uniform draws are taken per datagram (loss, duplicate, delay)
    whatever the outcome, so one datagram's fate never shifts the random
    stream of the next. A duplicate copy arrives ``reorder_delay_ms``
    after the original. Indices of dropped datagrams are appended to
    ``dropped`` when given.
    """
    rng = random.Random(profile.seed)
    delay = profile.reorder_delay_ms
    out = []
    for index, (emit_ms, packet) in enumerate(packets):
        lost = rng.random() < profile.loss_probability
        dup = rng.random() < profile.duplicate_probability
        late = rng.random() < profile.reorder_probability
        if lost:
            if dropped is not None:
                dropped.append(index)
            continue
        data = encode_packet(packet)
        arrival = emit_ms + (delay if late else 0)
        out.append(Delivery(arrival, data, index))
        if dup:
            out.append(Delivery(arrival + delay, data, index, duplicate=True))
    out.sort(key=lambda d: (d.arrival_ms, d.index, d.duplicate))
    return out
