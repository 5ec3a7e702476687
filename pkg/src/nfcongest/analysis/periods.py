"""Byte apportionment over time bins, percentages and MB formatting."""

from __future__ import annotations

from typing import Iterable

__all__ = [
    "DAY_MS",
    "PERIOD_MS",
    "N_PERIODS",
    "PartExceedsTotal",
    "apportion",
    "period_histogram",
    "percent",
    "format_mb",
    "render_histogram",
]

N_PERIODS = 6
PERIOD_MS = 4 * 3600 * 1000
DAY_MS = N_PERIODS * PERIOD_MS


class PartExceedsTotal(ValueError):
    pass


def apportion(nbytes: int, first_ms: int, last_ms: int, bin_ms: int) -> dict[int, int]:
    """Split ``nbytes`` over absolute bins ``[k*bin_ms, (k+1)*bin_ms)``.

    Shares are proportional to the overlap of ``[first_ms, last_ms)``
    with each bin; integer leftovers go to the largest remainders
    (lowest bin first on ties), so the result sums to ``nbytes``. A
    zero-length flow lands wholly in the bin holding ``first_ms``.
    """
    first_bin = first_ms // bin_ms
    duration = last_ms - first_ms
    if duration <= 0:
        return {first_bin: nbytes}
    last_bin = (last_ms - 1) // bin_ms
    if first_bin == last_bin:
        return {first_bin: nbytes}
    shares = {}
    remainders = []
    assigned = 0
    for k in range(first_bin, last_bin + 1):
        lo = max(first_ms, k * bin_ms)
        hi = min(last_ms, (k + 1) * bin_ms)
        q, r = divmod(nbytes * (hi - lo), duration)
        shares[k] = q
        assigned += q
        remainders.append((-r, k))
    remainders.sort()
    for _, k in remainders[: nbytes - assigned]:
        shares[k] += 1
    return shares


def period_histogram(flows: Iterable) -> list[int]:
    """Bytes per 4-hour UTC period of the day (six buckets)."""
    buckets = [0] * N_PERIODS
    for f in flows:
        for k, v in apportion(f.bytes, f.first_ms, f.last_ms, PERIOD_MS).items():
            buckets[k % N_PERIODS] += v
    return buckets


def percent(part: int, total: int) -> int:
    """Floor percentage; a zero total gives 0."""
    if part < 0 or part > total:
        raise PartExceedsTotal(f"part {part} not within 0..{total}")
    if total == 0:
        return 0
    return part * 100 // total


def format_mb(nbytes: int) -> str:
    """Megabytes (10**6 bytes) with one decimal, rounded half up."""
    if nbytes < 0:
        raise ValueError("byte count must be non-negative")
    tenths = (nbytes + 50_000) // 100_000
    return f"{tenths // 10}.{tenths % 10} MB"


def render_histogram(buckets: list[int]) -> str:
    total = sum(buckets)
    return "[" + "-".join(f"{percent(b, total)}%" for b in buckets) + "]"
