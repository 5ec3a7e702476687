"""Threshold alerts on host and link rates over tumbling windows.

A rule raises when a window's average rate exceeds its threshold and
clears once the rate falls below ``threshold * clear_ratio``; in between
the state holds, which keeps a load hovering around the threshold from
flapping.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Sequence

from ..records import NormalizedFlow
from ..wire import is_ipv4
from .periods import apportion
from .tables import LinkId, _link, dedup_conversation_view

__all__ = [
    "AlertRule",
    "AlertEvent",
    "AlertConfig",
    "ConfigError",
    "RAISED",
    "CLEARED",
    "parse_alert_config",
    "load_alert_config",
    "evaluate_alerts",
]

RAISED = "RAISED"
CLEARED = "CLEARED"


class ConfigError(ValueError):
    def __init__(self, line, message, path=None):
        where = f"{path}:{line}" if path else f"line {line}"
        super().__init__(f"{where}: {message}")
        self.line = line


@dataclass(frozen=True)
class AlertRule:
    kind: str  # "host" or "link"
    target: str | LinkId
    threshold_mbps: float
    clear_ratio: float = 0.8

    def __post_init__(self):
        if self.threshold_mbps <= 0:
            raise ValueError("threshold_mbps must be positive")
        if not 0 < self.clear_ratio <= 1:
            raise ValueError("clear_ratio must be in (0, 1]")
        if self.kind not in ("host", "link"):
            raise ValueError(f"unknown resource kind {self.kind!r}")

    @property
    def resource(self) -> str:
        if self.kind == "host":
            return f"host {self.target}"
        return f"link {self.target.from_addr}=>{self.target.to_addr}"


@dataclass(frozen=True)
class AlertEvent:
    rule: AlertRule
    window_start_ms: int
    observed_mbps: float
    state: str

    def render(self) -> str:
        ts = datetime.fromtimestamp(self.window_start_ms / 1000, tz=timezone.utc)
        stamp = ts.strftime("%Y-%m-%dT%H:%M:%SZ")
        if self.state == RAISED:
            rel, limit = ">", self.rule.threshold_mbps
        else:
            rel, limit = "<", self.rule.threshold_mbps * self.rule.clear_ratio
        return f"{stamp} {self.state} {self.rule.resource} {self.observed_mbps:.2f} {rel} {limit:.2f}"


@dataclass(frozen=True)
class AlertConfig:
    window_sec: int
    clear_ratio: float
    rules: list[AlertRule]


def parse_alert_config(text: str, path=None) -> AlertConfig:
    """Parse ``window_sec``, ``clear_ratio`` and ``alert`` directives.

    Rules pick up the clear ratio in force at the end of the file.
    """
    window_sec, clear_ratio = 60, 0.8
    pending = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue

        def number(tok, kind=float):
            try:
                return kind(tok)
            except ValueError:
                raise ConfigError(lineno, f"{tok!r} is not a valid number", path) from None

        match tokens:
            case ["window_sec", v]:
                window_sec = number(v, int)
                if window_sec <= 0:
                    raise ConfigError(lineno, "window_sec must be positive", path)
            case ["clear_ratio", v]:
                clear_ratio = number(v)
                if not 0 < clear_ratio <= 1:
                    raise ConfigError(lineno, "clear_ratio must be in (0, 1]", path)
            case ["alert", "host", ip, "rate_mbps", v] if is_ipv4(ip):
                pending.append((lineno, "host", ip, number(v)))
            case ["alert", "link", a, b, "rate_mbps", v] if is_ipv4(a) and is_ipv4(b):
                pending.append((lineno, "link", LinkId(a, b), number(v)))
            case _:
                raise ConfigError(lineno, f"unrecognised directive {raw.strip()!r}", path)
    rules = []
    for lineno, kind, target, threshold in pending:
        try:
            rules.append(AlertRule(kind, target, threshold, clear_ratio))
        except ValueError as exc:
            raise ConfigError(lineno, str(exc), path) from None
    return AlertConfig(window_sec, clear_ratio, rules)


def load_alert_config(path) -> AlertConfig:
    with open(path) as fh:
        return parse_alert_config(fh.read(), path)


def evaluate_alerts(records: Sequence[NormalizedFlow], rules: Sequence[AlertRule],
                    window_sec: int) -> list[AlertEvent]:
    """Walk every window between the first and last record and emit state changes.

    Host rates count deduplicated traffic in both directions; link rates
    use raw records of that link. Flow bytes are spread over windows in
    proportion to time overlap.
    """
    if window_sec <= 0:
        raise ValueError("window_sec must be positive")
    if not records or not rules:
        return []
    bin_ms = window_sec * 1000
    view = dedup_conversation_view(records)
    per_rule: list[dict[int, int]] = []
    for rule in rules:
        acc: dict[int, int] = defaultdict(int)
        if rule.kind == "host":
            flows = [f for f in view if f.src_addr == rule.target] + \
                    [f for f in view if f.dst_addr == rule.target]
        else:
            flows = [f for f in records if _link(f) == rule.target]
        for f in flows:
            for k, v in apportion(f.bytes, f.first_ms, f.last_ms, bin_ms).items():
                acc[k] += v
        per_rule.append(acc)

    start = min(f.first_ms for f in records) // bin_ms
    end = max(max(f.last_ms - 1, f.first_ms) for f in records) // bin_ms
    raised = [False] * len(rules)
    events = []
    for k in range(start, end + 1):
        for i, rule in enumerate(rules):
            mbps = per_rule[i].get(k, 0) * 8 / (window_sec * 1e6)
            if not raised[i] and mbps > rule.threshold_mbps:
                raised[i] = True
                events.append(AlertEvent(rule, k * bin_ms, mbps, RAISED))
            elif raised[i] and mbps < rule.threshold_mbps * rule.clear_ratio:
                raised[i] = False
                events.append(AlertEvent(rule, k * bin_ms, mbps, CLEARED))
    return events
