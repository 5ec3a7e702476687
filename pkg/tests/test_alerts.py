import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nfcongest.analysis import AlertRule, ConfigError, evaluate_alerts, parse_alert_config
from nfcongest.analysis.alerts import CLEARED, RAISED
from nfcongest.analysis.tables import LinkId

from conftest import flow

LINK = LinkId("10.0.0.1", "10.0.0.2")
T0 = 1_704_067_200_000


def link_flow(start, nbytes, dur=60_000):
    return flow(nbytes=nbytes, first=start, last=start + dur, exporter=LINK.from_addr, nh=LINK.to_addr)


def test_80_mbps_raises():
    rule = AlertRule("link", LINK, 50.0)
    (ev,) = evaluate_alerts([link_flow(T0, 600_000_000)], [rule], 60)
    assert ev.state == RAISED and ev.observed_mbps == pytest.approx(80.0)
    assert ev.render() == "2024-01-01T00:00:00Z RAISED link 10.0.0.1=>10.0.0.2 80.00 > 50.00"


def test_quiet_traffic_no_events():
    recs = [link_flow(T0 + i * 60_000, 1_000_000) for i in range(10)]
    assert evaluate_alerts(recs, [AlertRule("link", LINK, 50.0)], 60) == []


def square_wave(pattern, high=450_000_000, low=30_000_000):
    # 450 MB/min = 60 Mbit/s, 30 MB/min = 4 Mbit/s
    return [link_flow(T0 + i * 60_000, high if on else low) for i, on in enumerate(pattern)]


@pytest.mark.parametrize("pattern", [
    [1, 1, 0, 0, 1, 0, 1, 1, 1, 0],
    [0, 1, 0, 1, 0, 1, 0],
    [1, 0],
])
def test_square_wave_one_pair_per_burst(pattern):
    events = evaluate_alerts(square_wave(pattern), [AlertRule("link", LINK, 50.0, 0.8)], 60)
    bursts = sum(1 for i, on in enumerate(pattern) if on and (i == 0 or not pattern[i - 1]))
    assert [e.state for e in events] == [RAISED, CLEARED] * bursts
    rises = [i for i, on in enumerate(pattern) if on and (i == 0 or not pattern[i - 1])]
    assert [(e.window_start_ms - T0) // 60_000 for e in events if e.state == RAISED] == rises


def test_hysteresis_holds_between_clear_level_and_threshold():
    # 45 Mbit/s sits between 40 (clear level) and 50 (threshold)
    recs = square_wave([1, 0, 1], low=337_500_000)
    events = evaluate_alerts(recs, [AlertRule("link", LINK, 50.0, 0.8)], 60)
    assert [e.state for e in events] == [RAISED]


def test_host_rule_counts_deduplicated_traffic():
    recs = [flow(src="10.0.0.5", dst="10.0.0.6", nbytes=600_000_000, first=T0, last=T0 + 60_000,
                 exporter=e, nh="10.0.0.9") for e in ("10.0.0.1", "10.0.0.2", "10.0.0.3")]
    (ev,) = evaluate_alerts(recs, [AlertRule("host", "10.0.0.6", 50.0)], 60)
    assert ev.observed_mbps == pytest.approx(80.0)
    assert ev.render().split()[2:4] == ["host", "10.0.0.6"]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 1_000_000_000), min_size=1, max_size=30), st.floats(0.1, 1.0))
def test_events_alternate_and_match_brute_force(volumes, ratio):
    recs = [link_flow(T0 + i * 60_000, v + 1) for i, v in enumerate(volumes)]
    rule = AlertRule("link", LINK, 50.0, ratio)
    events = evaluate_alerts(recs, [rule], 60)
    states = [e.state for e in events]
    assert states == [RAISED, CLEARED] * (len(states) // 2) + [RAISED] * (len(states) % 2)
    # brute force state machine over per-window volumes
    expected, up = [], False
    for i, v in enumerate(volumes):
        mbps = (v + 1) * 8 / 60e6
        if not up and mbps > 50:
            up = True
            expected.append((i, RAISED))
        elif up and mbps < 50 * ratio:
            up = False
            expected.append((i, CLEARED))
    assert [((e.window_start_ms - T0) // 60_000, e.state) for e in events] == expected


def test_config_parsing():
    cfg = parse_alert_config(
        "# thresholds\nwindow_sec 30\nclear_ratio 0.5\n\n"
        "alert host 10.1.12.7 rate_mbps 100\nalert link 10.1.12.8 10.1.12.6 rate_mbps 20.5  # core\n"
    )
    assert cfg.window_sec == 30
    assert cfg.rules == [AlertRule("host", "10.1.12.7", 100.0, 0.5),
                         AlertRule("link", LinkId("10.1.12.8", "10.1.12.6"), 20.5, 0.5)]


@pytest.mark.parametrize("text, line", [
    ("window_sec 60\nalert host 10.0.0.1 rate 5\n", 2),
    ("window_sec sixty\n", 1),
    ("\n\nclear_ratio 1.5\n", 3),
    ("alert host 10.0.0.1 rate_mbps 0\n", 1),
    ("alert link 10.0.0.1 rate_mbps 5\n", 1),
    ("window_sec 0\n", 1),
])
def test_config_errors_name_line(text, line):
    with pytest.raises(ConfigError) as err:
        parse_alert_config(text, "a.conf")
    assert err.value.line == line
    assert f"a.conf:{line}" in str(err.value)
