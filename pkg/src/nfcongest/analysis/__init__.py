"""Congestion analysis over collected flow records."""

from .alerts import (AlertConfig, AlertEvent, AlertRule, ConfigError, evaluate_alerts,
                     load_alert_config, parse_alert_config)
from .bottleneck import BottleneckReport, trace_bottlenecks
from .periods import PartExceedsTotal, apportion, format_mb, percent, period_histogram
from .tables import (ConversationKey, LinkId, UnknownConversation, UnknownEntity, UnknownHost,
                     UnknownLink, dedup_conversation_view, link_totals, table_conversation_paths,
                     table_host_inout, table_host_load, table_host_peers, table_host_ports,
                     table_link_load, table_unloaded_links)
