"""Run metrics and deterministic CSV emission.

Column orders are fixed here so reruns produce byte-identical files.
Floats are rendered with 6 significant digits.
"""

from dataclasses import dataclass, field


@dataclass
class LatencyStats:
    n: int = 0
    mean_us: float = 0.0
    p50_us: float = 0.0
    p90_us: float = 0.0
    p99_us: float = 0.0


@dataclass
class MetricsReport:
    scenario: str = ""
    protocol: str = ""
    seed: int = 0
    elapsed_ms: float = 0.0
    bytes_delivered: int = 0
    goodput_mbps: float = 0.0
    packets_sent: int = 0
    packets_delivered: int = 0
    packets_dropped: int = 0
    packets_retransmitted: int = 0
    sacks_sent: int = 0
    copy_bytes: int = 0
    cpu_proxy: float = 0.0
    handshake_us: float = 0.0
    tcb_footprint: int = 0
    # (assoc index, stream) -> LatencyStats
    latency: dict = field(default_factory=dict)

    def overall_latency(self) -> LatencyStats:
        """Weighted aggregate across every (assoc, stream) flow."""
        total = sum(s.n for s in self.latency.values())
        if total == 0:
            return LatencyStats()
        agg = LatencyStats(n=total)
        agg.mean_us = sum(s.mean_us * s.n for s in self.latency.values()) / total
        # percentile of percentiles is not a percentile; report the worst
        agg.p50_us = max(s.p50_us for s in self.latency.values())
        agg.p90_us = max(s.p90_us for s in self.latency.values())
        agg.p99_us = max(s.p99_us for s in self.latency.values())
        return agg


RUN_COLUMNS = (
    "scenario", "protocol", "seed", "elapsed_ms", "bytes_delivered",
    "goodput_mbps", "packets_sent", "packets_delivered", "packets_dropped",
    "packets_retransmitted", "sacks_sent", "copy_bytes", "cpu_proxy",
    "handshake_us", "tcb_footprint", "lat_mean_us", "lat_p50_us",
    "lat_p90_us", "lat_p99_us",
)

LOSS_SWEEP_COLUMNS = (
    "drop_prob", "mode", "goodput_mbps", "retransmits", "sacks", "cpu_proxy",
)

SCALING_COLUMNS = ("n_conns", "goodput_mbps", "cpu_proxy")

MULTISTREAM_COLUMNS = (
    "topology", "goodput_mbps", "cpu_proxy", "elapsed_coarse", "elapsed_fine",
)

FAILOVER_COLUMNS = (
    "seed", "completed", "goodput_mbps", "t_kill_ms", "t_last_primary_ms",
    "t_first_alternate_ms", "t_failover_ms", "t_revive_ms", "t_restored_ms",
    "t_back_primary_ms",
)

SCHEMAS = {
    "run": RUN_COLUMNS,
    "loss_sweep": LOSS_SWEEP_COLUMNS,
    "scaling": SCALING_COLUMNS,
    "multistream": MULTISTREAM_COLUMNS,
    "failover": FAILOVER_COLUMNS,
}


def percentile(values, q) -> float:
    """Nearest-rank percentile; deterministic, no interpolation."""
    if not values:
        return 0.0
    ordered = sorted(values)
    rank = max(1, -(-len(ordered) * q // 100))   # ceil without floats
    return float(ordered[int(rank) - 1])


def latency_stats(latencies_ns) -> LatencyStats:
    if not latencies_ns:
        return LatencyStats()
    us = [t / 1000.0 for t in latencies_ns]
    return LatencyStats(
        n=len(us),
        mean_us=sum(us) / len(us),
        p50_us=percentile(us, 50),
        p90_us=percentile(us, 90),
        p99_us=percentile(us, 99),
    )


def fmt_cell(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return "%.6g" % value
    return str(value)


def report_row(rep: MetricsReport) -> dict:
    lat = rep.overall_latency()
    return {
        "scenario": rep.scenario,
        "protocol": rep.protocol,
        "seed": rep.seed,
        "elapsed_ms": rep.elapsed_ms,
        "bytes_delivered": rep.bytes_delivered,
        "goodput_mbps": rep.goodput_mbps,
        "packets_sent": rep.packets_sent,
        "packets_delivered": rep.packets_delivered,
        "packets_dropped": rep.packets_dropped,
        "packets_retransmitted": rep.packets_retransmitted,
        "sacks_sent": rep.sacks_sent,
        "copy_bytes": rep.copy_bytes,
        "cpu_proxy": rep.cpu_proxy,
        "handshake_us": rep.handshake_us,
        "tcb_footprint": rep.tcb_footprint,
        "lat_mean_us": lat.mean_us,
        "lat_p50_us": lat.p50_us,
        "lat_p90_us": lat.p90_us,
        "lat_p99_us": lat.p99_us,
    }


def render_csv(rows, columns) -> str:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(fmt_cell(row[c]) for c in columns))
    return "\n".join(lines) + "\n"


def emit_csv(rows, columns, destination) -> int:
    """Write header + rows to a path or file-like; returns bytes written."""
    text = render_csv(rows, columns)
    data = text.encode()
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "wb") as fh:
            fh.write(data)
    return len(data)
