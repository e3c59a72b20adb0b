"""Metrics shaping and deterministic CSV emission."""

import io

from sctplab.bench.metrics import (
    LOSS_SWEEP_COLUMNS, RUN_COLUMNS, LatencyStats, MetricsReport, emit_csv,
    fmt_cell, latency_stats, percentile, render_csv, report_row,
)


# ---------------------------------------------------------------------------
# percentile (nearest rank)

def test_percentile_empty():
    assert percentile([], 50) == 0.0


def test_percentile_single():
    assert percentile([41.0], 99) == 41.0


def test_percentile_nearest_rank_no_interpolation():
    vals = [10, 20, 30, 40]
    assert percentile(vals, 50) == 20      # rank ceil(4*.5)=2
    assert percentile(vals, 75) == 30
    assert percentile(vals, 76) == 40      # rank ceil(3.04)=4
    assert percentile(vals, 100) == 40


def test_percentile_order_independent():
    assert percentile([30, 10, 20], 50) == percentile([10, 20, 30], 50)


def test_latency_stats_ns_to_us():
    s = latency_stats([1000, 2000, 3000])
    assert s.n == 3
    assert s.mean_us == 2.0
    assert s.p50_us == 2.0
    assert s.p99_us == 3.0


# ---------------------------------------------------------------------------
# cell formatting

def test_fmt_cell_six_significant_digits():
    assert fmt_cell(953.8121999) == "953.812"
    assert fmt_cell(0.005) == "0.005"
    assert fmt_cell(1234567.0) == "1.23457e+06"


def test_fmt_cell_bool_as_bit():
    assert fmt_cell(True) == "1"
    assert fmt_cell(False) == "0"


def test_fmt_cell_int_verbatim():
    assert fmt_cell(123456789) == "123456789"


# ---------------------------------------------------------------------------
# csv emission

def _rows():
    return [
        {"drop_prob": 0.0, "mode": "sctp_sack", "goodput_mbps": 953.812345,
         "retransmits": 0.0, "sacks": 7025.0, "cpu_proxy": 1.5e7},
        {"drop_prob": 0.025, "mode": "sctp_gbn", "goodput_mbps": 94.25,
         "retransmits": 242.2, "sacks": 618.0, "cpu_proxy": 6.7e6},
    ]


def test_emit_csv_header_plus_rows():
    buf = io.StringIO()
    emit_csv(_rows(), LOSS_SWEEP_COLUMNS, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "drop_prob,mode,goodput_mbps,retransmits,sacks,cpu_proxy"
    assert lines[1] == "0,sctp_sack,953.812,0,7025,1.5e+07"
    assert len(lines) == 3


def test_emit_csv_empty_sweep_is_header_only():
    buf = io.StringIO()
    n = emit_csv([], LOSS_SWEEP_COLUMNS, buf)
    assert buf.getvalue() == ",".join(LOSS_SWEEP_COLUMNS) + "\n"
    assert n == len(buf.getvalue())


def test_emit_csv_same_rows_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_csv(_rows(), LOSS_SWEEP_COLUMNS, str(a))
    emit_csv(_rows(), LOSS_SWEEP_COLUMNS, str(b))
    assert a.read_bytes() == b.read_bytes()


def test_emit_csv_returns_bytes_written(tmp_path):
    p = tmp_path / "c.csv"
    n = emit_csv(_rows(), LOSS_SWEEP_COLUMNS, str(p))
    assert n == len(p.read_bytes())


def test_render_csv_trailing_newline():
    assert render_csv([], ("a", "b")).endswith("\n")


# ---------------------------------------------------------------------------
# report rows

def test_report_row_covers_run_schema():
    rep = MetricsReport(scenario="bulk_12k", protocol="sctp", seed=7,
                        goodput_mbps=950.0)
    row = report_row(rep)
    assert tuple(row) == RUN_COLUMNS


def test_overall_latency_weights_by_count():
    rep = MetricsReport()
    rep.latency[(0, 0)] = LatencyStats(n=3, mean_us=10.0, p50_us=10, p90_us=10,
                                       p99_us=10)
    rep.latency[(0, 1)] = LatencyStats(n=1, mean_us=50.0, p50_us=50, p90_us=50,
                                       p99_us=50)
    agg = rep.overall_latency()
    assert agg.n == 4
    assert agg.mean_us == 20.0             # (3*10 + 1*50) / 4
    assert agg.p99_us == 50                # worst flow wins the percentiles


def test_overall_latency_empty():
    assert MetricsReport().overall_latency().n == 0
