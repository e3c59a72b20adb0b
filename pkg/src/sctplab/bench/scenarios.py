"""Scenario runners: bulk transfers, loss sweeps, multistream layouts,
connection scaling, and path failover.

Every runner takes a ScenarioConfig and returns either a MetricsReport
(single transfers) or a structure carrying CSV-ready rows. All runs are
deterministic in cfg.seed.
"""

from dataclasses import dataclass, field, replace
from statistics import fmean

from ..netsim import NS_PER_MS
from .config import DEFAULT_DROP_LIST, to_assoc_config
from .drivers import (MsgSink, MsgSource, PacedSource, Rig, TcpSink,
                      TcpSource, build_report, flow_latencies)
from .metrics import (FAILOVER_COLUMNS, LOSS_SWEEP_COLUMNS,
                      MULTISTREAM_COLUMNS, RUN_COLUMNS, SCALING_COLUMNS,
                      MetricsReport, report_row)

FALLBACK_MSG_BYTES = 12288
FALLBACK_BYTE_TARGET = 64 << 20
PACED_MSG_BYTES = 512           # single chunk, a few fit in cwnd at start


def _prop_ns(cfg) -> int:
    return int(cfg.rtt_us * 1000 / 2)


def _msg_plan(cfg):
    msg = cfg.msg_bytes or FALLBACK_MSG_BYTES
    if cfg.msg_count > 0:
        total = cfg.msg_count
    else:
        target = cfg.byte_target or FALLBACK_BYTE_TARGET
        total = -(-target // msg)
    return msg, total


def _cap_ms(total_bytes, cfg) -> float:
    if cfg.duration_ms > 0:
        return cfg.duration_ms
    ideal_ms = total_bytes * 8 / cfg.bandwidth_bps * 1000.0
    return ideal_ms * (4.0 + 120.0 * cfg.drop_prob) + 3000.0


class RunHandle:
    """A finished single transfer with its rig still inspectable."""

    def __init__(self, rig, sink, sources, report):
        self.rig = rig
        self.sink = sink
        self.sources = sources
        self.report = report


def _transfer(cfg, n_paths=1, capture_frames=False) -> RunHandle:
    msg, total = _msg_plan(cfg)
    n_conns = max(1, cfg.assocs)
    n_streams = max(1, cfg.streams)
    per_conn = -(-total // n_conns)
    expected = per_conn * n_conns
    acfg = to_assoc_config(cfg, n_paths=n_paths, n_streams=n_streams)
    rig = Rig(acfg, protocol=cfg.protocol, n_conns=n_conns, n_paths=n_paths,
              bandwidth_bps=cfg.bandwidth_bps, prop_ns=_prop_ns(cfg),
              drop=cfg.drop_prob, queue_capacity=cfg.queue_capacity,
              seed=cfg.seed, rwnd=cfg.rwnd, capture_frames=capture_frames,
              cpu_budget=cfg.cpu_budget)
    if cfg.protocol == "sctp":
        sink = MsgSink(expected)
        sources = [MsgSource(i, per_conn, msg, n_streams=n_streams)
                   for i in range(n_conns)]

        def hooked(idx, ep):
            ep.on_delivered = sink.hook(idx)

        rig.on_accept(hooked)
    else:
        sink = TcpSink(expected, msg)
        sources = [TcpSource(i, per_conn, msg) for i in range(n_conns)]
        for i in range(n_conns):
            rig.servers[i].on_delivered = sink.hook(i)
    for src, ep in zip(sources, rig.clients):
        src.attach(ep)
    rig.connect_all()
    rig.run(sink.done, _cap_ms(expected * msg, cfg))
    return RunHandle(rig, sink, sources, build_report(rig, cfg, sink, sources))


def run_single(cfg) -> MetricsReport:
    """One bulk transfer (bulk_12k, small_128b, or any explicit sizing)."""
    return _transfer(cfg).report


def run_loss_sweep(cfg):
    """Rows of per-(drop, mode) means over a common seed schedule."""
    drops = tuple(cfg.drop_list) if cfg.drop_list else DEFAULT_DROP_LIST
    seeds = [cfg.seed + i for i in range(max(1, cfg.sweep_seeds))]
    rows = []
    for drop in drops:
        for mode in cfg.modes:
            reps = []
            for s in seeds:
                sub = replace(cfg, drop_prob=drop, seed=s,
                              protocol="tcp" if mode == "tcp" else "sctp",
                              gbn=(mode == "sctp_gbn"))
                reps.append(run_single(sub))
            rows.append({
                "drop_prob": drop,
                "mode": mode,
                "goodput_mbps": fmean(r.goodput_mbps for r in reps),
                "retransmits": fmean(r.packets_retransmitted for r in reps),
                "sacks": fmean(r.sacks_sent for r in reps),
                "cpu_proxy": fmean(r.cpu_proxy for r in reps),
            })
    rows.sort(key=lambda r: (r["drop_prob"], r["mode"]))
    return rows


# -- multistream ---------------------------------------------------------------

MULTISTREAM_TOPOLOGIES = (
    ("4tcp", "tcp", 4, 1),
    ("4sctp", "sctp", 4, 1),
    ("2sctp_2str", "sctp", 2, 2),
)


@dataclass
class MultistreamReport:
    rows: list = field(default_factory=list)
    paced_clean: dict = field(default_factory=dict)   # (conn, stream) -> [ns]
    paced_lossy: dict = field(default_factory=dict)


def run_multistream(cfg) -> MultistreamReport:
    """Bulk parity across three layouts plus the paced-loss experiment.

    The three layouts move the same total bytes: four TCP connections,
    four single-stream associations, and two associations carrying two
    streams each. The paced experiment then injects deterministic loss
    into exactly one stream and reports per-stream latency.
    """
    msg = cfg.msg_bytes or 2560
    target = cfg.byte_target or (16 << 20)
    per_flow = -(-target // (4 * msg))
    out = MultistreamReport()
    for name, protocol, n_conns, n_streams in MULTISTREAM_TOPOLOGIES:
        sub = replace(cfg, protocol=protocol, assocs=n_conns,
                      streams=n_streams, msg_bytes=msg,
                      msg_count=per_flow * n_conns * n_streams)
        h = _transfer(sub)
        coarse = (h.rig.client_ledger.elapsed_proxy("coarse")
                  + h.rig.server_ledger.elapsed_proxy("coarse"))
        fine = (h.rig.client_ledger.elapsed_proxy("fine")
                + h.rig.server_ledger.elapsed_proxy("fine"))
        out.rows.append({
            "topology": name,
            "goodput_mbps": h.report.goodput_mbps,
            "cpu_proxy": h.report.cpu_proxy,
            "elapsed_coarse": coarse,
            "elapsed_fine": fine,
        })
    out.paced_clean = run_paced_multistream(cfg, inject_loss=False)
    out.paced_lossy = run_paced_multistream(cfg, inject_loss=True)
    return out


def run_paced_multistream(cfg, inject_loss, n_msgs=16, spacing_us=500.0,
                          offset_us=250.0, start_ms=1.0):
    """Two associations, two streams each, paced small messages.

    With inject_loss three mid-run data frames of association 1 that
    carry only its first stream are dropped on the forward path; the
    second stream is the untouched observer. Messages are a single
    chunk and small enough that even three unacked victim messages
    plus one in-flight observer message stay inside the initial
    congestion window, so the shared window never gates the observer
    stream. Returns {(conn, stream): [latency_ns, ...]}.
    """
    msg = PACED_MSG_BYTES
    acfg = to_assoc_config(cfg, n_streams=2)
    rig = Rig(acfg, protocol="sctp", n_conns=2,
              bandwidth_bps=cfg.bandwidth_bps, prop_ns=_prop_ns(cfg),
              drop=0.0, queue_capacity=cfg.queue_capacity, seed=cfg.seed,
              rwnd=cfg.rwnd)
    t0 = int(start_ms * NS_PER_MS)
    spacing = int(spacing_us * 1000)
    offset = int(offset_us * 1000)
    sources = []
    for i in range(2):
        plan = [(t0 + k * spacing, 0) for k in range(n_msgs)]
        plan += [(t0 + offset + k * spacing, 1) for k in range(n_msgs)]
        sources.append(PacedSource(i, plan, msg))
    sink = MsgSink(4 * n_msgs)

    def hooked(idx, ep):
        ep.on_delivered = sink.hook(idx)

    rig.on_accept(hooked)
    for src, ep in zip(sources, rig.clients):
        src.attach(ep)
    if inject_loss:
        # Skip the early messages: with the window still at its initial
        # size, a loss there would gate the other stream's sends too.
        state = {"seen": 0}

        def inject(frame):
            m = frame.meta
            if (m.get("kind") == "data" and m.get("new_data")
                    and m.get("assoc") == 1 and m.get("streams") == (0,)):
                idx = state["seen"]
                state["seen"] += 1
                return 5 <= idx <= 7
            return False

        rig.pairs[0].fwd[0].forced_drop = inject
    rig.connect_all()
    cap_ms = start_ms + n_msgs * spacing_us / 1000.0 + 500.0
    rig.run(sink.done, cap_ms)
    return flow_latencies(sources, sink)


def run_hol_pair(cfg, two_streams, inject_loss, n_msgs=12,
                 spacing_us=250.0, start_ms=1.0):
    """Two message flows through one association, with or without their
    own streams.

    Flows A and B alternate on a fixed submission grid. When loss is
    injected, both packets of A's fourth message are dropped; B is never
    touched directly. Returns {"A": [latency_ns], "B": [latency_ns]}.
    """
    msg = cfg.msg_bytes or 2560
    acfg = to_assoc_config(cfg, n_streams=2 if two_streams else 1)
    rig = Rig(acfg, protocol="sctp", n_conns=1,
              bandwidth_bps=cfg.bandwidth_bps, prop_ns=_prop_ns(cfg),
              drop=0.0, queue_capacity=cfg.queue_capacity, seed=cfg.seed,
              rwnd=cfg.rwnd)
    t0 = int(start_ms * NS_PER_MS)
    spacing = int(spacing_us * 1000)
    submits = {"A": [], "B": []}
    delivers = {"A": [], "B": []}

    def submit(ep, flow, stream):
        submits[flow].append(ep.sim.now)
        ep.submit(stream, flow.encode() * msg)

    def deliver(ep, stream, payload):
        delivers[chr(payload[0])].append(ep.sim.now)

    def hooked(idx, ep):
        ep.on_delivered = deliver

    rig.on_accept(hooked)
    client = rig.clients[0]
    b_stream = 1 if two_streams else 0
    for k in range(n_msgs):
        rig.sim.schedule_at(t0 + 2 * k * spacing, submit, client, "A", 0)
        rig.sim.schedule_at(t0 + (2 * k + 1) * spacing, submit, client, "B",
                            b_stream)
    if inject_loss:
        state = {"seen": 0}

        def inject(frame):
            m = frame.meta
            if m.get("kind") == "data" and m.get("new_data"):
                idx = state["seen"]
                state["seen"] += 1
                if idx in (12, 13):     # both packets of A's 4th message
                    return True
            return False

        rig.pairs[0].fwd[0].forced_drop = inject
    rig.connect_all()

    def done():
        return len(delivers["A"]) + len(delivers["B"]) >= 2 * n_msgs

    cap_ms = start_ms + 2 * n_msgs * spacing_us / 1000.0 + 500.0
    rig.run(done, cap_ms)
    return {
        "A": [d - s for s, d in zip(submits["A"], delivers["A"])],
        "B": [d - s for s, d in zip(submits["B"], delivers["B"])],
    }


# -- scaling -------------------------------------------------------------------

def run_scaling(cfg):
    """Connection-count ladder, one link pair per connection, shared CPU."""
    ladder = sorted({1, 2, 4} | {max(1, cfg.assocs)})
    msg = cfg.msg_bytes or FALLBACK_MSG_BYTES
    per_conn_bytes = cfg.byte_target or (8 << 20)
    per_conn = -(-per_conn_bytes // msg)
    rows = []
    for n in ladder:
        sub = replace(cfg, assocs=n, streams=1, msg_bytes=msg,
                      msg_count=per_conn * n)
        h = _run_scaling_rig(sub, n, msg, per_conn)
        rows.append({
            "n_conns": n,
            "goodput_mbps": h.report.goodput_mbps,
            "cpu_proxy": h.report.cpu_proxy,
        })
    return rows


def _run_scaling_rig(cfg, n_conns, msg, per_conn) -> RunHandle:
    acfg = to_assoc_config(cfg, n_streams=1)
    rig = Rig(acfg, protocol=cfg.protocol, n_conns=n_conns,
              bandwidth_bps=cfg.bandwidth_bps, prop_ns=_prop_ns(cfg),
              drop=cfg.drop_prob, queue_capacity=cfg.queue_capacity,
              seed=cfg.seed, rwnd=cfg.rwnd, nic_per_conn=True,
              cpu_budget=cfg.cpu_budget)
    expected = per_conn * n_conns
    if cfg.protocol == "sctp":
        sink = MsgSink(expected)
        sources = [MsgSource(i, per_conn, msg) for i in range(n_conns)]

        def hooked(idx, ep):
            ep.on_delivered = sink.hook(idx)

        rig.on_accept(hooked)
    else:
        sink = TcpSink(expected, msg)
        sources = [TcpSource(i, per_conn, msg) for i in range(n_conns)]
        for i in range(n_conns):
            rig.servers[i].on_delivered = sink.hook(i)
    for src, ep in zip(sources, rig.clients):
        src.attach(ep)
    rig.connect_all()
    rig.run(sink.done, _cap_ms(expected * msg, cfg))
    return RunHandle(rig, sink, sources, build_report(rig, cfg, sink, sources))


# -- failover ------------------------------------------------------------------

@dataclass
class FailoverReport:
    report: MetricsReport
    completed: bool = False
    t_kill_ms: float = -1.0
    t_revive_ms: float = -1.0
    t_last_primary_ms: float = -1.0
    t_first_alternate_ms: float = -1.0
    t_failover_ms: float = -1.0
    t_restored_ms: float = -1.0
    t_back_primary_ms: float = -1.0
    events: list = field(default_factory=list)
    path_events: list = field(default_factory=list)

    def row(self):
        return {
            "seed": self.report.seed,
            "completed": self.completed,
            "goodput_mbps": self.report.goodput_mbps,
            "t_kill_ms": self.t_kill_ms,
            "t_last_primary_ms": self.t_last_primary_ms,
            "t_first_alternate_ms": self.t_first_alternate_ms,
            "t_failover_ms": self.t_failover_ms,
            "t_revive_ms": self.t_revive_ms,
            "t_restored_ms": self.t_restored_ms,
            "t_back_primary_ms": self.t_back_primary_ms,
        }


def run_failover(cfg) -> FailoverReport:
    """Dual-path transfer; the primary path dies mid-run and may revive.

    The timeline is reconstructed from the client's frame log: last data
    frame on the primary before traffic moved, first data frame on the
    alternate, and (after revival) the first new data back on the
    primary.
    """
    msg, total = _msg_plan(cfg)
    sub = replace(cfg, msg_bytes=msg, msg_count=total, assocs=1)
    acfg = to_assoc_config(sub, n_paths=2, n_streams=max(1, sub.streams))
    rig = Rig(acfg, protocol="sctp", n_conns=1, n_paths=2,
              bandwidth_bps=sub.bandwidth_bps, prop_ns=_prop_ns(sub),
              drop=sub.drop_prob, queue_capacity=sub.queue_capacity,
              seed=sub.seed, rwnd=sub.rwnd, capture_frames=True)
    sink = MsgSink(total)
    source = MsgSource(0, total, msg, n_streams=max(1, sub.streams))

    def hooked(idx, ep):
        ep.on_delivered = sink.hook(idx)

    rig.on_accept(hooked)
    source.attach(rig.clients[0])
    dead = {"on": False}
    pair = rig.pairs[0]
    pair.fwd[0].forced_drop = lambda frame: dead["on"]
    pair.rev[0].forced_drop = lambda frame: dead["on"]

    def set_dead(flag):
        dead["on"] = flag

    kill_ns = int(cfg.kill_ms * NS_PER_MS)
    rig.sim.schedule_at(kill_ns, set_dead, True)
    revive_ns = -1
    if cfg.revive_ms > cfg.kill_ms:
        revive_ns = int(cfg.revive_ms * NS_PER_MS)
        rig.sim.schedule_at(revive_ns, set_dead, False)
    rig.connect_all()
    cap = _cap_ms(total * msg, cfg) + 4000.0
    completed = rig.run(sink.done, cap)

    out = FailoverReport(report=build_report(rig, cfg, sink, [source]),
                         completed=completed, t_kill_ms=cfg.kill_ms)
    if revive_ns >= 0:
        out.t_revive_ms = cfg.revive_ms
    out.events = pair.client_log.events
    out.path_events = list(rig.clients[0].path_events)
    for t, what, path in out.path_events:
        if what == "failover" and path == 0 and out.t_failover_ms < 0:
            out.t_failover_ms = t / NS_PER_MS
        if what == "restored" and path == 0 and out.t_restored_ms < 0:
            out.t_restored_ms = t / NS_PER_MS
    data = [(t, path, new) for t, path, kind, new, _a, _s in out.events
            if kind == "data"]
    first_alt = next((t for t, path, _n in data
                      if path != 0 and t >= kill_ns), -1)
    if first_alt >= 0:
        out.t_first_alternate_ms = first_alt / NS_PER_MS
        last_primary = [t for t, path, _n in data
                        if path == 0 and t <= first_alt]
        if last_primary:
            out.t_last_primary_ms = last_primary[-1] / NS_PER_MS
    if out.t_restored_ms >= 0:
        restored_ns = out.t_restored_ms * NS_PER_MS
        back = next((t for t, path, new in data
                     if path == 0 and new and t >= restored_ns), -1)
        if back >= 0:
            out.t_back_primary_ms = back / NS_PER_MS
    return out


# -- dispatch ------------------------------------------------------------------

def run_scenario(cfg):
    """Run cfg.scenario and return its native result object."""
    if cfg.scenario == "loss_sweep":
        return run_loss_sweep(cfg)
    if cfg.scenario == "multistream":
        return run_multistream(cfg)
    if cfg.scenario == "scaling":
        return run_scaling(cfg)
    if cfg.scenario == "failover":
        return run_failover(cfg)
    return run_single(cfg)


def scenario_rows(cfg, result):
    """Flatten a run_scenario result into (rows, columns) for the CSV."""
    if cfg.scenario == "loss_sweep":
        return result, LOSS_SWEEP_COLUMNS
    if cfg.scenario == "multistream":
        return result.rows, MULTISTREAM_COLUMNS
    if cfg.scenario == "scaling":
        return result, SCALING_COLUMNS
    if cfg.scenario == "failover":
        return [result.row()], FAILOVER_COLUMNS
    return [report_row(result)], RUN_COLUMNS
