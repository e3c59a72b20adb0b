"""Topology rigs and traffic drivers shared by the benchmark scenarios.

A Rig owns one simulator plus client/server hosts joined by links. The
default shape is every connection multiplexed over one link pair (one
NIC); nic_per_conn gives each connection its own link pair while both
sides keep sharing a single cost ledger, which is how a multi-NIC,
one-CPU sender is modeled.
"""

from .. import tcpbase
from ..endpoint import Host, SctpEndpoint, SctpListener, TcpEndpoint
from ..netsim import CostLedger, Link, NS_PER_MS, Simulator, stream_rng
from .metrics import MetricsReport, latency_stats

LISTEN_PORT = 7000
CLIENT_PORT_BASE = 6000
COOKIE_SECRET = b"bench-cookie-secret"
DRIVE_STEP_MS = 5.0


class FrameLog:
    """Per-host send tap: counts by frame class, optional event capture."""

    def __init__(self, sim, capture=False):
        self.sim = sim
        self.capture = capture
        self.events = []        # (t_ns, path, kind, new_data, assoc, streams)
        self.data_new = 0
        self.data_retx = 0
        self.ack_pkts = 0
        self.ctl_pkts = 0
        self.hb_pkts = 0

    def __call__(self, frame, path):
        meta = frame.meta
        kind = meta.get("kind")
        new = meta.get("new_data", False)
        if kind in ("data", "seg"):
            if new:
                self.data_new += 1
            else:
                self.data_retx += 1
        elif kind in ("sack", "ack"):
            self.ack_pkts += 1
        elif kind == "hb":
            self.hb_pkts += 1
        else:
            self.ctl_pkts += 1
        if self.capture:
            self.events.append((self.sim.now, path, kind, new,
                                meta.get("assoc"), meta.get("streams")))


class NetPair:
    """A client host and a server host joined by n_paths link pairs."""

    def __init__(self, sim, idx, n_paths, bandwidth_bps, prop_ns, drop,
                 queue_capacity, seed, client_ledger, server_ledger,
                 checksum, capture_frames):
        self.client = Host(sim, client_ledger, "c%d" % idx, checksum)
        self.server = Host(sim, server_ledger, "s%d" % idx, checksum)
        self.fwd = []
        self.rev = []
        for p in range(n_paths):
            key = 2 * (idx * n_paths + p)
            fwd = Link(sim, "c%d>s%d.%d" % (idx, idx, p), bandwidth_bps,
                       prop_ns, drop_prob=drop, queue_capacity=queue_capacity,
                       seed=seed, key=key, deliver=self.server.receiver(p))
            rev = Link(sim, "s%d>c%d.%d" % (idx, idx, p), bandwidth_bps,
                       prop_ns, drop_prob=drop, queue_capacity=queue_capacity,
                       seed=seed, key=key + 1, deliver=self.client.receiver(p))
            self.client.attach_link(fwd)
            self.server.attach_link(rev)
            self.fwd.append(fwd)
            self.rev.append(rev)
        self.client_log = FrameLog(sim, capture_frames)
        self.server_log = FrameLog(sim, capture_frames)
        self.client.tap = self.client_log
        self.server.tap = self.server_log


class Rig:
    """N connections between a client side and a server side."""

    def __init__(self, acfg, *, protocol="sctp", n_conns=1, n_paths=1,
                 bandwidth_bps=1_000_000_000, prop_ns=51_000, drop=0.0,
                 queue_capacity=256, seed=7, rwnd=131072,
                 nic_per_conn=False, capture_frames=False, cpu_budget=0.0,
                 tcp_sack=False):
        self.acfg = acfg
        self.protocol = protocol
        self.n_conns = n_conns
        self.seed = seed
        self.sim = Simulator()
        self.client_ledger = CostLedger()
        self.server_ledger = CostLedger()
        self._nic_per_conn = nic_per_conn
        n_pairs = n_conns if nic_per_conn else 1
        self.pairs = [
            NetPair(self.sim, i, n_paths, bandwidth_bps, prop_ns, drop,
                    queue_capacity, seed, self.client_ledger,
                    self.server_ledger, acfg.checksum, capture_frames)
            for i in range(n_pairs)]
        if cpu_budget > 0:
            for pair in self.pairs:
                pair.client.cpu_budget = cpu_budget
        self.clients = []
        self.servers = [None] * n_conns
        self.listeners = []
        self._accept_hook = None
        if protocol == "sctp":
            for i, pair in enumerate(self.pairs):
                self.listeners.append(
                    SctpListener(pair.server, LISTEN_PORT, acfg,
                                 COOKIE_SECRET, stream_rng(seed, 499),
                                 on_accept=self._on_accept))
            for i in range(n_conns):
                pair = self._pair_of(i)
                self.clients.append(
                    SctpEndpoint(pair.client, acfg,
                                 local_port=CLIENT_PORT_BASE + i,
                                 remote_port=LISTEN_PORT, assoc_id=i + 1,
                                 rng=stream_rng(seed, 500 + i)))
        else:
            for i in range(n_conns):
                pair = self._pair_of(i)
                self.clients.append(
                    TcpEndpoint(pair.client, acfg, conn_id=i,
                                peer_window=rwnd, nagle_on=not acfg.no_delay,
                                sack_enabled=tcp_sack))
                self.servers[i] = TcpEndpoint(pair.server, acfg, conn_id=i,
                                              peer_window=rwnd,
                                              nagle_on=not acfg.no_delay,
                                              sack_enabled=tcp_sack)

    def _pair_of(self, conn_idx):
        return self.pairs[conn_idx if self._nic_per_conn else 0]

    def _on_accept(self, ep):
        idx = ep.tcb.remote_port - CLIENT_PORT_BASE
        self.servers[idx] = ep
        if self._accept_hook is not None:
            self._accept_hook(idx, ep)

    def on_accept(self, hook):
        """hook(conn_idx, endpoint) fires when the server side commits."""
        self._accept_hook = hook

    def connect_all(self):
        for c in self.clients:
            c.connect()

    def run(self, done_fn, cap_ms, step_ms=DRIVE_STEP_MS) -> bool:
        """Advance in fixed steps until done_fn() or the cap; True if done."""
        cap = int(cap_ms * NS_PER_MS)
        step = int(step_ms * NS_PER_MS)
        while True:
            if done_fn():
                return True
            if self.sim.now >= cap or self.sim.pending_events() == 0:
                return done_fn()
            self.sim.run_until(min(self.sim.now + step, cap))

    # -- rollups --------------------------------------------------------------

    def link_totals(self):
        sent = delivered = dropped = 0
        for pair in self.pairs:
            for link in pair.fwd + pair.rev:
                sent += link.frames_sent
                delivered += link.frames_delivered
                dropped += (link.dropped_random + link.dropped_queue
                            + link.dropped_forced)
        return sent, delivered, dropped

    def retransmitted_packets(self) -> int:
        return sum(p.client_log.data_retx + p.server_log.data_retx
                   for p in self.pairs)

    def sacks_built(self) -> int:
        if self.protocol != "sctp":
            return 0
        total = 0
        for ep in list(self.clients) + [s for s in self.servers if s]:
            if ep.rx is not None:
                total += ep.rx.sacks_built
        return total

    def copy_bytes(self) -> int:
        if self.protocol != "sctp":
            return 0
        return sum(c.tx.copies.copy_bytes for c in self.clients
                   if c.tx is not None)

    def handshake_ns(self) -> int:
        times = [c.established_at - c.connect_started_at
                 for c in self.clients if c.established_at >= 0]
        return max(times) if times else -1


class MsgSource:
    """Feeds count messages of size nbytes, round-robin over streams."""

    def __init__(self, conn_idx, count, nbytes, n_streams=1,
                 close_when_done=True):
        self.conn_idx = conn_idx
        self.count = count
        self.nbytes = nbytes
        self.n_streams = n_streams
        self.close_when_done = close_when_done
        self.sent = 0
        self.closed = False
        self.submit_times = {s: [] for s in range(n_streams)}

    def attach(self, ep):
        ep.on_established = self.feed
        ep.on_send_room = self.feed

    def feed(self, ep):
        while self.sent < self.count and ep.can_submit(self.nbytes):
            stream = self.sent % self.n_streams
            self.submit_times[stream].append(ep.sim.now)
            ep.submit(stream, b"\xa5" * self.nbytes)
            self.sent += 1
        if (self.sent == self.count and self.close_when_done
                and not self.closed):
            self.closed = True
            ep.close()


class PacedSource:
    """Submits (t_ns, stream) scheduled messages of a fixed size."""

    def __init__(self, conn_idx, plan, nbytes):
        self.conn_idx = conn_idx
        self.plan = sorted(plan)
        self.nbytes = nbytes
        self.submit_times = {}

    def attach(self, ep):
        for t_ns, stream in self.plan:
            ep.sim.schedule_at(t_ns, self._submit, ep, stream)

    def _submit(self, ep, stream):
        self.submit_times.setdefault(stream, []).append(ep.sim.now)
        ep.submit(stream, b"\x5a" * self.nbytes)


class MsgSink:
    """Collects per-flow delivery times for SCTP message streams."""

    def __init__(self, expected_msgs):
        self.expected = expected_msgs
        self.msgs = 0
        self.bytes = 0
        self.last_t = 0
        self.deliver_times = {}     # (conn_idx, stream) -> [t_ns]

    def hook(self, conn_idx):
        def deliver(ep, stream, payload):
            self.msgs += 1
            self.bytes += len(payload)
            self.last_t = ep.sim.now
            self.deliver_times.setdefault((conn_idx, stream),
                                          []).append(ep.sim.now)
        return deliver

    def done(self) -> bool:
        return self.msgs >= self.expected


class TcpSource:
    """Feeds count messages of size nbytes down a TCP byte stream."""

    def __init__(self, conn_idx, count, nbytes):
        self.conn_idx = conn_idx
        self.count = count
        self.nbytes = nbytes
        self.sent = 0
        self.submit_times = {0: []}

    def attach(self, ep):
        ep.on_established = self.feed
        ep.on_send_room = self.feed

    def feed(self, ep):
        while self.sent < self.count and ep.can_submit(self.nbytes):
            self.submit_times[0].append(ep.sim.now)
            ep.submit(b"\xa5" * self.nbytes)
            self.sent += 1


class TcpSink:
    """Slices a TCP byte stream back into msg_bytes-sized messages."""

    def __init__(self, expected_msgs, nbytes):
        self.expected = expected_msgs
        self.nbytes = nbytes
        self.msgs = 0
        self.bytes = 0
        self.last_t = 0
        self.deliver_times = {}
        self._residue = {}

    def hook(self, conn_idx):
        def deliver(ep, data):
            self.bytes += len(data)
            self.last_t = ep.sim.now
            have = self._residue.get(conn_idx, 0) + len(data)
            while have >= self.nbytes:
                have -= self.nbytes
                self.msgs += 1
                self.deliver_times.setdefault((conn_idx, 0),
                                              []).append(ep.sim.now)
            self._residue[conn_idx] = have
        return deliver

    def done(self) -> bool:
        return self.msgs >= self.expected


def flow_latencies(sources, sink):
    """Pair submit and delivery times FIFO per (conn, stream)."""
    out = {}
    for src in sources:
        for stream, submits in src.submit_times.items():
            key = (src.conn_idx, stream)
            delivers = sink.deliver_times.get(key, [])
            out[key] = [d - s for s, d in zip(submits, delivers)]
    return out


def build_report(rig, cfg, sink, sources, elapsed_ns=None) -> MetricsReport:
    rep = MetricsReport(scenario=cfg.scenario, protocol=rig.protocol,
                        seed=rig.seed)
    elapsed = elapsed_ns if elapsed_ns is not None else sink.last_t
    rep.elapsed_ms = elapsed / 1e6
    rep.bytes_delivered = sink.bytes
    if elapsed > 0:
        rep.goodput_mbps = sink.bytes * 8 / (elapsed / 1e9) / 1e6
    sent, delivered, dropped = rig.link_totals()
    rep.packets_sent = sent
    rep.packets_delivered = delivered
    rep.packets_dropped = dropped
    rep.packets_retransmitted = rig.retransmitted_packets()
    rep.sacks_sent = rig.sacks_built()
    rep.copy_bytes = rig.copy_bytes()
    rep.cpu_proxy = (rig.client_ledger.cpu_proxy()
                     + rig.server_ledger.cpu_proxy())
    hs = rig.handshake_ns()
    rep.handshake_us = hs / 1e3 if hs >= 0 else -1.0
    if rig.protocol == "sctp":
        rep.tcb_footprint = rig.clients[0].footprint()
    else:
        rep.tcb_footprint = tcpbase.TCP_FOOTPRINT
    for key, lats in sorted(flow_latencies(sources, sink).items()):
        rep.latency[key] = latency_stats(lats)
    return rep
