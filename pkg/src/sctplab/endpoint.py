"""Endpoints tie the protocol state machines to the simulator: they own
every timer (per-path retransmission, delayed acks, heartbeats, handshake
retries), push packets through the wire codec, and route inbound frames.

A Host models one side of the topology: it holds the outbound links (one
per path), a cost ledger, the listeners, and the verification-tag routing
table. Associations and TCP connections multiplex over the same links the
way they would over one NIC.

Send pacing: a burst is capped at mbs packets, so after releasing one the
endpoint schedules a follow-up kick for the moment the link drains. The
ack clock takes over whenever the window, not the burst cap, is the
binding constraint.

A host may carry a cpu_budget (cost units per simulated second). When the
ledger's cumulative spend runs ahead of that rate, senders on the host
defer their next burst until the clock catches up. This models a shared
CPU saturating under many connections; it is off (0) by default.
"""

from __future__ import annotations

from . import assoc, mhoming, tcpbase, wire
from .netsim import Frame, NS_PER_S
from .rxpath import ReceiverState, SackPolicy
from .txpath import SenderState

MS = 1_000_000
MAX_HANDSHAKE_RETRIES = 8
MAX_SHUTDOWN_RETRIES = 8
SACK_GUARD_MS = 1.0         # ack-starvation guard for count-based SACK policies;
                            # equals rto_min, so a withheld tail ack can lose a
                            # photo finish against the sender's timer and cost
                            # one spurious retransmit at the end of a transfer


class Host:
    """One side of a point-to-point topology: links out, frames in."""

    def __init__(self, sim, ledger, name: str = "host", checksum: bool = False):
        self.sim = sim
        self.ledger = ledger
        self.name = name
        self.checksum = checksum
        self.links = []                 # outbound, index = path id
        self.listeners = {}             # port -> SctpListener
        self.by_vtag = {}               # local verification tag -> SctpEndpoint
        self.tcp_eps = {}               # conn id -> TcpEndpoint
        self.tap = None                 # fn(frame, path) on every send
        self.cpu_budget = 0.0           # ledger units per second, 0 = no gate
        # drop accounting for inbound junk
        self.malformed_drops = 0
        self.checksum_drops = 0
        self.stray_drops = 0

    def attach_link(self, link) -> int:
        """Register an outbound link; inbound delivery is wired by the
        topology builder pointing the reverse link's deliver here."""
        self.links.append(link)
        return len(self.links) - 1

    def receiver(self, path: int):
        """Delivery callback for the link arriving on the given path id."""
        return lambda frame: self.on_frame(frame, path)

    def send_frame(self, frame: Frame, path: int) -> bool:
        if self.tap is not None:
            self.tap(frame, path)
        return self.links[path].transmit(frame)

    def on_frame(self, frame: Frame, path: int):
        payload = frame.payload
        if isinstance(payload, (bytes, bytearray)):
            self._on_sctp(bytes(payload), path)
        else:
            self._on_tcp(payload, path)

    def _on_sctp(self, data: bytes, path: int):
        try:
            pkt = wire.decode_packet(data, verify_checksum=self.checksum)
        except wire.ChecksumMismatchError:
            self.checksum_drops += 1
            return
        except wire.WireError:
            self.malformed_drops += 1
            return
        if self.checksum:
            self.ledger.charge_crc(len(data))
        if not pkt.chunks:
            self.stray_drops += 1
            return
        first = pkt.chunks[0]
        if isinstance(first, wire.InitChunk):
            lst = self.listeners.get(pkt.dst_port)
            if lst is not None:
                lst.on_init(pkt, first, path)
            else:
                self.stray_drops += 1
            return
        ep = self.by_vtag.get(pkt.verification_tag)
        if ep is not None:
            ep.on_packet(pkt, path)
            return
        if isinstance(first, wire.CookieEchoChunk):
            lst = self.listeners.get(pkt.dst_port)
            if lst is not None:
                lst.on_cookie_echo(pkt, path)
                return
        self.stray_drops += 1

    def _on_tcp(self, msg, path: int):
        kind, conn_id = msg[0], msg[1]
        ep = self.tcp_eps.get(conn_id)
        if ep is None:
            self.stray_drops += 1
            return
        ep.on_message(kind, msg[2] if len(msg) > 2 else None, path)


class SctpListener:
    """Stateless passive opener: answers INITs with a signed cookie and
    only commits memory when a valid COOKIE_ECHO comes back."""

    def __init__(self, host: Host, port: int, config, secret: bytes, rng,
                 on_accept=None):
        self.host = host
        self.port = port
        self.config = config
        self.secret = secret
        self.rng = rng
        self.on_accept = on_accept
        self.next_assoc_id = 1000
        self.inits_seen = 0
        self.cookie_echoes = 0
        self.bad_cookies = 0
        self.accepted = 0
        host.listeners[port] = self

    def state_bytes(self) -> int:
        """Memory modeled as pending-handshake state. Stateless by design."""
        return 0

    def on_init(self, pkt: wire.Packet, init: wire.InitChunk, path: int):
        self.inits_seen += 1
        ack = assoc.listener_on_init(init, self.config, self.secret,
                                     self.host.sim.now, self.rng)
        reply = wire.Packet(src_port=self.port, dst_port=pkt.src_port,
                            verification_tag=init.init_tag, chunks=[ack])
        data = wire.encode_packet(reply, with_checksum=self.host.checksum)
        if self.host.checksum:
            self.host.ledger.charge_crc(len(data))
        self.host.send_frame(
            Frame(wire.NETWORK_HEADER_BUDGET + len(data), data,
                  {"path": path, "kind": "ctl"}), path)

    def on_cookie_echo(self, pkt: wire.Packet, path: int):
        self.cookie_echoes += 1
        echo = pkt.chunks[0]
        try:
            fields = assoc.unpack_cookie(echo.cookie, self.secret,
                                         self.host.sim.now)
        except assoc.CookieError:
            self.bad_cookies += 1
            return
        ep = self.host.by_vtag.get(fields.local_tag)
        if ep is None:
            tcb = assoc.tcb_from_cookie(fields, self.config, self.port,
                                        pkt.src_port)
            ep = SctpEndpoint(self.host, self.config, tcb=tcb,
                              assoc_id=self.next_assoc_id, rng=self.rng)
            self.next_assoc_id += 1
            self.accepted += 1
            ep.established_at = self.host.sim.now
            if self.on_accept is not None:
                self.on_accept(ep)
        ep.send_control([wire.CookieAckChunk()], path)
        rest = pkt.chunks[1:]
        if rest:
            ep.on_packet(wire.Packet(pkt.src_port, pkt.dst_port,
                                     fields.local_tag, rest), path)


class SctpEndpoint:
    """One side of an association, driven entirely by simulator events."""

    def __init__(self, host: Host, config, local_port: int = 0,
                 remote_port: int = 0, assoc_id: int = 0, rng=None,
                 tcb=None):
        self.host = host
        self.sim = host.sim
        self.config = config
        self.assoc_id = assoc_id
        self.rng = rng
        if tcb is None:
            self.tcb = assoc.Tcb(config=config, local_port=local_port,
                                 remote_port=remote_port)
            self.active_opener = True
        else:
            self.tcb = tcb
            self.active_opener = False
        self.mh = mhoming.MultiHome(config.n_paths, rng,
                                    hb_interval_ms=config.hb_interval_ms)
        self.tx = None
        self.rx = None
        self.failed = False
        # app hooks
        self.on_established = None
        self.on_delivered = None        # fn(endpoint, stream, payload)
        self.on_send_room = None        # fn(endpoint)
        self.on_closed = None
        # timers
        self._t3 = {}                   # path -> EventHandle
        self._hs_timer = None
        self._hs_attempts = 0
        self._sd_timer = None
        self._sd_attempts = 0
        self._da_timer = None
        self._kick_pending = False
        self._failed_path = -1
        self._last_rx_path = 0
        self._hb_started = False
        # telemetry
        self.connect_started_at = -1
        self.established_at = -1
        self.path_events = []           # (t_ns, what, path)
        self.vtag_drops = 0
        if not self.active_opener:
            host.by_vtag[self.tcb.local_tag] = self
            self._setup_substates()
            self._start_heartbeats()

    # -- wiring -----------------------------------------------------------------

    def _setup_substates(self):
        t = self.tcb
        policy = SackPolicy(mode=self.config.sack_policy, k=self.config.sack_k,
                            delay_ms=self.config.sack_delay_ms)
        self.tx = SenderState(self.config, peer_rwnd=t.peer_rwnd,
                              itsn=t.local_itsn, n_out=t.n_out,
                              ledger=self.host.ledger, assoc_id=self.assoc_id,
                              n_paths=self.config.n_paths,
                              path_picker=self._pick_path)
        self.rx = ReceiverState(peer_itsn=t.peer_itsn, n_streams=t.n_in,
                                buffer_bytes=self.config.rwnd, policy=policy,
                                gbn=self.config.gbn, ledger=self.host.ledger,
                                assoc_id=self.assoc_id)
        t.tx = self.tx
        t.rx = self.rx

    def _pick_path(self, retransmit: bool) -> int:
        return mhoming.select_path(self.mh, retransmit=retransmit,
                                   failed_path=self._failed_path)

    def established(self) -> bool:
        return self.tcb.state == assoc.TcbState.ESTABLISHED

    def footprint(self) -> int:
        return self.tcb.footprint()

    # -- packet output ----------------------------------------------------------

    def _emit(self, chunks, path: int, vtag: int, meta: dict) -> None:
        pkt = wire.Packet(src_port=self.tcb.local_port,
                          dst_port=self.tcb.remote_port,
                          verification_tag=vtag, chunks=chunks)
        data = wire.encode_packet(pkt, with_checksum=self.host.checksum)
        if self.host.checksum:
            self.host.ledger.charge_crc(len(data))
        meta["path"] = path
        self.host.send_frame(
            Frame(wire.NETWORK_HEADER_BUDGET + len(data), data, meta), path)
        self.mh.mark_activity(path, self.sim.now)

    def send_control(self, chunks, path: int = None) -> None:
        if path is None:
            path = mhoming.select_path(self.mh)
        self._emit(chunks, path, self.tcb.peer_tag, {"kind": "ctl"})

    def _send_sacks(self, sacks, path: int) -> None:
        if sacks:
            if self._da_timer is not None:
                self.sim.cancel(self._da_timer)
                self._da_timer = None
            self._emit(list(sacks), path, self.tcb.peer_tag,
                       {"kind": "sack", "sack": True})

    def _send_data_burst(self, burst) -> None:
        streams = tuple(sorted({c.stream for c in burst.chunks}))
        self._emit(burst.chunks, burst.path, self.tcb.peer_tag,
                   {"kind": "data", "new_data": not burst.retransmit,
                    "streams": streams, "assoc": self.assoc_id})

    # -- handshake --------------------------------------------------------------

    def connect(self) -> None:
        self.connect_started_at = self.sim.now
        init = assoc.assoc_init(self.tcb, self.rng)
        self.host.by_vtag[self.tcb.local_tag] = self
        self._init_chunk = init
        self._emit([init], 0, 0, {"kind": "ctl"})
        self._arm_handshake_timer()

    def _arm_handshake_timer(self):
        timeout = int(self.config.rto_initial_ms * MS) << self._hs_attempts
        self._hs_timer = self.sim.schedule(timeout, self._handshake_expired)

    def _handshake_expired(self):
        if self.failed or self.established():
            return
        self._hs_attempts += 1
        if self._hs_attempts > MAX_HANDSHAKE_RETRIES:
            self.failed = True
            return
        st = self.tcb.state
        if st == assoc.TcbState.COOKIE_WAIT:
            self._emit([self._init_chunk], 0, 0, {"kind": "ctl"})
        elif st == assoc.TcbState.COOKIE_ECHOED:
            self.send_control([wire.CookieEchoChunk(self.tcb.cookie)], 0)
        self._arm_handshake_timer()

    def _on_init_ack(self, chunk):
        if self.tcb.state != assoc.TcbState.COOKIE_WAIT:
            return                      # duplicate
        echo = assoc.on_init_ack(self.tcb, chunk)
        self._setup_substates()
        self.send_control([echo], 0)
        self.sim.cancel(self._hs_timer)
        self._hs_attempts = 0
        self._arm_handshake_timer()
        if self.config.allow_data_with_cookie_echo:
            self._pump()                # anything already queued rides now

    def _on_cookie_ack(self):
        if self.tcb.state != assoc.TcbState.COOKIE_ECHOED:
            return
        assoc.on_cookie_ack(self.tcb)
        self.established_at = self.sim.now
        self.sim.cancel(self._hs_timer)
        self._start_heartbeats()
        if self.on_established is not None:
            self.on_established(self)
        self._pump()

    # -- heartbeats ---------------------------------------------------------------

    def _start_heartbeats(self):
        if self._hb_started or self.config.hb_interval_ms <= 0:
            return
        self._hb_started = True
        interval = int(self.config.hb_interval_ms * MS)
        self.sim.schedule(interval, self._hb_tick, interval)

    def _hb_tick(self, interval):
        if self.failed or self.tcb.state == assoc.TcbState.CLOSED:
            return
        for p in self.mh.paths:
            if p.hb_nonce:              # last probe never answered
                if mhoming.on_path_error(self.mh, p.path_id):
                    self.path_events.append((self.sim.now, "failover",
                                             p.path_id))
        for path_id, hb in mhoming.heartbeat_tick(self.mh, self.sim.now):
            self._emit([hb], path_id, self.tcb.peer_tag, {"kind": "hb"})
        self.sim.schedule(interval, self._hb_tick, interval)

    def _on_hb_ack(self, chunk):
        restored = mhoming.on_heartbeat_ack(self.mh, chunk, self.sim.now)
        if restored is not None:
            cs = self.tx.paths[restored]
            cs.cwnd = 2 * self.config.mtu
            cs.partial_bytes_acked = 0
            self.path_events.append((self.sim.now, "restored", restored))
            self._pump()

    # -- the data plane -----------------------------------------------------------

    def can_submit(self, nbytes: int) -> bool:
        return self.tx is not None and self.tx.can_submit(nbytes)

    def submit(self, stream: int, payload: bytes, ordered: bool = True) -> None:
        self.tx.submit(stream, payload, ordered=ordered)
        self._pump()

    def _sendable(self) -> bool:
        if self.failed or self.tx is None:
            return False
        st = self.tcb.state
        if st == assoc.TcbState.ESTABLISHED:
            return True
        if (st == assoc.TcbState.COOKIE_ECHOED
                and self.config.allow_data_with_cookie_echo):
            return True
        return st in (assoc.TcbState.SHUTDOWN_PENDING,
                      assoc.TcbState.SHUTDOWN_RECEIVED,
                      assoc.TcbState.SHUTDOWN_SENT)

    def _cpu_ready_at(self) -> int:
        """Earliest time the host's spend rate is back under budget."""
        budget = self.host.cpu_budget
        if budget <= 0:
            return 0
        return int(self.host.ledger.cpu_proxy() * NS_PER_S / budget)

    def _pump(self):
        if not self._sendable():
            return
        ready = self._cpu_ready_at()
        if ready > self.sim.now:
            if not self._kick_pending:
                self._kick_pending = True
                self.sim.schedule(ready - self.sim.now, self._kick)
            return
        bursts = self.tx.bundle_and_send(self.sim.now)
        links_used = set()
        for b in bursts:
            self._send_data_burst(b)
            links_used.add(b.path)
        for p in range(self.config.n_paths):
            if self.tx.outstanding_on_path(p) > 0 and p not in self._t3:
                self._arm_t3(p)
        if bursts and (self.tx.retx or self.tx.queue) and not self._kick_pending:
            drain = max(self.host.links[p].idle_at() for p in links_used)
            self._kick_pending = True
            self.sim.schedule(max(0, drain - self.sim.now) + 1, self._kick)
        self._maybe_finish_shutdown()

    def _kick(self):
        self._kick_pending = False
        self._pump()

    def _arm_t3(self, path: int):
        rto = self.tx.paths[path].rto
        self._t3[path] = self.sim.schedule(rto, self._t3_expired, path)

    def _restart_t3(self, path: int):
        old = self._t3.pop(path, None)
        if old is not None:
            self.sim.cancel(old)
        if self.tx.outstanding_on_path(path) > 0:
            self._arm_t3(path)

    def _t3_expired(self, path: int):
        self._t3.pop(path, None)
        if self.failed or self.tx is None:
            return
        if self.tx.outstanding_on_path(path) == 0:
            if self.tx.retx:
                self._pump()            # stale timer, but work is waiting
            return
        fx = self.tx.on_rto(path, self.sim.now)
        if mhoming.on_path_error(self.mh, path):
            self.path_events.append((self.sim.now, "failover", path))
        if fx.assoc_failed:
            self._fail()
            return
        self._failed_path = path
        self._pump()
        self._failed_path = -1
        if self.tx.outstanding_on_path(path) > 0 and path not in self._t3:
            self._arm_t3(path)

    def _fail(self):
        self.failed = True
        for h in self._t3.values():
            self.sim.cancel(h)
        self._t3.clear()

    # -- inbound ------------------------------------------------------------------

    def on_packet(self, pkt: wire.Packet, path: int):
        if self.failed or self.tcb.state == assoc.TcbState.CLOSED:
            return
        try:
            assoc.verify_inbound(self.tcb, pkt)
        except assoc.VtagMismatch:
            self.vtag_drops += 1
            return
        self._last_rx_path = path
        data_chunks = []
        for c in pkt.chunks:
            if isinstance(c, wire.DataChunk):
                data_chunks.append(c)
            elif isinstance(c, wire.SackChunk):
                self._on_sack(c)
            elif isinstance(c, wire.InitAckChunk):
                self._on_init_ack(c)
            elif isinstance(c, wire.CookieAckChunk):
                self._on_cookie_ack()
            elif isinstance(c, wire.CookieEchoChunk):
                # duplicate echo of an established association
                self.send_control([wire.CookieAckChunk()], path)
            elif isinstance(c, wire.HeartbeatChunk):
                reply_path = c.path_id if c.path_id < len(self.host.links) else path
                self._emit([wire.HeartbeatAckChunk(c.nonce, c.path_id)],
                           reply_path, self.tcb.peer_tag, {"kind": "hb"})
            elif isinstance(c, wire.HeartbeatAckChunk):
                self._on_hb_ack(c)
            elif isinstance(c, wire.ShutdownChunk):
                self._on_shutdown(c, path)
            elif isinstance(c, wire.ShutdownAckChunk):
                self._on_shutdown_ack(path)
            elif isinstance(c, wire.ShutdownCompleteChunk):
                self._on_shutdown_complete()
            elif isinstance(c, wire.AbortChunk):
                self._fail()
                return
        if data_chunks and self.rx is not None:
            res = self.rx.on_data(data_chunks, self.sim.now)
            for stream, payload in res.delivered:
                if self.on_delivered is not None:
                    self.on_delivered(self, stream, payload)
            self._send_sacks(res.sacks, path)
            if res.arm_delayed and self._da_timer is None:
                if self.rx.policy.mode == "every_k":
                    # Starvation guard: a count-based receiver facing a
                    # window-limited sender could otherwise never ack.
                    delay = int(SACK_GUARD_MS * MS)
                else:
                    delay = int(self.config.sack_delay_ms * MS)
                self._da_timer = self.sim.schedule(delay, self._da_expired)

    def _da_expired(self):
        self._da_timer = None
        if self.rx is None or self.tcb.state == assoc.TcbState.CLOSED:
            return
        sack = self.rx.on_delayed_timer()
        if sack is not None:
            self._send_sacks([sack], self._last_rx_path)

    def _on_sack(self, sack: wire.SackChunk):
        if self.tx is None:
            return
        fx = self.tx.on_sack(sack, self.sim.now)
        for p in fx.paths_acked:
            self.mh.mark_alive(p)
            self._restart_t3(p)
        if fx.all_clear:
            for p in list(self._t3):
                self.sim.cancel(self._t3.pop(p))
        if fx.newly_acked and self.on_send_room is not None:
            self.on_send_room(self)
        self._pump()

    # -- shutdown -----------------------------------------------------------------

    def close(self):
        """Graceful: drain what is queued, then run the shutdown exchange."""
        assoc.start_shutdown(self.tcb)
        self._pump()

    def _maybe_finish_shutdown(self):
        if self.tx is None or not self.tx.is_drained() or self.tx.outstanding:
            return
        st = self.tcb.state
        if st == assoc.TcbState.SHUTDOWN_PENDING:
            self.tcb.state = assoc.TcbState.SHUTDOWN_SENT
            self.send_control([wire.ShutdownChunk(cum_tsn=self._rx_cum())])
            self._arm_shutdown_timer()
        elif st == assoc.TcbState.SHUTDOWN_RECEIVED:
            self.tcb.state = assoc.TcbState.SHUTDOWN_ACK_SENT
            self.send_control([wire.ShutdownAckChunk()])
            self._arm_shutdown_timer()

    def _rx_cum(self) -> int:
        return self.rx.cum if self.rx is not None else 0

    def _arm_shutdown_timer(self):
        timeout = int(self.config.rto_initial_ms * MS) << self._sd_attempts
        self._sd_timer = self.sim.schedule(timeout, self._shutdown_expired)

    def _shutdown_expired(self):
        st = self.tcb.state
        if st == assoc.TcbState.CLOSED or self.failed:
            return
        self._sd_attempts += 1
        if self._sd_attempts > MAX_SHUTDOWN_RETRIES:
            self._close_out()
            return
        if st == assoc.TcbState.SHUTDOWN_SENT:
            self.send_control([wire.ShutdownChunk(cum_tsn=self._rx_cum())])
        elif st == assoc.TcbState.SHUTDOWN_ACK_SENT:
            self.send_control([wire.ShutdownAckChunk()])
        self._arm_shutdown_timer()

    def _on_shutdown(self, chunk: wire.ShutdownChunk, path: int):
        if self.tx is not None:
            self._on_sack(wire.SackChunk(cum_tsn=chunk.cum_tsn,
                                         a_rwnd=self.tx.peer_rwnd))
        assoc.on_shutdown(self.tcb)
        self._maybe_finish_shutdown()

    def _on_shutdown_ack(self, path: int):
        if self.tcb.state not in (assoc.TcbState.SHUTDOWN_SENT,
                                  assoc.TcbState.SHUTDOWN_PENDING):
            return
        done = assoc.on_shutdown_ack(self.tcb)
        self.send_control([done], path)
        self._close_out()

    def _on_shutdown_complete(self):
        assoc.on_shutdown_complete(self.tcb)
        self._close_out()

    def _close_out(self):
        self.tcb.state = assoc.TcbState.CLOSED
        for h in self._t3.values():
            self.sim.cancel(h)
        self._t3.clear()
        if self._sd_timer is not None:
            self.sim.cancel(self._sd_timer)
        if self._da_timer is not None:
            self.sim.cancel(self._da_timer)
        if self.on_closed is not None:
            self.on_closed(self)


class TcpEndpoint:
    """One side of a TCP connection; the handshake is a bare 1-RTT ping."""

    def __init__(self, host: Host, config, conn_id: int, peer_window: int,
                 nagle_on: bool = True, sack_enabled: bool = False):
        self.host = host
        self.sim = host.sim
        self.conn_id = conn_id
        self.conn = tcpbase.TcpConn(config, peer_window, nagle_on=nagle_on,
                                    sack_enabled=sack_enabled)
        self.established = False
        self.failed = False
        self.on_established = None
        self.on_delivered = None        # fn(endpoint, payload_bytes)
        self.on_send_room = None
        self._rto_timer = None
        self._da_timer = None
        self._kick_pending = False
        self.connect_started_at = -1
        self.established_at = -1
        host.tcp_eps[conn_id] = self

    def _send(self, kind: str, obj, wire_bytes: int, meta=None):
        m = {"kind": kind}
        if meta:
            m.update(meta)
        m["path"] = 0
        self.host.send_frame(Frame(wire_bytes, (kind, self.conn_id, obj), m), 0)

    def connect(self):
        self.connect_started_at = self.sim.now
        self._send("syn", None, tcpbase.TCP_HEADER_BUDGET)

    def on_message(self, kind: str, obj, path: int):
        if self.failed:
            return
        if kind == "syn":
            self.established = True
            self.established_at = self.sim.now
            self._send("synack", None, tcpbase.TCP_HEADER_BUDGET)
            if self.on_established is not None:
                self.on_established(self)
        elif kind == "synack":
            self.established = True
            self.established_at = self.sim.now
            if self.on_established is not None:
                self.on_established(self)
            self._pump()
        elif kind == "seg":
            self._on_segment(obj)
        elif kind == "ack":
            self._on_ack(obj)

    # -- sender side --------------------------------------------------------------

    def can_submit(self, n: int) -> bool:
        return self.conn.can_submit(n)

    def submit(self, data: bytes):
        self.conn.submit(data)
        self._pump()

    def _pump(self):
        if not self.established or self.failed:
            return
        segs = self.conn.send(self.sim.now)
        for seg in segs:
            self._send("seg", seg, seg.wire_len(),
                       {"new_data": True, "data_bytes": len(seg.payload)})
        if self.conn.flight() > 0 and self._rto_timer is None:
            self._arm_rto()
        unsent = self.conn.buffered_out() - self.conn.flight()
        if segs and unsent > 0 and not self._kick_pending:
            drain = self.host.links[0].idle_at()
            self._kick_pending = True
            self.sim.schedule(max(0, drain - self.sim.now) + 1, self._kick)

    def _kick(self):
        self._kick_pending = False
        self._pump()

    def _arm_rto(self):
        self._rto_timer = self.sim.schedule(self.conn.cs.rto, self._rto_expired)

    def _restart_rto(self):
        if self._rto_timer is not None:
            self.sim.cancel(self._rto_timer)
            self._rto_timer = None
        if self.conn.flight() > 0:
            self._arm_rto()

    def _rto_expired(self):
        self._rto_timer = None
        if self.failed:
            return
        if self.conn.flight() == 0:
            return
        if self.conn.on_rto(self.sim.now):
            self.failed = True
            return
        self._pump()
        if self.conn.flight() > 0 and self._rto_timer is None:
            self._arm_rto()

    def _on_ack(self, ack):
        fx = self.conn.on_ack(ack, self.sim.now)
        for seg in fx.retransmit:
            self._send("seg", seg, seg.wire_len(),
                       {"new_data": False, "data_bytes": len(seg.payload)})
        if fx.cum_advanced:
            self._restart_rto()
            if self.on_send_room is not None:
                self.on_send_room(self)
        self._pump()

    # -- receiver side --------------------------------------------------------------

    def _on_segment(self, seg):
        delivered, ack, arm = self.conn.on_segment(seg, self.sim.now)
        if delivered and self.on_delivered is not None:
            self.on_delivered(self, delivered)
        if ack is not None:
            self._send("ack", ack, ack.wire_len(), {"sack": bool(ack.sacks)})
        elif arm and self._da_timer is None:
            delay = int(tcpbase.DELAYED_ACK_MS * MS)
            self._da_timer = self.sim.schedule(delay, self._da_expired)

    def _da_expired(self):
        self._da_timer = None
        ack = self.conn.on_ack_timer()
        if ack is not None:
            self._send("ack", ack, ack.wire_len(), {"sack": bool(ack.sacks)})
