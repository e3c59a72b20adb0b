"""Send path: fragmentation, chunk bundling, congestion and flow control,
burst limiting, SACK-driven and go-back-N retransmission, copy accounting.

Retransmission strategy is mode-dependent. With selective acks the sender
marks individual chunks missing from gap reports and fast-retransmits each
one once it has been reported missing fast_retransmit_threshold times. In
go-back-N mode gap blocks are ignored; the loss signal is the duplicate
cumulative ack the discarding receiver emits, and on the threshold the
sender rewinds: every in-flight chunk goes back to the retransmit queue in
TSN order.

Retransmission packets bypass the congestion-window release gate (they are
what shrinks the flight in the first place; blocking them behind a halved
window deadlocks the association). New data is gated, so the window bound
is enforced where it matters.
"""

from __future__ import annotations

from collections import deque, namedtuple
from dataclasses import dataclass

from . import wire
from .wire import tsn_add, tsn_le, tsn_lt

# one outbound packet's worth of DATA chunks, all new or all retransmitted
Burst = namedtuple("Burst", ["path", "chunks", "retransmit"])

# entry states
ST_QUEUED = 0
ST_IN_FLIGHT = 1
ST_ACKED = 2
ST_TO_RETRANSMIT = 3

FAST_RETRANSMIT_THRESHOLD = 4
SMALL_MESSAGE_CUTOFF = 1024     # optimized copy path boundary

MS = 1_000_000      # ns per millisecond


def _padded4(n: int) -> int:
    return (n + 3) & ~3


class TxError(Exception):
    pass


class StreamRangeError(TxError):
    pass


class SendBufferFull(TxError):
    pass


class OutboundChunkEntry:
    __slots__ = ("tsn", "stream", "ssn", "payload", "unordered", "begin",
                 "end", "state", "first_sent_at", "last_sent_at", "path",
                 "transmit_count", "missing_reports")

    def __init__(self, tsn, stream, ssn, payload, unordered, begin, end):
        self.tsn = tsn
        self.stream = stream
        self.ssn = ssn
        self.payload = payload
        self.unordered = unordered
        self.begin = begin
        self.end = end
        self.state = ST_QUEUED
        self.first_sent_at = -1
        self.last_sent_at = -1
        self.path = 0
        self.transmit_count = 0
        self.missing_reports = 0

    def to_chunk(self) -> wire.DataChunk:
        return wire.DataChunk(tsn=self.tsn, stream=self.stream, ssn=self.ssn,
                              payload=self.payload, unordered=self.unordered,
                              begin=self.begin, end=self.end)


@dataclass
class CongestionState:
    cwnd: int
    ssthresh: int
    mtu: int
    rto: int                    # ns
    rto_min: int
    rto_max: int
    partial_bytes_acked: int = 0
    flight_size: int = 0
    srtt: float = -1.0          # ns; negative until first sample
    rttvar: float = 0.0


def rtt_update(cs: CongestionState, sample_ns: int) -> CongestionState:
    """Standard exponential estimator, alpha 1/8 beta 1/4, rto clamped."""
    if cs.srtt < 0:
        cs.srtt = float(sample_ns)
        cs.rttvar = sample_ns / 2.0
    else:
        cs.rttvar = 0.75 * cs.rttvar + 0.25 * abs(cs.srtt - sample_ns)
        cs.srtt = 0.875 * cs.srtt + 0.125 * sample_ns
    rto = cs.srtt + 4.0 * cs.rttvar
    cs.rto = int(min(max(rto, cs.rto_min), cs.rto_max))
    return cs


@dataclass
class CopyLedger:
    mode: str = "legacy"        # legacy | optimized
    copy_events: int = 0
    copy_bytes: int = 0

    def charge(self, nbytes: int) -> int:
        """Account one submitted message; returns the copy count applied."""
        copies = 3 if self.mode == "legacy" else 2
        self.copy_events += copies
        self.copy_bytes += copies * nbytes
        return copies


@dataclass
class SackEffects:
    newly_acked: int = 0
    cum_advanced: bool = False
    retransmit_ready: bool = False
    all_clear: bool = False
    fast_retransmit: bool = False
    paths_acked: tuple = ()     # paths that saw acks land this SACK


@dataclass
class RtoEffects:
    marked: int = 0
    assoc_failed: bool = False


class SenderState:
    def __init__(self, config, peer_rwnd: int, itsn: int, n_out: int,
                 ledger=None, assoc_id: int = 0, n_paths: int = 1,
                 path_picker=None, send_buffer: int = 4 << 20):
        self.config = config
        self.mtu = config.mtu
        self.frag = wire.fragment_payload(config.mtu)
        self.mbs = config.mbs
        self.no_delay = config.no_delay
        self.gbn = config.gbn
        self.threshold = getattr(config, "fast_retransmit_threshold",
                                 FAST_RETRANSMIT_THRESHOLD)
        self.n_out = n_out
        self.ledger = ledger
        self.assoc_id = assoc_id
        self.path_picker = path_picker or (lambda retransmit: 0)
        self.send_buffer = send_buffer

        self.copies = CopyLedger(mode=config.copy_mode)
        rto_min = int(config.rto_min_ms * MS)
        rto_max = int(config.rto_max_ms * MS)
        rto0 = int(config.rto_initial_ms * MS)
        self.paths = [
            CongestionState(cwnd=2 * config.mtu, ssthresh=peer_rwnd,
                            mtu=config.mtu, rto=rto0, rto_min=rto_min,
                            rto_max=rto_max)
            for _ in range(n_paths)]

        self.next_tsn = itsn
        self.next_ssn = [0] * n_out
        self.cum_acked = (itsn - 1) & wire.TSN_MASK
        self.peer_rwnd = peer_rwnd
        self.entries = {}               # tsn -> entry, insertion = TSN order
        self.queue = deque()            # entries in ST_QUEUED
        self.retx = deque()             # entries in ST_TO_RETRANSMIT
        self.queued_bytes = 0
        self.outstanding = 0            # unacked payload bytes, all states
        self.recovery_exit = None       # TSN gating one cwnd cut per flight
        self.dup_cum_count = 0          # go-back-N loss signal
        self.rto_streak = 0             # consecutive expiries, any path
        self.max_rto_streak = getattr(config, "max_retransmit_limit", 12)
        self.failed = False

        # counters
        self.submitted_msgs = 0
        self.submitted_bytes = 0
        self.packets_sent = 0
        self.chunks_sent = 0
        self.bytes_sent = 0             # payload bytes incl. retransmissions
        self.retransmitted_chunks = 0
        self.sacks_processed = 0
        self.stale_sacks = 0
        self.fr_events = 0
        self.rto_events = 0
        self._msg_seq = 0

    # -- submission -----------------------------------------------------------

    def buffered_out(self) -> int:
        return self.queued_bytes + self.outstanding

    def can_submit(self, nbytes: int) -> bool:
        return self.buffered_out() + nbytes <= self.send_buffer

    def submit(self, stream: int, payload: bytes, ordered: bool = True,
               now: int = 0) -> int:
        """Fragment one message onto the queue. Returns a message id."""
        if not 0 <= stream < self.n_out:
            raise StreamRangeError("stream %d of %d" % (stream, self.n_out))
        if not self.can_submit(len(payload)):
            raise SendBufferFull("%d queued, %d more won't fit"
                                 % (self.buffered_out(), len(payload)))
        copies = self.copies.charge(len(payload))
        if self.ledger is not None:
            small = (self.copies.mode == "optimized"
                     and len(payload) <= SMALL_MESSAGE_CUTOFF)
            self.ledger.charge_copy(copies * len(payload), small=small)

        ssn = 0
        if ordered:
            ssn = self.next_ssn[stream]
            self.next_ssn[stream] = (ssn + 1) & wire.SSN_MASK
        pieces = [payload[i:i + self.frag]
                  for i in range(0, len(payload), self.frag)] or [b""]
        last = len(pieces) - 1
        for i, piece in enumerate(pieces):
            e = OutboundChunkEntry(
                tsn=self.next_tsn, stream=stream, ssn=ssn, payload=piece,
                unordered=not ordered, begin=(i == 0), end=(i == last))
            self.next_tsn = tsn_add(self.next_tsn, 1)
            self.entries[e.tsn] = e
            self.queue.append(e)
            self.queued_bytes += len(piece)
        self.submitted_msgs += 1
        self.submitted_bytes += len(payload)
        self._msg_seq += 1
        return self._msg_seq

    def is_drained(self) -> bool:
        return not self.queue and not self.retx and self.outstanding == 0

    # -- release --------------------------------------------------------------

    def _wire_room(self) -> int:
        # payload area of one frame: MTU minus network and common headers
        return self.mtu - wire.NETWORK_HEADER_BUDGET - 12

    def _fill_retransmit(self):
        room = self._wire_room()
        used = 0
        picked = []
        while self.retx:
            e = self.retx[0]
            if e.state != ST_TO_RETRANSMIT:     # acked while waiting
                self.retx.popleft()
                continue
            need = _padded4(wire.DATA_HEADER_LEN + len(e.payload))
            if used + need > room:
                break
            self.retx.popleft()
            picked.append(e)
            used += need
        return picked

    def _fill_new(self, path_cs: CongestionState):
        room = self._wire_room()
        used = 0
        payload = 0
        picked = []
        while self.queue:
            e = self.queue[0]
            need = _padded4(wire.DATA_HEADER_LEN + len(e.payload))
            if used + need > room:
                break
            # congestion gate applies chunk by chunk while bundling
            if path_cs.flight_size + payload + len(e.payload) > path_cs.cwnd:
                break
            # flow control: never exceed what the peer advertised, except a
            # single probe chunk when nothing at all is outstanding
            if (self.outstanding + payload + len(e.payload) > self.peer_rwnd
                    and not (self.outstanding == 0 and payload == 0)):
                break
            self.queue.popleft()
            picked.append(e)
            used += need
            payload += len(e.payload)
        return picked

    def _nagle_holds(self) -> bool:
        # hold a sub-MTU batch while earlier data is still unacknowledged
        if self.no_delay or not self.queue:
            return False
        if self.outstanding == 0:
            return False
        return self.queued_bytes < self.frag

    def bundle_and_send(self, now: int):
        """Release up to mbs packets: retransmissions first, then new data
        subject to cwnd, peer rwnd, and the Nagle-like hold."""
        packets = []
        while len(packets) < self.mbs:
            entries = self._fill_retransmit()
            retransmit = bool(entries)
            if not entries:
                if self._nagle_holds():
                    break
                path = self.path_picker(False)
                cs = self.paths[path]
                entries = self._fill_new(cs)
                if not entries:
                    break
            else:
                path = self.path_picker(True)
                cs = self.paths[path]
            for e in entries:
                if e.state == ST_QUEUED:
                    self.queued_bytes -= len(e.payload)
                    self.outstanding += len(e.payload)
                else:
                    self.retransmitted_chunks += 1
                e.state = ST_IN_FLIGHT
                e.path = path
                e.transmit_count += 1
                e.missing_reports = 0
                if e.first_sent_at < 0:
                    e.first_sent_at = now
                e.last_sent_at = now
                cs.flight_size += len(e.payload)
                self.chunks_sent += 1
                self.bytes_sent += len(e.payload)
                if self.ledger is not None:
                    self.ledger.charge_chunk(self.assoc_id, e.stream, 1)
            self.packets_sent += 1
            packets.append(Burst(path, [e.to_chunk() for e in entries],
                                 retransmit))
        return packets

    # -- acknowledgement -------------------------------------------------------

    def _ack_entry(self, e: OutboundChunkEntry):
        if e.state == ST_IN_FLIGHT:
            self.paths[e.path].flight_size -= len(e.payload)
        e.state = ST_ACKED
        self.outstanding -= len(e.payload)
        del self.entries[e.tsn]

    def on_sack(self, sack: wire.SackChunk, now: int) -> SackEffects:
        fx = SackEffects()
        self.sacks_processed += 1
        if self.ledger is not None:
            self.ledger.charge_sack(1)
        if tsn_lt(sack.cum_tsn, self.cum_acked):
            self.stale_sacks += 1
            return fx
        self.peer_rwnd = sack.a_rwnd

        flight_before = [cs.flight_size for cs in self.paths]
        cum_bytes = [0] * len(self.paths)
        gap_bytes = [0] * len(self.paths)
        newly = []

        if sack.cum_tsn != self.cum_acked:
            fx.cum_advanced = True
            self.rto_streak = 0
            self.dup_cum_count = 0
            for tsn in list(self.entries):
                if not tsn_le(tsn, sack.cum_tsn):
                    break           # insertion order is TSN order
                e = self.entries[tsn]
                if e.state == ST_QUEUED:
                    break           # unsent data can't have been acked
                cum_bytes[e.path] += len(e.payload)
                newly.append(e)
                self._ack_entry(e)
            self.cum_acked = sack.cum_tsn
            if (self.recovery_exit is not None
                    and tsn_le(self.recovery_exit, self.cum_acked)):
                self.recovery_exit = None

        if sack.gaps and not self.gbn:
            covered = set()
            for s, e_off in sack.gaps:
                for off in range(s, e_off + 1):
                    covered.add(tsn_add(sack.cum_tsn, off))
            highest = tsn_add(sack.cum_tsn, max(e_off for _, e_off in sack.gaps))
            to_mark = []
            for tsn in list(self.entries):
                if tsn_lt(highest, tsn):
                    break       # nothing above the top gap is affected
                e = self.entries[tsn]
                if tsn in covered:
                    if e.state in (ST_IN_FLIGHT, ST_TO_RETRANSMIT):
                        gap_bytes[e.path] += len(e.payload)
                        newly.append(e)
                        self._ack_entry(e)
                elif e.state == ST_IN_FLIGHT and tsn_lt(tsn, highest):
                    e.missing_reports += 1
                    if e.missing_reports == self.threshold:
                        to_mark.append(e)
            if to_mark:
                self._fast_retransmit(to_mark)
                fx.fast_retransmit = True
        elif self.gbn and not fx.cum_advanced:
            # duplicate cumulative ack: the go-back-N receiver is telling us
            # it is discarding everything after a hole
            self.dup_cum_count += 1
            earliest = self._earliest_in_flight()
            if earliest is not None:
                earliest.missing_reports += 1
                if earliest.missing_reports == self.threshold:
                    swept = [e for e in self.entries.values()
                             if e.state == ST_IN_FLIGHT]
                    self._fast_retransmit(swept)
                    fx.fast_retransmit = True

        fx.newly_acked = sum(len(e.payload) for e in newly)

        # congestion response per path
        for p, cs in enumerate(self.paths):
            acked_p = cum_bytes[p] + gap_bytes[p]
            if acked_p == 0:
                continue
            if cs.cwnd <= cs.ssthresh:
                if cum_bytes[p] > 0:
                    cs.cwnd += min(cum_bytes[p], cs.mtu)
            else:
                cs.partial_bytes_acked += acked_p
                # "window was full" in the same sense the send gate uses:
                # no further full chunk would have fit in flight
                full = flight_before[p] + self.frag > cs.cwnd
                if cs.partial_bytes_acked >= cs.cwnd and full:
                    before = cs.cwnd
                    cs.cwnd += cs.mtu
                    cs.partial_bytes_acked -= before

        # Karn's rule: sample RTT only from a never-retransmitted chunk
        for e in newly:
            if e.transmit_count == 1 and e.first_sent_at >= 0:
                rtt_update(self.paths[e.path], now - e.first_sent_at)
                break

        fx.retransmit_ready = bool(self.retx)
        fx.all_clear = self.outstanding == 0
        fx.paths_acked = tuple(sorted({e.path for e in newly}))
        return fx

    def _earliest_in_flight(self):
        for e in self.entries.values():
            if e.state == ST_IN_FLIGHT:
                return e
        return None

    def _mark_retransmit(self, e: OutboundChunkEntry):
        if e.state == ST_IN_FLIGHT:
            self.paths[e.path].flight_size -= len(e.payload)
        e.state = ST_TO_RETRANSMIT
        self.retx.append(e)

    def _fast_retransmit(self, entries):
        for e in entries:
            self._mark_retransmit(e)
        if self.recovery_exit is None and entries:
            path = entries[0].path
            cs = self.paths[path]
            cs.ssthresh = max(cs.cwnd // 2, 4 * cs.mtu)
            cs.cwnd = cs.ssthresh
            cs.partial_bytes_acked = 0
            self.recovery_exit = self._highest_outstanding()
            self.fr_events += 1

    def _highest_outstanding(self):
        last = None
        for e in self.entries.values():
            if e.state in (ST_IN_FLIGHT, ST_TO_RETRANSMIT):
                last = e.tsn
        return last

    # -- timeout ----------------------------------------------------------------

    def outstanding_on_path(self, path: int) -> int:
        return self.paths[path].flight_size

    def on_rto(self, path: int, now: int) -> RtoEffects:
        """Retransmission timer expired for one path."""
        fx = RtoEffects()
        cs = self.paths[path]
        cs.ssthresh = max(cs.cwnd // 2, 4 * cs.mtu)
        cs.cwnd = cs.mtu
        cs.partial_bytes_acked = 0
        cs.rto = min(cs.rto * 2, cs.rto_max)
        self.rto_events += 1
        self.rto_streak += 1
        self.recovery_exit = None       # timeout resets the recovery epoch

        in_flight = [e for e in self.entries.values()
                     if e.state == ST_IN_FLIGHT and e.path == path]
        if self.gbn:
            for e in in_flight:
                self._mark_retransmit(e)
            fx.marked = len(in_flight)
        else:
            room = self._wire_room()
            used = 0
            for e in in_flight:
                need = _padded4(wire.DATA_HEADER_LEN + len(e.payload))
                if used + need > room:
                    break
                self._mark_retransmit(e)
                used += need
                fx.marked += 1
        if self.rto_streak > self.max_rto_streak:
            self.failed = True
            fx.assoc_failed = True
        return fx
