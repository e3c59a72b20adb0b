"""A compact TCP-like byte-stream baseline: cumulative acks, Nagle (on by
default), Reno slow start / congestion avoidance / fast retransmit, delayed
acks on the receiver, optional SACK blocks.

Timeout recovery rewinds snd_nxt to snd_una and resends the whole window
under a fresh slow start, the classic conservative behavior. With
sack_enabled the rewind skips byte ranges the peer already reported, so
only real holes are resent.

The connection handshake is abstracted: the benchmark layer simply starts
the conversation one round trip after the open, because nothing in the
experiments depends on SYN mechanics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .txpath import CongestionState, rtt_update

TCP_HEADER_BUDGET = 40              # IP + TCP header bytes per segment
TCP_FOOTPRINT = 1024                # control-block bytes per connection
DUP_ACK_THRESHOLD = 3
DELAYED_ACK_MS = 200.0
SEQ_MASK = 0xFFFFFFFF
SEQ_HALF = 0x80000000

MS = 1_000_000


def seq_lt(a: int, b: int) -> bool:
    return a != b and ((b - a) & SEQ_MASK) < SEQ_HALF


def seq_le(a: int, b: int) -> bool:
    return a == b or seq_lt(a, b)


def seq_add(a: int, n: int) -> int:
    return (a + n) & SEQ_MASK


def seq_diff(a: int, b: int) -> int:
    """a − b in serial space (a assumed not behind b)."""
    return (a - b) & SEQ_MASK


class TcpError(Exception):
    pass


class TcpBufferFull(TcpError):
    pass


@dataclass
class TcpSegment:
    seq: int
    payload: bytes

    def wire_len(self) -> int:
        return TCP_HEADER_BUDGET + len(self.payload)

    def end(self) -> int:
        return seq_add(self.seq, len(self.payload))


@dataclass
class TcpAck:
    ack: int
    window: int
    sacks: tuple = ()

    def wire_len(self) -> int:
        return TCP_HEADER_BUDGET + 8 * len(self.sacks)


@dataclass
class TcpAckEffects:
    newly_acked: int = 0
    retransmit: list = field(default_factory=list)  # segments to send now
    all_clear: bool = False
    cum_advanced: bool = False


def _merge_ranges(ranges):
    """Merge (start, len) byte ranges given in ascending serial order."""
    out = []
    for s, n in sorted(ranges, key=lambda r: r[0]):
        if out and out[-1][0] + out[-1][1] >= s:
            prev_s, prev_n = out[-1]
            out[-1] = (prev_s, max(prev_n, s + n - prev_s))
        else:
            out.append((s, n))
    return out


class TcpConn:
    def __init__(self, config, peer_window: int, iss: int = 1,
                 nagle_on: bool = True, sack_enabled: bool = False,
                 send_buffer: int = 4 << 20):
        self.mss = config.mtu - TCP_HEADER_BUDGET
        self.peer_window = peer_window
        self.nagle_on = nagle_on
        self.sack_enabled = sack_enabled
        self.send_buffer = send_buffer
        self.footprint = TCP_FOOTPRINT

        rto_min = int(config.rto_min_ms * MS)
        rto_max = int(config.rto_max_ms * MS)
        self.cs = CongestionState(cwnd=2 * self.mss, ssthresh=peer_window,
                                  mtu=self.mss, rto=int(config.rto_initial_ms * MS),
                                  rto_min=rto_min, rto_max=rto_max)
        # sender
        self.snd_una = iss
        self.snd_nxt = iss
        self.buf = bytearray()          # bytes from snd_una onward
        self.dup_acks = 0
        self.recover = iss              # fast-recovery exit point
        self.in_recovery = False
        self.max_sent = iss             # highest sequence ever released
        self.sacked = []                # peer-reported (seq, len) ranges
        self._probe = None              # (end_seq, sent_at) for one RTT sample
        self.rto_streak = 0
        self.max_rto_streak = getattr(config, "max_retransmit_limit", 12)
        self.failed = False
        # receiver
        self.rcv_nxt = iss
        self.rcv_buf = {}               # seq -> bytes, out of order
        self.rcv_buffered = 0
        self.rcv_window = peer_window
        self.segs_since_ack = 0
        self.ack_pending = False
        # counters
        self.segments_sent = 0
        self.bytes_sent = 0
        self.retransmits = 0
        self.fr_events = 0
        self.rto_events = 0
        self.dup_acks_seen = 0
        self.acks_sent = 0
        self.delivered_bytes = 0
        self.submitted_bytes = 0

    # -- sender ----------------------------------------------------------------

    def flight(self) -> int:
        return seq_diff(self.snd_nxt, self.snd_una)

    def buffered_out(self) -> int:
        return len(self.buf)

    def can_submit(self, n: int) -> bool:
        return len(self.buf) + n <= self.send_buffer

    def submit(self, data: bytes) -> None:
        """Queue bytes; message boundaries are not a thing here."""
        if not self.can_submit(len(data)):
            raise TcpBufferFull("%d queued" % len(self.buf))
        self.buf.extend(data)
        self.submitted_bytes += len(data)

    def is_drained(self) -> bool:
        return not self.buf

    def _sacked_span_at(self, seq: int):
        for s, n in self.sacked:
            if seq_le(s, seq) and seq_lt(seq, seq_add(s, n)):
                return seq_diff(seq_add(s, n), seq)
        return 0

    def send(self, now: int):
        """Release segments within min(cwnd, peer_window) − flight."""
        out = []
        while True:
            budget = min(self.cs.cwnd, self.peer_window) - self.flight()
            if budget <= 0:
                break
            off = self.flight()
            avail = len(self.buf) - off
            if avail <= 0:
                break
            # skip spans the peer has already reported holding
            skip = self._sacked_span_at(self.snd_nxt)
            if skip:
                adv = min(skip, avail)
                self.snd_nxt = seq_add(self.snd_nxt, adv)
                continue
            seg_len = min(self.mss, avail, budget)
            if seg_len < self.mss and seg_len < avail:
                break       # budget-capped sliver: wait for window to open
            if (seg_len < self.mss and self.nagle_on and self.flight() > 0):
                break       # sub-MSS tail held while data is unacked
            payload = bytes(self.buf[off:off + seg_len])
            seg = TcpSegment(self.snd_nxt, payload)
            retransmission = seq_lt(self.snd_nxt, self.max_sent)
            self.snd_nxt = seq_add(self.snd_nxt, seg_len)
            if seq_lt(self.max_sent, self.snd_nxt):
                self.max_sent = self.snd_nxt
            self._note_sent(seg, now, retransmission)
            out.append(seg)
        return out

    def _note_sent(self, seg: TcpSegment, now: int, retransmission: bool):
        self.segments_sent += 1
        self.bytes_sent += len(seg.payload)
        if retransmission:
            self.retransmits += 1
            self._probe = None          # Karn: no timing across retransmits
        elif self._probe is None:
            self._probe = (seg.end(), now)

    def _segment_at_una(self) -> TcpSegment:
        n = min(self.mss, self.flight(), len(self.buf))
        return TcpSegment(self.snd_una, bytes(self.buf[:n]))

    def on_ack(self, ack: TcpAck, now: int) -> TcpAckEffects:
        fx = TcpAckEffects()
        if seq_lt(ack.ack, self.snd_una):
            return fx                           # old news
        if ack.sacks and self.sack_enabled:
            self.sacked = _merge_ranges(self.sacked + list(ack.sacks))

        if ack.ack == self.snd_una:
            if self.flight() > 0:
                self.dup_acks += 1
                self.dup_acks_seen += 1
                if self.dup_acks == DUP_ACK_THRESHOLD and not self.in_recovery:
                    flight = self.flight()
                    self.cs.ssthresh = max(flight // 2, 2 * self.mss)
                    self.cs.cwnd = self.cs.ssthresh
                    self.cs.partial_bytes_acked = 0
                    self.in_recovery = True
                    self.recover = self.snd_nxt
                    self.fr_events += 1
                    seg = self._segment_at_una()
                    if seg.payload:
                        self._note_sent(seg, now, retransmission=True)
                        fx.retransmit.append(seg)
            return fx

        # the ack advances
        acked = seq_diff(ack.ack, self.snd_una)
        fx.newly_acked = acked
        fx.cum_advanced = True
        self.rto_streak = 0
        del self.buf[:acked]
        self.snd_una = ack.ack
        if seq_lt(self.snd_nxt, self.snd_una):
            self.snd_nxt = self.snd_una         # after a rewound timeout
        self.dup_acks = 0
        if self.in_recovery and seq_le(self.recover, self.snd_una):
            self.in_recovery = False
        self.sacked = [(s, n) for s, n in self.sacked
                       if seq_lt(self.snd_una, seq_add(s, n))]

        if self._probe is not None:
            end, sent_at = self._probe
            if seq_le(end, self.snd_una):
                rtt_update(self.cs, now - sent_at)
                self._probe = None

        if not self.in_recovery:
            if self.cs.cwnd <= self.cs.ssthresh:
                self.cs.cwnd += self.mss
            else:
                self.cs.cwnd += max(1, self.mss * self.mss // self.cs.cwnd)
        fx.all_clear = self.flight() == 0
        return fx

    def on_rto(self, now: int):
        """Timer expiry: collapse the window and rewind to snd_una."""
        self.cs.ssthresh = max(self.flight() // 2, 2 * self.mss)
        self.cs.cwnd = self.mss
        self.cs.partial_bytes_acked = 0
        self.cs.rto = min(self.cs.rto * 2, self.cs.rto_max)
        self.rto_events += 1
        self.rto_streak += 1
        self.snd_nxt = self.snd_una
        self.dup_acks = 0
        self.in_recovery = False
        self._probe = None
        if self.rto_streak > self.max_rto_streak:
            self.failed = True
        return self.failed

    # -- receiver ----------------------------------------------------------------

    def _rcv_sack_blocks(self):
        if not self.sack_enabled or not self.rcv_buf:
            return ()
        spans = _merge_ranges([(s, len(p)) for s, p in self.rcv_buf.items()])
        return tuple(spans[:3])

    def on_segment(self, seg: TcpSegment, now: int):
        """Returns (delivered bytes, TcpAck or None, arm_delayed_flag)."""
        delivered = b""
        immediate = False
        if seg.payload:
            if seq_le(seg.end(), self.rcv_nxt):
                immediate = True        # stale duplicate: re-ack at once
            elif seg.seq == self.rcv_nxt:
                delivered = seg.payload
                self.rcv_nxt = seg.end()
                drained = self._drain_rcv()
                if drained:
                    delivered += drained
                    immediate = True    # hole repaired: tell the sender now
            else:
                if self.rcv_buffered + len(seg.payload) <= self.rcv_window:
                    if seg.seq not in self.rcv_buf:
                        self.rcv_buf[seg.seq] = seg.payload
                        self.rcv_buffered += len(seg.payload)
                immediate = True        # out of order: duplicate ack now
        self.delivered_bytes += len(delivered)
        self.segs_since_ack += 1

        ack = None
        arm = False
        if immediate or self.segs_since_ack >= 2:
            ack = self._make_ack()
        else:
            arm = True
        return delivered, ack, arm

    def _drain_rcv(self) -> bytes:
        out = []
        while self.rcv_nxt in self.rcv_buf:
            p = self.rcv_buf.pop(self.rcv_nxt)
            self.rcv_buffered -= len(p)
            self.rcv_nxt = seq_add(self.rcv_nxt, len(p))
            out.append(p)
        return b"".join(out)

    def on_ack_timer(self):
        if self.segs_since_ack == 0:
            return None
        return self._make_ack()

    def _make_ack(self) -> TcpAck:
        self.segs_since_ack = 0
        self.acks_sent += 1
        return TcpAck(ack=self.rcv_nxt, window=self.rcv_window,
                      sacks=self._rcv_sack_blocks())
