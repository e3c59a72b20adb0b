"""Receive path: TSN bookkeeping, fragment reassembly, per-stream ordered
delivery, receive-window accounting, and the SACK emission policy engine.

SACK emission supports four modes:

  every_packet  one SACK for every packet carrying data
  lk_double     two SACKs per packet (receipt + delivery), the stock
                kernel-stack behavior this library lets you compare against
  every_k       one SACK per k-th data packet (k=1 degenerates to
                every_packet), plus immediate SACKs on gap events
  delayed       timer-driven acking, immediate SACKs on gap events

Gap events that force an immediate SACK in any mode (when immediate_on_gap
is on): a packet opening a brand-new hole in the TSN sequence, a packet
repairing a hole and releasing buffered data, and duplicate TSNs. A packet
never emits more than one SACK for overlapping reasons; lk_double's second
SACK is the sole exception and is emitted after delivery with its duplicate
list already drained.

A receiver in go-back-N mode accepts only the next expected TSN. Everything
else is discarded, never buffered, and answered at once with a SACK carrying
the unchanged cumulative ack and no gap blocks, which is the retransmit
trigger the go-back-N sender listens for.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import wire
from .wire import TSN_MASK, tsn_add, tsn_le

MAX_GAP_BLOCKS = 64
MAX_DUP_REPORT = 32

SACK_MODES = ("every_packet", "lk_double", "every_k", "delayed")

# CLI spellings accepted alongside the canonical mode names
_MODE_ALIASES = {
    "per-packet": "every_packet",
    "lk-double": "lk_double",
    "per-k": "every_k",
    "delayed": "delayed",
}


@dataclass
class SackPolicy:
    mode: str = "every_packet"
    k: int = 7
    delay_ms: float = 200.0
    immediate_on_gap: bool = True

    def __post_init__(self):
        if self.mode not in SACK_MODES:
            raise ValueError("unknown SACK mode: %r" % self.mode)
        if self.mode == "every_k" and self.k < 1:
            raise ValueError("every_k needs k >= 1")

    @classmethod
    def from_string(cls, text: str, immediate_on_gap: bool = True) -> "SackPolicy":
        """Accepts canonical names plus the CLI forms per-packet, lk-double,
        per-k:<k>, delayed:<ms>."""
        name, _, arg = text.partition(":")
        name = name.strip()
        mode = _MODE_ALIASES.get(name, name)
        if mode == "every_k":
            return cls(mode=mode, k=int(arg) if arg else 7,
                       immediate_on_gap=immediate_on_gap)
        if mode == "delayed":
            return cls(mode=mode, delay_ms=float(arg) if arg else 200.0,
                       immediate_on_gap=immediate_on_gap)
        if arg:
            raise ValueError("mode %s takes no argument" % mode)
        return cls(mode=mode, immediate_on_gap=immediate_on_gap)


class StreamInbox:
    """Per-stream SSN-ordered release. A hole in one stream never delays
    another stream; that independence is the whole point of streams."""

    def __init__(self, n_streams: int):
        self.next_ssn = [0] * n_streams
        self.pending = [dict() for _ in range(n_streams)]

    def blocked_count(self, stream: int) -> int:
        return len(self.pending[stream])


def deliver_ordered(inbox: StreamInbox, stream: int, ssn: int,
                    payload: bytes) -> list:
    """File one reassembled ordered message; return every message this
    releases, in SSN order. Out-of-window SSNs wait in pending."""
    inbox.pending[stream][ssn] = payload
    out = []
    while inbox.next_ssn[stream] in inbox.pending[stream]:
        nxt = inbox.next_ssn[stream]
        out.append((stream, inbox.pending[stream].pop(nxt)))
        inbox.next_ssn[stream] = (nxt + 1) & wire.SSN_MASK
    return out


@dataclass
class _Frag:
    stream: int
    ssn: int
    unordered: bool
    begin: bool
    end: bool
    payload: bytes


@dataclass
class RxResult:
    delivered: list = field(default_factory=list)   # (stream, payload) pairs
    sacks: list = field(default_factory=list)       # SackChunk to send now
    arm_delayed: bool = False                       # start ack timer if idle


def sack_decision(policy: SackPolicy, rx: "ReceiverState",
                  gap_present: bool, forced: bool = False):
    """Per-data-packet emission decision. Returns (count, arm_delayed).
    Immediate (gap/forced) emissions collapse into the packet's regular
    SACK so no mode other than lk_double ever sends two for one packet."""
    immediate = forced or (policy.immediate_on_gap and gap_present)
    arm = False
    if policy.mode == "every_packet":
        n = 1
    elif policy.mode == "lk_double":
        n = 2
    elif policy.mode == "every_k":
        rx.k_count += 1
        if rx.k_count >= policy.k:
            rx.k_count = 0
            n = 1
        else:
            n = 1 if immediate else 0
            arm = n == 0    # guard against a window-limited sender stalling
    else:   # delayed
        if immediate or rx.pending_unsacked >= 2:
            n = 1       # never let more than one packet ride the timer
        else:
            n = 0
            arm = rx.pending_unsacked > 0
    if immediate and n == 0:
        n = 1
    return n, arm


class ReceiverState:
    def __init__(self, peer_itsn: int, n_streams: int, buffer_bytes: int,
                 policy: SackPolicy = None, gbn: bool = False,
                 ledger=None, assoc_id: int = 0):
        self.cum = (peer_itsn - 1) & TSN_MASK
        self.ooo = set()            # received TSNs above cum
        self.dups = []              # duplicate TSNs since last SACK
        self.frags = {}             # tsn -> _Frag awaiting reassembly
        self.inbox = StreamInbox(n_streams)
        self.n_streams = n_streams
        self.buffer_total = buffer_bytes
        self.buffered = 0
        self.policy = policy or SackPolicy()
        self.gbn = gbn
        self.ledger = ledger
        self.assoc_id = assoc_id
        # policy state
        self.k_count = 0
        self.pending_unsacked = 0
        # counters
        self.packets_in = 0
        self.chunks_in = 0
        self.dups_seen = 0
        self.gbn_discards = 0
        self.window_drops = 0
        self.stream_drops = 0
        self.sacks_built = 0
        self.messages_delivered = 0
        self.bytes_delivered = 0

    # -- TSN map ------------------------------------------------------------

    def _advance_cum(self) -> bool:
        """Pull the contiguous prefix of ooo into cum. True if any hole
        repair released previously buffered TSNs."""
        drained = False
        nxt = tsn_add(self.cum, 1)
        while nxt in self.ooo:
            self.ooo.discard(nxt)
            self.cum = nxt
            nxt = tsn_add(self.cum, 1)
            drained = True
        return drained

    def gap_blocks(self):
        """Maximal runs of ooo as (start, end) offsets from cum."""
        if not self.ooo:
            return ()
        offs = sorted((t - self.cum) & TSN_MASK for t in self.ooo)
        blocks = []
        start = prev = offs[0]
        for o in offs[1:]:
            if o == prev + 1:
                prev = o
                continue
            blocks.append((start, prev))
            start = prev = o
        blocks.append((start, prev))
        return tuple((s, e) for s, e in blocks
                     if e <= 0xFFFF)[:MAX_GAP_BLOCKS]

    # -- reassembly ---------------------------------------------------------

    def _try_assemble(self, tsn: int):
        """Assemble the begin..end fragment run containing tsn if complete.
        Fragments of one message sit on consecutive TSNs by construction."""
        fr = self.frags[tsn]
        b = tsn
        while not self.frags[b].begin:
            nb = (b - 1) & TSN_MASK
            nf = self.frags.get(nb)
            if nf is None or nf.stream != fr.stream:
                return None
            b = nb
        e = tsn
        while not self.frags[e].end:
            ne = (e + 1) & TSN_MASK
            nf = self.frags.get(ne)
            if nf is None or nf.stream != fr.stream:
                return None
            e = ne
        parts = []
        t = b
        while True:
            parts.append(self.frags.pop(t).payload)
            if t == e:
                break
            t = (t + 1) & TSN_MASK
        return fr.stream, fr.ssn, fr.unordered, b"".join(parts)

    def _accept(self, c: wire.DataChunk, out: list) -> None:
        """Chunk has a fresh TSN and fits the window: buffer, reassemble,
        deliver what became ready."""
        self.buffered += len(c.payload)
        self.frags[c.tsn] = _Frag(c.stream, c.ssn, c.unordered,
                                  c.begin, c.end, c.payload)
        done = self._try_assemble(c.tsn)
        if done is None:
            return
        stream, ssn, unordered, payload = done
        if unordered:
            self._deliver(stream, payload, out)
        else:
            for s, msg in deliver_ordered(self.inbox, stream, ssn, payload):
                self._deliver(s, msg, out)

    def _deliver(self, stream: int, payload: bytes, out: list) -> None:
        self.buffered -= len(payload)
        self.messages_delivered += 1
        self.bytes_delivered += len(payload)
        out.append((stream, payload))

    # -- entry points --------------------------------------------------------

    def on_data(self, chunks, now_ns: int = 0) -> RxResult:
        """Process one packet's DATA chunks; decide what to ack and when."""
        res = RxResult()
        self.packets_in += 1
        self.pending_unsacked += 1
        gap_present = False
        forced = False
        free_before = self.buffer_total - self.buffered
        for c in chunks:
            self.chunks_in += 1
            if self.ledger is not None:
                self.ledger.charge_chunk(self.assoc_id, c.stream, 1)
            if c.stream >= self.n_streams:
                self.stream_drops += 1
                continue
            nxt = tsn_add(self.cum, 1)
            if self.gbn:
                if c.tsn == nxt:
                    if len(c.payload) + self.buffered > self.buffer_total:
                        self.window_drops += 1
                        forced = True   # advertise the squeezed window now
                    else:
                        self.cum = nxt
                        self._accept(c, res.delivered)
                else:
                    # never buffered; the cum-only SACK is the whole signal
                    if tsn_le(c.tsn, self.cum):
                        self.dups_seen += 1
                        if len(self.dups) < MAX_DUP_REPORT:
                            self.dups.append(c.tsn)
                    else:
                        self.gbn_discards += 1
                    forced = True
                continue
            if tsn_le(c.tsn, self.cum) or c.tsn in self.ooo:
                self.dups_seen += 1
                if len(self.dups) < MAX_DUP_REPORT:
                    self.dups.append(c.tsn)
                gap_present = True
                continue
            if len(c.payload) + self.buffered > self.buffer_total:
                self.window_drops += 1
                forced = True           # advertise the squeezed window now
                continue
            if c.tsn == nxt:
                self.cum = nxt
                if self._advance_cum():
                    gap_present = True      # hole repaired, tell the sender
                self._accept(c, res.delivered)
            else:
                # new hole only if the TSN touches no existing run
                prev_t = (c.tsn - 1) & TSN_MASK
                next_t = (c.tsn + 1) & TSN_MASK
                if prev_t not in self.ooo and next_t not in self.ooo:
                    gap_present = True
                self.ooo.add(c.tsn)
                self._accept(c, res.delivered)

        # Window update: deliveries just reopened a squeezed window, so
        # tell the sender now instead of letting it ride the ack cadence.
        half = self.buffer_total // 2
        if free_before < half <= self.buffer_total - self.buffered:
            forced = True
        n, arm = sack_decision(self.policy, self, gap_present, forced)
        if n > 0:
            self.pending_unsacked = 0
        for _ in range(n):
            res.sacks.append(self.build_sack())
        res.arm_delayed = arm
        return res

    def on_delayed_timer(self):
        """Ack timer fired: SACK if anything is still unacknowledged."""
        if self.pending_unsacked == 0:
            return None
        self.pending_unsacked = 0
        self.k_count = 0
        return self.build_sack()

    def build_sack(self) -> wire.SackChunk:
        gaps = () if self.gbn else self.gap_blocks()
        sack = wire.SackChunk(
            cum_tsn=self.cum,
            a_rwnd=max(0, self.buffer_total - self.buffered),
            gaps=gaps,
            dups=tuple(self.dups))
        self.dups = []
        self.sacks_built += 1
        if self.ledger is not None:
            self.ledger.charge_sack(1)
        return sack
