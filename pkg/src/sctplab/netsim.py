"""Deterministic discrete-event network simulator.

Integer-nanosecond clock, seeded per-link loss streams, store-and-forward
links with finite queues, and a cost-unit ledger that stands in for CPU
work. Everything here is deterministic for a fixed seed: events tie-break
on a monotonically increasing sequence number and every random draw comes
from a named per-stream generator.
"""

import heapq
from collections import deque

import numpy as np

NS_PER_US = 1_000
NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000


class EventLimitExceeded(RuntimeError):
    """run_to_completion processed more events than the configured guard."""


class SimError(RuntimeError):
    pass


def stream_rng(seed: int, key: int) -> np.random.Generator:
    """A splittable per-stream generator: (seed, key) names the stream.

    Streams are independent of each other, so adding a link or host does
    not perturb the draws seen by existing ones.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, key])))


class EventHandle:
    __slots__ = ("due", "seq", "fn", "args", "cancelled")

    def __init__(self, due, seq, fn, args):
        self.due = due
        self.seq = seq
        self.fn = fn
        self.args = args
        self.cancelled = False


class Simulator:
    """Event loop ordered by (due_time_ns, insertion_seq)."""

    def __init__(self):
        self.now = 0
        self._heap = []
        self._seq = 0
        self.events_processed = 0

    def schedule(self, delay_ns: int, fn, *args) -> EventHandle:
        if delay_ns < 0:
            raise SimError("cannot schedule into the past (delay %r)" % delay_ns)
        self._seq += 1
        ev = EventHandle(self.now + int(delay_ns), self._seq, fn, args)
        heapq.heappush(self._heap, (ev.due, ev.seq, ev))
        return ev

    def schedule_at(self, due_ns: int, fn, *args) -> EventHandle:
        return self.schedule(due_ns - self.now, fn, *args)

    def cancel(self, handle: EventHandle):
        # Lazy cancellation: the entry stays heaped but is skipped on pop.
        if handle is not None:
            handle.cancelled = True

    def _pop_due(self):
        while self._heap:
            due, seq, ev = heapq.heappop(self._heap)
            if ev.cancelled:
                continue
            return ev
        return None

    def run_until(self, t_ns: int):
        """Process events with due <= t_ns, then set the clock to t_ns."""
        while self._heap:
            due, seq, ev = self._heap[0]
            if due > t_ns:
                break
            heapq.heappop(self._heap)
            if ev.cancelled:
                continue
            self.now = due
            self.events_processed += 1
            ev.fn(*ev.args)
        if t_ns > self.now:
            self.now = t_ns

    def run_to_completion(self, max_events: int = 20_000_000):
        start = self.events_processed
        while True:
            ev = self._pop_due()
            if ev is None:
                return self.events_processed - start
            if self.events_processed - start >= max_events:
                raise EventLimitExceeded(
                    "event guard tripped after %d events at t=%d ns"
                    % (max_events, self.now)
                )
            self.now = ev.due
            self.events_processed += 1
            ev.fn(*ev.args)

    def pending_events(self) -> int:
        return sum(1 for _, _, ev in self._heap if not ev.cancelled)


class Frame:
    """What a link carries: a byte length on the wire plus an opaque payload.

    meta is a small dict used by benchmarks for per-frame bookkeeping
    (path id, whether the frame carries new DATA, which streams, ...).
    """

    __slots__ = ("wire_bytes", "payload", "meta")

    def __init__(self, wire_bytes: int, payload, meta=None):
        self.wire_bytes = wire_bytes
        self.payload = payload
        self.meta = meta if meta is not None else {}


class Link:
    """Unidirectional store-and-forward link.

    Serialization takes 8*bytes/bandwidth, then the frame propagates for
    prop_delay_ns. Frames queue FIFO behind the serializer; a frame
    arriving when queue_capacity frames are already waiting or in service
    is tail-dropped. Random loss is Bernoulli(drop_prob) per surviving
    frame, drawn from this link's own stream.
    """

    def __init__(self, sim: Simulator, name: str, bandwidth_bps: int,
                 prop_delay_ns: int, drop_prob: float = 0.0,
                 queue_capacity: int = 256, seed: int = 0, key: int = 0,
                 deliver=None):
        if bandwidth_bps <= 0:
            raise SimError("bandwidth must be positive")
        self.sim = sim
        self.name = name
        self.bandwidth_bps = int(bandwidth_bps)
        self.prop_delay_ns = int(prop_delay_ns)
        self.drop_prob = float(drop_prob)
        self.queue_capacity = int(queue_capacity)
        self.rng = stream_rng(seed, key)
        self.deliver = deliver          # fn(frame) called at arrival
        self.forced_drop = None         # fn(frame) -> bool, deterministic injection
        self._busy_until = 0
        self._ends = deque()            # serialization end times of queued frames
        self.frames_sent = 0
        self.frames_delivered = 0
        self.dropped_random = 0
        self.dropped_queue = 0
        self.dropped_forced = 0
        self.bytes_sent = 0

    def ser_ns(self, nbytes: int) -> int:
        return (nbytes * 8 * NS_PER_S) // self.bandwidth_bps

    def idle_at(self) -> int:
        """Absolute sim time when the serializer drains (now if idle)."""
        return self._busy_until if self._busy_until > self.sim.now else self.sim.now

    def in_queue(self) -> int:
        now = self.sim.now
        while self._ends and self._ends[0] <= now:
            self._ends.popleft()
        return len(self._ends)

    def set_drop_prob(self, p: float):
        self.drop_prob = float(p)

    def transmit(self, frame: Frame):
        """Send one frame; returns True if it was accepted onto the wire."""
        self.frames_sent += 1
        if self.in_queue() >= self.queue_capacity:
            self.dropped_queue += 1
            return False
        if self.forced_drop is not None and self.forced_drop(frame):
            self.dropped_forced += 1
            return False
        if self.drop_prob > 0.0 and self.rng.random() < self.drop_prob:
            self.dropped_random += 1
            return False
        now = self.sim.now
        start = self._busy_until if self._busy_until > now else now
        end = start + self.ser_ns(frame.wire_bytes)
        self._busy_until = end
        self._ends.append(end)
        self.bytes_sent += frame.wire_bytes
        self.sim.schedule(end + self.prop_delay_ns - now, self._arrive, frame)
        return True

    def _arrive(self, frame: Frame):
        self.frames_delivered += 1
        if self.deliver is not None:
            self.deliver(frame)


def link_transmit(link: Link, frame: Frame) -> bool:
    return link.transmit(frame)


class CostWeights:
    """Units per counted thing. Calibration knobs, not measured truth."""

    __slots__ = ("copy_byte", "copy_byte_small", "chunk", "sack", "crc_byte")

    def __init__(self, copy_byte=1.0, copy_byte_small=0.8, chunk=50.0,
                 sack=200.0, crc_byte=0.5):
        self.copy_byte = copy_byte
        self.copy_byte_small = copy_byte_small
        self.chunk = chunk
        self.sack = sack
        self.crc_byte = crc_byte


class CostLedger:
    """Per-host cost-unit ledger.

    Counters accumulate raw counts; cpu_proxy() folds them with the
    weights, so the proxy is always recomputable from the counters.
    Chunk processing is also attributed per (assoc, stream) to support
    the coarse/fine lock elapsed models: coarse serializes streams of one
    association (sum); fine lets them overlap (max).
    """

    def __init__(self, weights: CostWeights = None):
        self.weights = weights if weights is not None else CostWeights()
        self.copy_bytes = 0
        self.copy_bytes_small = 0
        self.chunks_processed = 0
        self.sacks_processed = 0
        self.crc_bytes = 0
        self.per_stream = {}   # (assoc_id, stream) -> chunk-processing units

    def charge(self, kind: str, amount: int = 1):
        setattr(self, kind, getattr(self, kind) + amount)

    def charge_copy(self, nbytes: int, small: bool = False):
        if small:
            self.copy_bytes_small += nbytes
        else:
            self.copy_bytes += nbytes

    def charge_chunk(self, assoc_id=None, stream=None, n: int = 1):
        self.chunks_processed += n
        if assoc_id is not None:
            key = (assoc_id, stream)
            units = n * self.weights.chunk
            self.per_stream[key] = self.per_stream.get(key, 0.0) + units

    def charge_sack(self, n: int = 1):
        self.sacks_processed += n

    def charge_crc(self, nbytes: int):
        self.crc_bytes += nbytes

    def cpu_proxy(self) -> float:
        w = self.weights
        return (self.copy_bytes * w.copy_byte
                + self.copy_bytes_small * w.copy_byte_small
                + self.chunks_processed * w.chunk
                + self.sacks_processed * w.sack
                + self.crc_bytes * w.crc_byte)

    def _per_assoc(self):
        by_assoc = {}
        for (assoc_id, stream), units in self.per_stream.items():
            by_assoc.setdefault(assoc_id, []).append(units)
        return by_assoc

    def elapsed_proxy(self, lock_model: str) -> float:
        """Hypothetical elapsed stream-processing units under a lock model."""
        total = 0.0
        for units in self._per_assoc().values():
            if lock_model == "coarse":
                total += sum(units)
            elif lock_model == "fine":
                total += max(units)
            else:
                raise ValueError("unknown lock model %r" % lock_model)
        return total
