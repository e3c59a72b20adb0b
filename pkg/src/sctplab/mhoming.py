"""Multi-homing: per-path liveness via heartbeat probes, error-threshold
failover to an alternate path, and restoration of the primary once it
answers a probe again."""

from __future__ import annotations

from dataclasses import dataclass, field

from . import wire

ERROR_THRESHOLD = 5
HB_INTERVAL_MS = 500.0

ACTIVE = "active"
INACTIVE = "inactive"


@dataclass
class PathState:
    path_id: int
    is_primary: bool = False
    status: str = ACTIVE
    error_count: int = 0
    error_threshold: int = ERROR_THRESHOLD
    hb_interval_ns: int = int(HB_INTERVAL_MS * 1_000_000)
    last_activity: int = -1
    hb_nonce: int = 0           # outstanding probe nonce, 0 = none


class MultiHome:
    """Path book-keeping for one association. Congestion state stays in the
    send path (indexed by the same path ids); callers reset it on
    reactivation using the ids this class reports."""

    def __init__(self, n_paths: int, rng, error_threshold: int = ERROR_THRESHOLD,
                 hb_interval_ms: float = HB_INTERVAL_MS):
        hb_ns = int(hb_interval_ms * 1_000_000)
        self.paths = [
            PathState(path_id=i, is_primary=(i == 0),
                      error_threshold=error_threshold, hb_interval_ns=hb_ns)
            for i in range(n_paths)]
        self.rng = rng
        self.failovers = 0
        self.restorations = 0
        self.hb_sent = 0
        self.hb_acked = 0
        self.unknown_nonce = 0

    @property
    def primary(self) -> PathState:
        for p in self.paths:
            if p.is_primary:
                return p
        raise RuntimeError("no primary path")

    def mark_activity(self, path_id: int, now: int) -> None:
        self.paths[path_id].last_activity = now

    def mark_alive(self, path_id: int) -> None:
        """Forward progress (e.g. a cumulative ack for data on this path)
        clears the error count without waiting for a heartbeat."""
        self.paths[path_id].error_count = 0


def select_path(mh: MultiHome, retransmit: bool = False,
                failed_path: int = -1) -> int:
    """Primary when active, else lowest-id active alternate, else primary
    so timers keep firing. Retransmissions prefer an active path different
    from the one that just failed."""
    prim = mh.primary
    if retransmit:
        for p in mh.paths:
            if p.status == ACTIVE and p.path_id != failed_path:
                return p.path_id
        return prim.path_id
    if prim.status == ACTIVE:
        return prim.path_id
    for p in mh.paths:
        if p.status == ACTIVE:
            return p.path_id
    return prim.path_id


def on_path_error(mh: MultiHome, path_id: int) -> bool:
    """One more timeout or lost probe on this path. True when the path
    just went inactive."""
    p = mh.paths[path_id]
    p.error_count += 1
    if p.status == ACTIVE and p.error_count >= p.error_threshold:
        p.status = INACTIVE
        mh.failovers += 1
        return True
    return False


def heartbeat_tick(mh: MultiHome, now: int):
    """Probe every path (active or not) that has been quiet for a full
    heartbeat interval. Returns [(path_id, HeartbeatChunk)]."""
    out = []
    for p in mh.paths:
        if p.hb_interval_ns <= 0:
            continue
        if p.last_activity >= 0 and now - p.last_activity < p.hb_interval_ns:
            continue
        p.hb_nonce = int(mh.rng.integers(1, 1 << 63))
        p.last_activity = now
        mh.hb_sent += 1
        out.append((p.path_id, wire.HeartbeatChunk(nonce=p.hb_nonce,
                                                   path_id=p.path_id)))
    return out


def on_heartbeat_ack(mh: MultiHome, ack: wire.HeartbeatAckChunk, now: int):
    """Match the nonce to an outstanding probe. Returns the path id when
    the ack reactivated an inactive path (caller resets its cwnd), else
    None. Unknown or stale nonces are counted and ignored."""
    if not 0 <= ack.path_id < len(mh.paths):
        mh.unknown_nonce += 1
        return None
    p = mh.paths[ack.path_id]
    if ack.nonce == 0 or ack.nonce != p.hb_nonce:
        mh.unknown_nonce += 1
        return None
    p.hb_nonce = 0
    p.error_count = 0
    p.last_activity = now
    mh.hb_acked += 1
    if p.status == INACTIVE:
        p.status = ACTIVE
        mh.restorations += 1
        return p.path_id
    return None
