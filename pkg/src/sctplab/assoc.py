"""Association state: setup handshake with stateless cookies, verification
tags, shutdown sequencing, and the control block that ties the send and
receive paths together.

The four-way handshake keeps the listener stateless until the cookie comes
back: everything needed to build the control block is packed into the cookie
itself and authenticated with a truncated HMAC, so a flood of INITs costs the
listener nothing but a signature per reply.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import struct
from dataclasses import dataclass, field

from . import wire

# control-block memory footprint per association, in bytes
TCB_FOOTPRINT = {"baseline": 10240, "compact": 1024}

COOKIE_LIFETIME_NS = 60 * 1_000_000_000
COOKIE_MAC_LEN = 8
_COOKIE_BODY = struct.Struct("!QIIIIIHH")

PATH_ERROR_THRESHOLD = 5


class AssocError(Exception):
    pass


class CookieError(AssocError):
    """Cookie failed authentication or freshness checks."""


class VtagMismatch(AssocError):
    """Inbound packet carried the wrong verification tag."""


class TcbState(enum.Enum):
    CLOSED = 0
    COOKIE_WAIT = 1
    COOKIE_ECHOED = 2
    ESTABLISHED = 3
    SHUTDOWN_PENDING = 4
    SHUTDOWN_SENT = 5
    SHUTDOWN_RECEIVED = 6
    SHUTDOWN_ACK_SENT = 7


@dataclass
class AssocConfig:
    """Per-association knobs. Scenario code overrides what it cares about."""

    mtu: int = 1500
    rwnd: int = 131072
    n_streams: int = 10
    sack_policy: str = "every_packet"   # every_packet | lk_double | every_k | delayed
    sack_k: int = 7
    sack_delay_ms: float = 200.0
    gbn: bool = False                   # receiver discards out-of-order
    no_delay: bool = False              # push small messages without bundling wait
    copy_mode: str = "legacy"           # legacy | optimized
    rto_initial_ms: float = 200.0
    rto_min_ms: float = 1.0
    rto_max_ms: float = 60000.0
    hb_interval_ms: float = 500.0       # 0 disables heartbeats
    n_paths: int = 1
    checksum: bool = False
    footprint: str = "baseline"
    mbs: int = 4                        # max packets per send burst
    allow_data_with_cookie_echo: bool = False


@dataclass
class CookieFields:
    created_ns: int
    peer_tag: int       # initiator's tag; we stamp it on outbound packets
    local_tag: int      # tag we chose; initiator stamps it back to us
    peer_rwnd: int
    peer_itsn: int
    local_itsn: int
    n_out: int
    n_in: int


def pack_cookie(fields: CookieFields, secret: bytes) -> bytes:
    body = _COOKIE_BODY.pack(
        fields.created_ns, fields.peer_tag, fields.local_tag,
        fields.peer_rwnd, fields.peer_itsn, fields.local_itsn,
        fields.n_out, fields.n_in)
    mac = hmac.new(secret, body, hashlib.sha256).digest()[:COOKIE_MAC_LEN]
    return body + mac


def unpack_cookie(blob: bytes, secret: bytes, now_ns: int,
                  lifetime_ns: int = COOKIE_LIFETIME_NS) -> CookieFields:
    if len(blob) != _COOKIE_BODY.size + COOKIE_MAC_LEN:
        raise CookieError("cookie wrong size: %d" % len(blob))
    body, mac = blob[:_COOKIE_BODY.size], blob[_COOKIE_BODY.size:]
    want = hmac.new(secret, body, hashlib.sha256).digest()[:COOKIE_MAC_LEN]
    if not hmac.compare_digest(mac, want):
        raise CookieError("cookie failed authentication")
    vals = _COOKIE_BODY.unpack(body)
    fields = CookieFields(*vals)
    age = now_ns - fields.created_ns
    if age < 0 or age > lifetime_ns:
        raise CookieError("cookie stale: age %.1fs" % (age / 1e9))
    return fields


@dataclass
class Tcb:
    """Association control block. The tx/rx/path substates are attached by
    the endpoint once the handshake pins down the negotiated values."""

    config: AssocConfig
    local_port: int
    remote_port: int
    state: TcbState = TcbState.CLOSED
    local_tag: int = 0          # tag peers must stamp on packets to us
    peer_tag: int = 0           # tag we stamp on packets to the peer
    local_itsn: int = 0
    peer_itsn: int = 0
    peer_rwnd: int = 0
    n_out: int = 0
    n_in: int = 0
    # filled in by the endpoint layer once negotiated
    tx: object = None
    rx: object = None
    paths: list = field(default_factory=list)
    primary_path: int = 0
    # pending cookie while COOKIE_ECHOED (kept for retransmission)
    cookie: bytes = b""

    def footprint(self) -> int:
        return TCB_FOOTPRINT[self.config.footprint]


def _pick_tag(rng) -> int:
    # tags must be non-zero so an INIT (vtag 0) is never mistaken for data
    return int(rng.integers(1, 0xFFFFFFFF))


def _pick_tsn(rng) -> int:
    return int(rng.integers(0, 0x100000000))


def assoc_init(tcb: Tcb, rng) -> wire.InitChunk:
    """Start the handshake from the active side. Returns the INIT to send
    (with verification tag 0 on the packet)."""
    assert tcb.state == TcbState.CLOSED
    tcb.local_tag = _pick_tag(rng)
    tcb.local_itsn = _pick_tsn(rng)
    tcb.state = TcbState.COOKIE_WAIT
    return wire.InitChunk(
        init_tag=tcb.local_tag, a_rwnd=tcb.config.rwnd,
        n_out_streams=tcb.config.n_streams, n_in_streams=tcb.config.n_streams,
        initial_tsn=tcb.local_itsn)


def listener_on_init(init: wire.InitChunk, config: AssocConfig, secret: bytes,
                     now_ns: int, rng) -> wire.InitAckChunk:
    """Stateless reply to an INIT: pick our tag and TSN, bake both plus the
    peer's parameters into an authenticated cookie, remember nothing."""
    local_tag = _pick_tag(rng)
    local_itsn = _pick_tsn(rng)
    n_out = min(config.n_streams, init.n_in_streams)
    n_in = min(config.n_streams, init.n_out_streams)
    fields = CookieFields(
        created_ns=now_ns, peer_tag=init.init_tag, local_tag=local_tag,
        peer_rwnd=init.a_rwnd, peer_itsn=init.initial_tsn,
        local_itsn=local_itsn, n_out=n_out, n_in=n_in)
    cookie = pack_cookie(fields, secret)
    return wire.InitAckChunk(
        init_tag=local_tag, a_rwnd=config.rwnd,
        n_out_streams=n_out, n_in_streams=n_in,
        initial_tsn=local_itsn, cookie=cookie)


def on_init_ack(tcb: Tcb, ack: wire.InitAckChunk) -> wire.CookieEchoChunk:
    """Active side: record the peer's parameters and echo the cookie."""
    if tcb.state != TcbState.COOKIE_WAIT:
        raise AssocError("INIT_ACK in state %s" % tcb.state.name)
    tcb.peer_tag = ack.init_tag
    tcb.peer_rwnd = ack.a_rwnd
    tcb.peer_itsn = ack.initial_tsn
    tcb.n_out = min(tcb.config.n_streams, ack.n_in_streams)
    tcb.n_in = min(tcb.config.n_streams, ack.n_out_streams)
    tcb.cookie = ack.cookie
    tcb.state = TcbState.COOKIE_ECHOED
    return wire.CookieEchoChunk(cookie=ack.cookie)


def tcb_from_cookie(fields: CookieFields, config: AssocConfig,
                    local_port: int, remote_port: int) -> Tcb:
    """Passive side: materialize the control block the cookie describes.
    The association is established the moment the cookie checks out."""
    tcb = Tcb(config=config, local_port=local_port, remote_port=remote_port)
    tcb.local_tag = fields.local_tag
    tcb.peer_tag = fields.peer_tag
    tcb.local_itsn = fields.local_itsn
    tcb.peer_itsn = fields.peer_itsn
    tcb.peer_rwnd = fields.peer_rwnd
    tcb.n_out = fields.n_out
    tcb.n_in = fields.n_in
    tcb.state = TcbState.ESTABLISHED
    return tcb


def on_cookie_ack(tcb: Tcb) -> None:
    if tcb.state != TcbState.COOKIE_ECHOED:
        raise AssocError("COOKIE_ACK in state %s" % tcb.state.name)
    tcb.cookie = b""
    tcb.state = TcbState.ESTABLISHED


def verify_inbound(tcb: Tcb, pkt: wire.Packet) -> None:
    """Every packet after the INIT must carry the tag we handed out."""
    if pkt.chunks and isinstance(pkt.chunks[0], wire.InitChunk):
        if pkt.verification_tag != 0:
            raise VtagMismatch("INIT with non-zero vtag 0x%08x"
                               % pkt.verification_tag)
        return
    if pkt.verification_tag != tcb.local_tag:
        raise VtagMismatch("vtag 0x%08x, wanted 0x%08x"
                           % (pkt.verification_tag, tcb.local_tag))


# --- shutdown sequence ------------------------------------------------------
# initiator: SHUTDOWN_PENDING until tx drains, then SHUTDOWN -> SHUTDOWN_SENT;
# responder: SHUTDOWN_RECEIVED until its tx drains, replies SHUTDOWN_ACK;
# initiator answers SHUTDOWN_COMPLETE and both sides close.

def start_shutdown(tcb: Tcb) -> None:
    if tcb.state == TcbState.ESTABLISHED:
        tcb.state = TcbState.SHUTDOWN_PENDING


def on_shutdown(tcb: Tcb) -> None:
    if tcb.state in (TcbState.ESTABLISHED, TcbState.SHUTDOWN_PENDING,
                     TcbState.SHUTDOWN_SENT):
        tcb.state = TcbState.SHUTDOWN_RECEIVED


def on_shutdown_ack(tcb: Tcb) -> wire.ShutdownCompleteChunk:
    tcb.state = TcbState.CLOSED
    return wire.ShutdownCompleteChunk()


def on_shutdown_complete(tcb: Tcb) -> None:
    tcb.state = TcbState.CLOSED
