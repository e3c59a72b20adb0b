"""Packet codec for the chunk-bundled wire format.

Layout: a 12-byte common header (src_port, dst_port u16; verification_tag,
checksum u32) followed by chunks. Every chunk starts with a 4-byte header
(type u8, flags u8, length u16); length covers header + value but not the
padding that aligns the next chunk to a 4-byte boundary. The DATA chunk
header is fixed at 16 bytes, so a payload fragment of fragment_payload(mtu)
bytes exactly fills one MTU once the 20-byte network header budget is added.

The checksum is CRC-32c over the packet with the checksum field zeroed;
it is off by default (field encodes 0 and is ignored on decode).
"""

import struct
from dataclasses import dataclass, field

TSN_MASK = 0xFFFFFFFF
TSN_HALF = 0x80000000
SSN_MASK = 0xFFFF
SSN_HALF = 0x8000

COMMON_HEADER = struct.Struct("!HHII")
CHUNK_HEADER = struct.Struct("!BBH")
COMMON_HEADER_LEN = 12
CHUNK_HEADER_LEN = 4
DATA_HEADER_LEN = 16

NETWORK_HEADER_BUDGET = 20   # modeled IP header bytes outside this codec

# chunk type codes
CT_DATA = 0
CT_INIT = 1
CT_INIT_ACK = 2
CT_SACK = 3
CT_HEARTBEAT = 4
CT_HEARTBEAT_ACK = 5
CT_ABORT = 6
CT_SHUTDOWN = 7
CT_SHUTDOWN_ACK = 8
CT_COOKIE_ECHO = 10
CT_COOKIE_ACK = 11
CT_SHUTDOWN_COMPLETE = 14

# DATA flags
F_UNORDERED = 0x04
F_BEGIN = 0x02
F_END = 0x01


def fragment_payload(mtu: int) -> int:
    """Largest DATA payload that still fits one MTU after all headers."""
    return mtu - NETWORK_HEADER_BUDGET - COMMON_HEADER_LEN - DATA_HEADER_LEN


# ---------------------------------------------------------------------------
# serial arithmetic (mod 2^32 TSNs, mod 2^16 SSNs)

def tsn_lt(a: int, b: int) -> bool:
    return 0 < ((b - a) & TSN_MASK) < TSN_HALF


def tsn_le(a: int, b: int) -> bool:
    return a == b or tsn_lt(a, b)


def tsn_cmp(a: int, b: int) -> int:
    """-1, 0, or 1 under serial ordering."""
    if a == b:
        return 0
    return -1 if tsn_lt(a, b) else 1


def tsn_add(a: int, n: int = 1) -> int:
    return (a + n) & TSN_MASK


def tsn_diff(a: int, b: int) -> int:
    """Serial distance a - b (valid when within half the space)."""
    d = (a - b) & TSN_MASK
    return d - (1 << 32) if d >= TSN_HALF else d


def ssn_lt(a: int, b: int) -> bool:
    return 0 < ((b - a) & SSN_MASK) < SSN_HALF


def ssn_add(a: int, n: int = 1) -> int:
    return (a + n) & SSN_MASK


# ---------------------------------------------------------------------------
# CRC-32c (Castagnoli), table-driven, reflected, init/final 0xFFFFFFFF

def _make_crc32c_table():
    poly = 0x82F63B78
    table = []
    for i in range(256):
        c = i
        for _ in range(8):
            c = (c >> 1) ^ poly if c & 1 else c >> 1
        table.append(c)
    return table


_CRC32C_TABLE = _make_crc32c_table()


def crc32c(data: bytes) -> int:
    crc = 0xFFFFFFFF
    table = _CRC32C_TABLE
    for b in data:
        crc = (crc >> 8) ^ table[(crc ^ b) & 0xFF]
    return crc ^ 0xFFFFFFFF


# ---------------------------------------------------------------------------
# errors

class WireError(ValueError):
    """Base for codec errors; offset is the byte position when known."""

    def __init__(self, msg, offset=None):
        super().__init__(msg if offset is None else "%s (offset %d)" % (msg, offset))
        self.offset = offset


class MalformedHeaderError(WireError):
    pass


class TruncatedChunkError(WireError):
    pass


class UnknownChunkTypeError(WireError):
    pass


class ChecksumMismatchError(WireError):
    pass


class OversizePacketError(WireError):
    pass


# ---------------------------------------------------------------------------
# chunk types

@dataclass
class DataChunk:
    tsn: int
    stream: int
    ssn: int
    payload: bytes
    unordered: bool = False
    begin: bool = True
    end: bool = True

    def wire_len(self) -> int:
        return DATA_HEADER_LEN + len(self.payload)


@dataclass
class InitChunk:
    init_tag: int
    a_rwnd: int
    n_out_streams: int
    n_in_streams: int
    initial_tsn: int

    def wire_len(self) -> int:
        return CHUNK_HEADER_LEN + 16


@dataclass
class InitAckChunk:
    init_tag: int
    a_rwnd: int
    n_out_streams: int
    n_in_streams: int
    initial_tsn: int
    cookie: bytes = b""

    def wire_len(self) -> int:
        return CHUNK_HEADER_LEN + 16 + len(self.cookie)


@dataclass
class SackChunk:
    cum_tsn: int
    a_rwnd: int
    gaps: tuple = ()     # ((start_off, end_off), ...) relative to cum_tsn
    dups: tuple = ()     # duplicate TSNs

    def wire_len(self) -> int:
        return CHUNK_HEADER_LEN + 12 + 4 * len(self.gaps) + 4 * len(self.dups)


@dataclass
class HeartbeatChunk:
    nonce: int
    path_id: int

    def wire_len(self) -> int:
        return CHUNK_HEADER_LEN + 10


@dataclass
class HeartbeatAckChunk:
    nonce: int
    path_id: int

    def wire_len(self) -> int:
        return CHUNK_HEADER_LEN + 10


@dataclass
class AbortChunk:
    def wire_len(self) -> int:
        return CHUNK_HEADER_LEN


@dataclass
class ShutdownChunk:
    cum_tsn: int

    def wire_len(self) -> int:
        return CHUNK_HEADER_LEN + 4


@dataclass
class ShutdownAckChunk:
    def wire_len(self) -> int:
        return CHUNK_HEADER_LEN


@dataclass
class CookieEchoChunk:
    cookie: bytes

    def wire_len(self) -> int:
        return CHUNK_HEADER_LEN + len(self.cookie)


@dataclass
class CookieAckChunk:
    def wire_len(self) -> int:
        return CHUNK_HEADER_LEN


@dataclass
class ShutdownCompleteChunk:
    def wire_len(self) -> int:
        return CHUNK_HEADER_LEN


@dataclass
class Packet:
    src_port: int
    dst_port: int
    verification_tag: int
    chunks: list = field(default_factory=list)

    def wire_len(self) -> int:
        return packet_wire_len(self)


def _padded(n: int) -> int:
    return (n + 3) & ~3


def chunk_padded_len(chunk) -> int:
    return _padded(chunk.wire_len())


def packet_wire_len(pkt: Packet) -> int:
    return COMMON_HEADER_LEN + sum(chunk_padded_len(c) for c in pkt.chunks)


# ---------------------------------------------------------------------------
# encode

def _encode_chunk(out: bytearray, chunk):
    if isinstance(chunk, DataChunk):
        flags = ((F_UNORDERED if chunk.unordered else 0)
                 | (F_BEGIN if chunk.begin else 0)
                 | (F_END if chunk.end else 0))
        length = DATA_HEADER_LEN + len(chunk.payload)
        out += CHUNK_HEADER.pack(CT_DATA, flags, length)
        out += struct.pack("!IHHI", chunk.tsn, chunk.stream, chunk.ssn, 0)
        out += chunk.payload
    elif isinstance(chunk, InitChunk):
        out += CHUNK_HEADER.pack(CT_INIT, 0, CHUNK_HEADER_LEN + 16)
        out += struct.pack("!IIHHI", chunk.init_tag, chunk.a_rwnd,
                           chunk.n_out_streams, chunk.n_in_streams,
                           chunk.initial_tsn)
    elif isinstance(chunk, InitAckChunk):
        out += CHUNK_HEADER.pack(CT_INIT_ACK, 0,
                                 CHUNK_HEADER_LEN + 16 + len(chunk.cookie))
        out += struct.pack("!IIHHI", chunk.init_tag, chunk.a_rwnd,
                           chunk.n_out_streams, chunk.n_in_streams,
                           chunk.initial_tsn)
        out += chunk.cookie
    elif isinstance(chunk, SackChunk):
        for start, end in chunk.gaps:
            if not (1 <= start <= end <= 0xFFFF):
                raise WireError("bad gap block (%d,%d)" % (start, end))
        length = CHUNK_HEADER_LEN + 12 + 4 * len(chunk.gaps) + 4 * len(chunk.dups)
        out += CHUNK_HEADER.pack(CT_SACK, 0, length)
        out += struct.pack("!IIHH", chunk.cum_tsn, chunk.a_rwnd,
                           len(chunk.gaps), len(chunk.dups))
        for start, end in chunk.gaps:
            out += struct.pack("!HH", start, end)
        for d in chunk.dups:
            out += struct.pack("!I", d)
    elif isinstance(chunk, HeartbeatChunk):
        out += CHUNK_HEADER.pack(CT_HEARTBEAT, 0, CHUNK_HEADER_LEN + 10)
        out += struct.pack("!QH", chunk.nonce, chunk.path_id)
    elif isinstance(chunk, HeartbeatAckChunk):
        out += CHUNK_HEADER.pack(CT_HEARTBEAT_ACK, 0, CHUNK_HEADER_LEN + 10)
        out += struct.pack("!QH", chunk.nonce, chunk.path_id)
    elif isinstance(chunk, ShutdownChunk):
        out += CHUNK_HEADER.pack(CT_SHUTDOWN, 0, CHUNK_HEADER_LEN + 4)
        out += struct.pack("!I", chunk.cum_tsn)
    elif isinstance(chunk, CookieEchoChunk):
        out += CHUNK_HEADER.pack(CT_COOKIE_ECHO, 0,
                                 CHUNK_HEADER_LEN + len(chunk.cookie))
        out += chunk.cookie
    elif isinstance(chunk, CookieAckChunk):
        out += CHUNK_HEADER.pack(CT_COOKIE_ACK, 0, CHUNK_HEADER_LEN)
    elif isinstance(chunk, ShutdownAckChunk):
        out += CHUNK_HEADER.pack(CT_SHUTDOWN_ACK, 0, CHUNK_HEADER_LEN)
    elif isinstance(chunk, ShutdownCompleteChunk):
        out += CHUNK_HEADER.pack(CT_SHUTDOWN_COMPLETE, 0, CHUNK_HEADER_LEN)
    elif isinstance(chunk, AbortChunk):
        out += CHUNK_HEADER.pack(CT_ABORT, 0, CHUNK_HEADER_LEN)
    else:
        raise WireError("cannot encode chunk %r" % (chunk,))
    pad = -len(out) % 4
    if pad:
        out += b"\x00" * pad


def encode_packet(pkt: Packet, with_checksum: bool = False,
                  size_limit: int = None) -> bytes:
    out = bytearray()
    out += COMMON_HEADER.pack(pkt.src_port, pkt.dst_port,
                              pkt.verification_tag, 0)
    for chunk in pkt.chunks:
        _encode_chunk(out, chunk)
    if size_limit is not None and len(out) > size_limit:
        raise OversizePacketError(
            "encoded packet is %d bytes, limit %d" % (len(out), size_limit))
    if with_checksum:
        csum = crc32c(bytes(out))
        out[8:12] = struct.pack("!I", csum)
    return bytes(out)


# ---------------------------------------------------------------------------
# decode

def _need(data, offset, n, what):
    if offset + n > len(data):
        raise TruncatedChunkError("truncated %s" % what, offset)


def decode_packet(data: bytes, verify_checksum: bool = False) -> Packet:
    if len(data) < COMMON_HEADER_LEN:
        raise MalformedHeaderError(
            "packet shorter than common header (%d bytes)" % len(data), 0)
    src, dst, vtag, stored_csum = COMMON_HEADER.unpack_from(data, 0)
    if verify_checksum:
        zeroed = data[:8] + b"\x00\x00\x00\x00" + data[12:]
        if crc32c(zeroed) != stored_csum:
            raise ChecksumMismatchError("checksum mismatch", 8)
    pkt = Packet(src, dst, vtag, [])
    offset = COMMON_HEADER_LEN
    while offset < len(data):
        _need(data, offset, CHUNK_HEADER_LEN, "chunk header")
        ctype, flags, length = CHUNK_HEADER.unpack_from(data, offset)
        if length < CHUNK_HEADER_LEN:
            raise TruncatedChunkError(
                "chunk length %d below header size" % length, offset)
        _need(data, offset, length, "chunk body")
        body = data[offset + CHUNK_HEADER_LEN:offset + length]
        pkt.chunks.append(_decode_chunk(ctype, flags, body, offset))
        offset += _padded(length)
    return pkt


def _decode_chunk(ctype, flags, body, offset):
    if ctype == CT_DATA:
        if len(body) < DATA_HEADER_LEN - CHUNK_HEADER_LEN:
            raise TruncatedChunkError("DATA chunk too short", offset)
        tsn, stream, ssn, _ppid = struct.unpack_from("!IHHI", body, 0)
        return DataChunk(tsn, stream, ssn, body[12:],
                         unordered=bool(flags & F_UNORDERED),
                         begin=bool(flags & F_BEGIN),
                         end=bool(flags & F_END))
    if ctype == CT_INIT:
        if len(body) < 16:
            raise TruncatedChunkError("INIT chunk too short", offset)
        return InitChunk(*struct.unpack_from("!IIHHI", body, 0))
    if ctype == CT_INIT_ACK:
        if len(body) < 16:
            raise TruncatedChunkError("INIT_ACK chunk too short", offset)
        tag, arwnd, nout, nin, itsn = struct.unpack_from("!IIHHI", body, 0)
        return InitAckChunk(tag, arwnd, nout, nin, itsn, body[16:])
    if ctype == CT_SACK:
        if len(body) < 12:
            raise TruncatedChunkError("SACK chunk too short", offset)
        cum, arwnd, ngaps, ndups = struct.unpack_from("!IIHH", body, 0)
        need = 12 + 4 * ngaps + 4 * ndups
        if len(body) < need:
            raise TruncatedChunkError("SACK blocks truncated", offset)
        gaps = tuple(struct.unpack_from("!HH", body, 12 + 4 * i)
                     for i in range(ngaps))
        dups = tuple(struct.unpack_from("!I", body, 12 + 4 * ngaps + 4 * i)[0]
                     for i in range(ndups))
        return SackChunk(cum, arwnd, gaps, dups)
    if ctype == CT_HEARTBEAT or ctype == CT_HEARTBEAT_ACK:
        if len(body) < 10:
            raise TruncatedChunkError("heartbeat chunk too short", offset)
        nonce, path_id = struct.unpack_from("!QH", body, 0)
        cls = HeartbeatChunk if ctype == CT_HEARTBEAT else HeartbeatAckChunk
        return cls(nonce, path_id)
    if ctype == CT_SHUTDOWN:
        if len(body) < 4:
            raise TruncatedChunkError("SHUTDOWN chunk too short", offset)
        return ShutdownChunk(struct.unpack_from("!I", body, 0)[0])
    if ctype == CT_COOKIE_ECHO:
        return CookieEchoChunk(bytes(body))
    if ctype == CT_COOKIE_ACK:
        return CookieAckChunk()
    if ctype == CT_SHUTDOWN_ACK:
        return ShutdownAckChunk()
    if ctype == CT_SHUTDOWN_COMPLETE:
        return ShutdownCompleteChunk()
    if ctype == CT_ABORT:
        return AbortChunk()
    raise UnknownChunkTypeError("unknown chunk type %d" % ctype, offset)


# ---------------------------------------------------------------------------
# debug pretty-printer (stable output, used by golden tests)

def _fmt_chunk(c) -> str:
    if isinstance(c, DataChunk):
        flag_s = "".join((
            "U" if c.unordered else "",
            "B" if c.begin else "",
            "E" if c.end else "")) or "-"
        return "DATA tsn=%d stream=%d ssn=%d flags=%s len=%d" % (
            c.tsn, c.stream, c.ssn, flag_s, len(c.payload))
    if isinstance(c, InitChunk):
        return "INIT tag=0x%08x a_rwnd=%d out=%d in=%d itsn=%d" % (
            c.init_tag, c.a_rwnd, c.n_out_streams, c.n_in_streams, c.initial_tsn)
    if isinstance(c, InitAckChunk):
        return "INIT_ACK tag=0x%08x a_rwnd=%d out=%d in=%d itsn=%d cookie=%dB" % (
            c.init_tag, c.a_rwnd, c.n_out_streams, c.n_in_streams,
            c.initial_tsn, len(c.cookie))
    if isinstance(c, SackChunk):
        gaps = ",".join("%d-%d" % g for g in c.gaps) or "-"
        dups = ",".join(str(d) for d in c.dups) or "-"
        return "SACK cum=%d a_rwnd=%d gaps=%s dups=%s" % (
            c.cum_tsn, c.a_rwnd, gaps, dups)
    if isinstance(c, HeartbeatChunk):
        return "HEARTBEAT nonce=0x%016x path=%d" % (c.nonce, c.path_id)
    if isinstance(c, HeartbeatAckChunk):
        return "HEARTBEAT_ACK nonce=0x%016x path=%d" % (c.nonce, c.path_id)
    if isinstance(c, ShutdownChunk):
        return "SHUTDOWN cum=%d" % c.cum_tsn
    if isinstance(c, CookieEchoChunk):
        return "COOKIE_ECHO cookie=%dB" % len(c.cookie)
    if isinstance(c, CookieAckChunk):
        return "COOKIE_ACK"
    if isinstance(c, ShutdownAckChunk):
        return "SHUTDOWN_ACK"
    if isinstance(c, ShutdownCompleteChunk):
        return "SHUTDOWN_COMPLETE"
    if isinstance(c, AbortChunk):
        return "ABORT"
    return repr(c)


def format_packet(pkt: Packet) -> str:
    lines = ["packet src=%d dst=%d vtag=0x%08x len=%d" % (
        pkt.src_port, pkt.dst_port, pkt.verification_tag, packet_wire_len(pkt))]
    for c in pkt.chunks:
        lines.append("  " + _fmt_chunk(c))
    return "\n".join(lines)
