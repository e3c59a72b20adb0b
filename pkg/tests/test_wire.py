"""Codec oracles: hand-written byte layouts, an independent CRC-32c
implementation, serial arithmetic cases, and decode error taxonomy."""

import random
from pathlib import Path

import pytest

from sctplab import wire
from sctplab.wire import (
    AbortChunk, ChecksumMismatchError, CookieAckChunk, CookieEchoChunk,
    DataChunk, HeartbeatAckChunk, HeartbeatChunk, InitAckChunk, InitChunk,
    MalformedHeaderError, OversizePacketError, Packet, SackChunk,
    ShutdownAckChunk, ShutdownChunk, ShutdownCompleteChunk,
    TruncatedChunkError, UnknownChunkTypeError, WireError,
    crc32c, decode_packet, encode_packet, format_packet, fragment_payload,
    packet_wire_len, tsn_add, tsn_cmp, tsn_lt, ssn_lt,
)

GOLDEN = Path(__file__).parent / "golden"


# ---------------------------------------------------------------------------
# CRC-32c: independent bit-at-a-time oracle plus the two frozen check values

def crc32c_bitwise(data: bytes) -> int:
    crc = 0xFFFFFFFF
    for b in data:
        crc ^= b
        for _ in range(8):
            crc = (crc >> 1) ^ 0x82F63B78 if crc & 1 else crc >> 1
    return crc ^ 0xFFFFFFFF


def test_crc32c_check_values():
    assert crc32c(b"") == 0x00000000
    assert crc32c(b"123456789") == 0xE3069283
    assert crc32c_bitwise(b"123456789") == 0xE3069283


def test_crc32c_matches_bitwise_oracle():
    rng = random.Random(2024)
    for _ in range(64):
        blob = bytes(rng.getrandbits(8) for _ in range(rng.randrange(0, 300)))
        assert crc32c(blob) == crc32c_bitwise(blob)


def test_crc32c_is_pure():
    blob = b"\x00\x01\x02hello"
    assert crc32c(blob) == crc32c(blob)


# ---------------------------------------------------------------------------
# hand-derived byte layouts

def test_empty_packet_is_just_the_common_header():
    pkt = Packet(5000, 6000, 0x11223344, [])
    raw = encode_packet(pkt)
    assert raw == b"\x13\x88\x17\x70\x11\x22\x33\x44\x00\x00\x00\x00"
    assert len(raw) == 12


def test_data_chunk_layout_one_byte_payload():
    # length field covers header+payload (17); chunk occupies 20 on the wire.
    pkt = Packet(5000, 6000, 0x11223344,
                 [DataChunk(tsn=100, stream=3, ssn=7, payload=b"A")])
    raw = encode_packet(pkt)
    expect = (b"\x13\x88\x17\x70\x11\x22\x33\x44\x00\x00\x00\x00"
              b"\x00\x03\x00\x11"           # type 0, flags B|E, length 17
              b"\x00\x00\x00\x64"           # tsn 100
              b"\x00\x03"                   # stream 3
              b"\x00\x07"                   # ssn 7
              b"\x00\x00\x00\x00"           # payload-protocol filler
              b"A\x00\x00\x00")             # payload + 3 pad
    assert raw == expect
    assert len(raw) == 32


def test_cookie_ack_packet_is_16_bytes():
    raw = encode_packet(Packet(1, 2, 9, [CookieAckChunk()]))
    assert len(raw) == 16
    assert raw[12:] == b"\x0b\x00\x00\x04"


def test_sack_layout_with_gaps_and_dups():
    sack = SackChunk(cum_tsn=99, a_rwnd=131072, gaps=((2, 3), (5, 5)),
                     dups=(101,))
    raw = encode_packet(Packet(1, 2, 3, [sack]))
    body = raw[12:]
    expect = (b"\x03\x00\x00\x1c"            # type 3, length 28
              b"\x00\x00\x00\x63"            # cum 99
              b"\x00\x02\x00\x00"            # a_rwnd 131072
              b"\x00\x02\x00\x01"            # 2 gaps, 1 dup
              b"\x00\x02\x00\x03"            # gap 2-3
              b"\x00\x05\x00\x05"            # gap 5-5
              b"\x00\x00\x00\x65")           # dup tsn 101
    assert body == expect


def test_init_layout():
    init = InitChunk(init_tag=0xAABBCCDD, a_rwnd=131072, n_out_streams=10,
                     n_in_streams=10, initial_tsn=1000)
    raw = encode_packet(Packet(1, 2, 0, [init]))
    assert raw[12:] == (b"\x01\x00\x00\x14"
                        b"\xaa\xbb\xcc\xdd"
                        b"\x00\x02\x00\x00"
                        b"\x00\x0a\x00\x0a"
                        b"\x00\x00\x03\xe8")


def test_heartbeat_padded_to_16():
    hb = HeartbeatChunk(nonce=0xDEADBEEF01020304, path_id=1)
    raw = encode_packet(Packet(1, 2, 3, [hb]))
    assert len(raw) == 12 + 16
    assert raw[12:16] == b"\x04\x00\x00\x0e"      # length 14, padded to 16


def test_fragment_payload_at_default_mtu():
    assert fragment_payload(1500) == 1452


# ---------------------------------------------------------------------------
# round trips

def _sample_packets(seed=7, n=200):
    rng = random.Random(seed)
    pkts = []
    for _ in range(n):
        chunks = []
        for _ in range(rng.randrange(1, 5)):
            kind = rng.randrange(0, 12)
            if kind <= 4:     # bias toward DATA: the common case
                chunks.append(DataChunk(
                    tsn=rng.getrandbits(32), stream=rng.randrange(0, 64),
                    ssn=rng.getrandbits(16),
                    payload=bytes(rng.getrandbits(8)
                                  for _ in range(rng.randrange(0, 1453))),
                    unordered=rng.random() < 0.2,
                    begin=rng.random() < 0.8, end=rng.random() < 0.8))
            elif kind == 5:
                chunks.append(InitChunk(rng.getrandbits(32), rng.getrandbits(32),
                                        rng.randrange(1, 100), rng.randrange(1, 100),
                                        rng.getrandbits(32)))
            elif kind == 6:
                chunks.append(InitAckChunk(rng.getrandbits(32), rng.getrandbits(32),
                                           rng.randrange(1, 100), rng.randrange(1, 100),
                                           rng.getrandbits(32),
                                           bytes(rng.getrandbits(8)
                                                 for _ in range(rng.randrange(0, 80)))))
            elif kind == 7:
                ngaps = rng.randrange(0, 6)
                gaps, lo = [], 1
                for _ in range(ngaps):
                    start = lo + rng.randrange(0, 5)
                    end = start + rng.randrange(0, 5)
                    gaps.append((start, end))
                    lo = end + 2
                chunks.append(SackChunk(rng.getrandbits(32), rng.getrandbits(32),
                                        tuple(gaps),
                                        tuple(rng.getrandbits(32)
                                              for _ in range(rng.randrange(0, 4)))))
            elif kind == 8:
                chunks.append(HeartbeatChunk(rng.getrandbits(64), rng.randrange(0, 8)))
            elif kind == 9:
                chunks.append(HeartbeatAckChunk(rng.getrandbits(64), rng.randrange(0, 8)))
            elif kind == 10:
                chunks.append(CookieEchoChunk(bytes(rng.getrandbits(8)
                                                    for _ in range(rng.randrange(0, 90)))))
            else:
                chunks.append(rng.choice([
                    CookieAckChunk(), ShutdownChunk(rng.getrandbits(32)),
                    ShutdownAckChunk(), ShutdownCompleteChunk(), AbortChunk()]))
        pkts.append(Packet(rng.getrandbits(16), rng.getrandbits(16),
                           rng.getrandbits(32), chunks))
    return pkts


@pytest.mark.parametrize("with_checksum", [False, True])
def test_round_trip_corpus(with_checksum):
    for pkt in _sample_packets():
        raw = encode_packet(pkt, with_checksum=with_checksum)
        back = decode_packet(raw, verify_checksum=with_checksum)
        assert back == pkt
        assert len(raw) == packet_wire_len(pkt)


def test_checksum_field_zero_when_disabled():
    pkt = Packet(1, 2, 3, [CookieAckChunk()])
    raw = encode_packet(pkt, with_checksum=False)
    assert raw[8:12] == b"\x00\x00\x00\x00"
    # decode without verification ignores whatever is in the field
    tampered = raw[:8] + b"\xde\xad\xbe\xef" + raw[12:]
    assert decode_packet(tampered) == pkt


def test_checksum_detects_single_bit_flip():
    pkt = Packet(1, 2, 3, [DataChunk(10, 0, 0, b"payload bytes")])
    raw = bytearray(encode_packet(pkt, with_checksum=True))
    assert decode_packet(bytes(raw), verify_checksum=True) == pkt
    raw[20] ^= 0x01
    with pytest.raises(ChecksumMismatchError):
        decode_packet(bytes(raw), verify_checksum=True)


# ---------------------------------------------------------------------------
# decode error taxonomy

def test_short_packet_is_malformed_header():
    with pytest.raises(MalformedHeaderError):
        decode_packet(b"\x00" * 11)


def test_chunk_length_beyond_end_is_truncated():
    raw = bytearray(encode_packet(Packet(1, 2, 3, [CookieAckChunk()])))
    raw[14:16] = b"\x00\x40"    # claim 64-byte chunk in a 16-byte packet
    with pytest.raises(TruncatedChunkError) as ei:
        decode_packet(bytes(raw))
    assert ei.value.offset == 12


def test_chunk_length_below_header_is_truncated():
    raw = bytearray(encode_packet(Packet(1, 2, 3, [CookieAckChunk()])))
    raw[14:16] = b"\x00\x02"
    with pytest.raises(TruncatedChunkError):
        decode_packet(bytes(raw))


def test_unknown_chunk_type_reports_offset():
    raw = bytearray(encode_packet(Packet(1, 2, 3, [CookieAckChunk(),
                                                   CookieAckChunk()])))
    raw[16] = 99
    with pytest.raises(UnknownChunkTypeError) as ei:
        decode_packet(bytes(raw))
    assert ei.value.offset == 16


def test_truncated_chunk_header():
    raw = encode_packet(Packet(1, 2, 3, [])) + b"\x00\x03"
    with pytest.raises(TruncatedChunkError):
        decode_packet(raw)


def test_sack_block_count_overruns_body():
    sack = SackChunk(5, 1000, ((2, 3),), ())
    raw = bytearray(encode_packet(Packet(1, 2, 3, [sack])))
    raw[24:26] = b"\x00\x09"    # claim 9 gap blocks
    with pytest.raises(TruncatedChunkError):
        decode_packet(bytes(raw))


def test_oversize_packet_rejected_on_encode():
    chunks = [DataChunk(i, 0, 0, b"x" * 1452) for i in range(3)]
    with pytest.raises(OversizePacketError):
        encode_packet(Packet(1, 2, 3, chunks), size_limit=1480)


def test_bad_gap_block_rejected_on_encode():
    with pytest.raises(WireError):
        encode_packet(Packet(1, 2, 3, [SackChunk(1, 1, ((0, 2),), ())]))
    with pytest.raises(WireError):
        encode_packet(Packet(1, 2, 3, [SackChunk(1, 1, ((5, 2),), ())]))


# ---------------------------------------------------------------------------
# serial arithmetic

def test_tsn_ordering_basic():
    assert tsn_cmp(1, 2) == -1
    assert tsn_cmp(2, 1) == 1
    assert tsn_cmp(7, 7) == 0


def test_tsn_ordering_wraps():
    assert tsn_cmp(0xFFFFFFFF, 0) == -1
    assert tsn_lt(0xFFFFFFF0, 5)
    assert not tsn_lt(5, 0xFFFFFFF0)
    assert tsn_add(0xFFFFFFFF) == 0


def test_tsn_antisymmetry_spot_checks():
    rng = random.Random(11)
    for _ in range(500):
        a, b = rng.getrandbits(32), rng.getrandbits(32)
        if a == b:
            continue
        d = (b - a) & 0xFFFFFFFF
        if d == 0x80000000:
            continue    # ordering deliberately undefined at the midpoint
        assert tsn_lt(a, b) != tsn_lt(b, a)


def test_ssn_ordering_wraps():
    assert ssn_lt(0xFFFF, 0)
    assert ssn_lt(0xFFF0, 5)
    assert not ssn_lt(5, 0xFFF0)


# ---------------------------------------------------------------------------
# pretty printer golden file

def test_format_packet_golden():
    pkts = [
        Packet(5000, 6000, 0x11223344, [
            DataChunk(100, 3, 7, b"A"),
            SackChunk(99, 131072, ((2, 3), (5, 5)), (101,)),
        ]),
        Packet(1, 2, 0, [
            InitChunk(0xAABBCCDD, 131072, 10, 10, 1000),
        ]),
        Packet(7, 8, 0xFF, [
            HeartbeatChunk(0xDEADBEEF01020304, 1),
            CookieAckChunk(),
            ShutdownChunk(42),
            ShutdownCompleteChunk(),
        ]),
    ]
    rendered = "\n\n".join(format_packet(p) for p in pkts) + "\n"
    expect = (GOLDEN / "packet_dump.txt").read_text()
    assert rendered == expect
