"""Receiver-side oracles: TSN map traces, reassembly, ordered delivery,
window accounting, and SACK policy counts, all hand-checked."""

from sctplab.rxpath import (
    ReceiverState, SackPolicy, StreamInbox, deliver_ordered,
)
from sctplab.wire import DataChunk


def _rx(policy=None, gbn=False, itsn=1, streams=4, buf=1 << 20):
    return ReceiverState(peer_itsn=itsn, n_streams=streams, buffer_bytes=buf,
                         policy=policy, gbn=gbn)


def _msg(tsn, ssn, payload=b"m", stream=0, **kw):
    return DataChunk(tsn=tsn, stream=stream, ssn=ssn, payload=payload, **kw)


# ---------------------------------------------------------------------------
# TSN map and delivery order

def test_in_order_delivery():
    rx = _rx()
    seen = []
    for i in range(3):
        res = rx.on_data([_msg(i + 1, i, b"m%d" % i)])
        seen.extend(res.delivered)
    assert seen == [(0, b"m0"), (0, b"m1"), (0, b"m2")]
    assert rx.cum == 3 and not rx.ooo


def test_reorder_buffers_then_releases_in_order():
    rx = _rx()
    out = []
    r1 = rx.on_data([_msg(1, 0, b"a")])
    out.extend(r1.delivered)
    r3 = rx.on_data([_msg(3, 2, b"c")])
    out.extend(r3.delivered)
    # the packet that created the hole reports gap block (2,2) off cum=1
    assert r3.sacks and r3.sacks[0].cum_tsn == 1
    assert r3.sacks[0].gaps == ((2, 2),)
    r2 = rx.on_data([_msg(2, 1, b"b")])
    out.extend(r2.delivered)
    assert out == [(0, b"a"), (0, b"b"), (0, b"c")]
    assert rx.cum == 3 and not rx.ooo


def test_gbn_discards_out_of_order():
    rx = _rx(gbn=True)
    rx.on_data([_msg(1, 0, b"a")])
    res = rx.on_data([_msg(3, 2, b"c")])
    assert res.delivered == []
    assert rx.gbn_discards == 1
    assert not rx.ooo and not rx.frags     # really discarded, not buffered
    assert len(res.sacks) == 1
    assert res.sacks[0].cum_tsn == 1
    assert res.sacks[0].gaps == ()


def test_gbn_duplicate_forces_cum_only_sack():
    rx = _rx(gbn=True, policy=SackPolicy(mode="every_k", k=50))
    rx.on_data([_msg(1, 0)])
    res = rx.on_data([_msg(1, 0)])
    assert len(res.sacks) == 1
    assert res.sacks[0].cum_tsn == 1 and res.sacks[0].gaps == ()
    assert res.sacks[0].dups == (1,)


def test_duplicates_recorded_and_drained():
    rx = _rx()
    rx.on_data([_msg(4, 0)])            # ooo (cum=0)
    r = rx.on_data([_msg(4, 0)])        # dup of buffered tsn
    assert rx.dups_seen == 1
    assert r.sacks[0].dups == (4,)      # rides on the per-packet SACK
    r2 = rx.on_data([_msg(4, 0)])
    assert r2.sacks[0].dups == (4,)     # drained each time
    assert rx.build_sack().dups == ()


def test_dup_drain_without_intervening_sacks():
    rx = _rx(policy=SackPolicy(mode="every_k", k=100, immediate_on_gap=False))
    rx.on_data([_msg(1, 0)])
    rx.on_data([_msg(1, 0)])
    rx.on_data([_msg(1, 0)])
    sack = rx.build_sack()
    assert sack.dups == (1, 1)
    assert rx.build_sack().dups == ()


# ---------------------------------------------------------------------------
# SACK policy counts (packet = one on_data call)

def _run_in_order(rx, n, start=1):
    total = 0
    for i in range(n):
        res = rx.on_data([_msg(start + i, i)])
        total += len(res.sacks)
    return total


def test_every_packet_one_per_packet():
    assert _run_in_order(_rx(SackPolicy(mode="every_packet")), 14) == 14


def test_lk_double_two_per_packet():
    assert _run_in_order(_rx(SackPolicy(mode="lk_double")), 14) == 28


def test_every_7_two_sacks_for_14_packets():
    assert _run_in_order(_rx(SackPolicy(mode="every_k", k=7)), 14) == 2


def test_every_7_with_one_gap_gives_two_sacks():
    # seven packets arrive, the third is out of order (tsn 3 missing):
    # one immediate SACK at the gap, one at the 7-count
    rx = _rx(SackPolicy(mode="every_k", k=7))
    total = 0
    ssn = 0
    for tsn in (1, 2, 4, 5, 6, 7, 8):
        res = rx.on_data([_msg(tsn, ssn)])
        ssn += 1
        total += len(res.sacks)
    assert total == 2


def test_every_k_counter_not_reset_by_gap_sack():
    # after the gap SACK at packet 3, packets keep counting toward 7
    rx = _rx(SackPolicy(mode="every_k", k=7))
    counts = []
    for tsn in (1, 2, 4, 5, 6, 7, 8):
        counts.append(len(rx.on_data([_msg(tsn, 0)]).sacks))
    assert counts == [0, 0, 1, 0, 0, 0, 1]


def test_every_1_equals_every_packet():
    a = _rx(SackPolicy(mode="every_k", k=1))
    b = _rx(SackPolicy(mode="every_packet"))
    # mixed in-order and gappy traffic: counts must match packet for packet
    seq = (1, 2, 5, 3, 4, 6, 9, 7)
    for tsn in seq:
        na = len(a.on_data([_msg(tsn, 0)]).sacks)
        nb = len(b.on_data([_msg(tsn, 0)]).sacks)
        assert na == nb == 1


def test_every_k_count_bound_in_order():
    for k in (2, 3, 5, 7, 10):
        for n in (0, 1, k - 1, k, k + 1, 3 * k, 50):
            rx = _rx(SackPolicy(mode="every_k", k=k))
            got = _run_in_order(rx, n)
            assert n // k <= got <= n // k + 1, (k, n, got)


def test_hole_repair_triggers_immediate_sack():
    rx = _rx(SackPolicy(mode="every_k", k=50))
    assert len(rx.on_data([_msg(1, 0)]).sacks) == 0
    assert len(rx.on_data([_msg(3, 2)]).sacks) == 1     # new hole
    res = rx.on_data([_msg(2, 1)])                      # repairs it
    assert len(res.sacks) == 1
    assert res.sacks[0].cum_tsn == 3
    assert [d for _, d in res.delivered] == [b"m", b"m"]


def test_extending_a_run_is_not_a_new_gap():
    rx = _rx(SackPolicy(mode="every_k", k=50))
    rx.on_data([_msg(1, 0)])
    assert len(rx.on_data([_msg(3, 0)]).sacks) == 1     # opens hole at 2
    assert len(rx.on_data([_msg(4, 0)]).sacks) == 0     # extends the run
    assert len(rx.on_data([_msg(6, 0)]).sacks) == 1     # second hole at 5
    assert rx.gap_blocks() == ((2, 3), (5, 5))


def test_immediate_on_gap_can_be_disabled():
    rx = _rx(SackPolicy(mode="every_k", k=50, immediate_on_gap=False))
    rx.on_data([_msg(1, 0)])
    assert len(rx.on_data([_msg(3, 0)]).sacks) == 0


def test_delayed_mode_arms_timer_then_acks_second_packet():
    rx = _rx(SackPolicy(mode="delayed", delay_ms=200))
    res = rx.on_data([_msg(1, 0)])
    assert res.sacks == [] and res.arm_delayed
    # a second packet never waits for the timer
    res2 = rx.on_data([_msg(2, 1)])
    assert len(res2.sacks) == 1 and not res2.arm_delayed
    assert res2.sacks[0].cum_tsn == 2
    assert rx.on_delayed_timer() is None    # emission cleared the debt


def test_delayed_mode_timer_covers_a_straggler():
    rx = _rx(SackPolicy(mode="delayed", delay_ms=200))
    res = rx.on_data([_msg(1, 0)])
    assert res.sacks == [] and res.arm_delayed
    sack = rx.on_delayed_timer()
    assert sack is not None and sack.cum_tsn == 1
    assert rx.on_delayed_timer() is None    # nothing pending now


def test_delayed_mode_gap_is_immediate():
    rx = _rx(SackPolicy(mode="delayed"))
    rx.on_data([_msg(1, 0)])
    res = rx.on_data([_msg(3, 2)])
    assert len(res.sacks) == 1
    assert rx.on_delayed_timer() is None    # emission cleared the debt


def test_lk_double_second_sack_has_drained_dups():
    rx = _rx(SackPolicy(mode="lk_double"))
    rx.on_data([_msg(1, 0)])
    res = rx.on_data([_msg(1, 0)])          # duplicate
    assert len(res.sacks) == 2
    assert res.sacks[0].dups == (1,)
    assert res.sacks[1].dups == ()


# ---------------------------------------------------------------------------
# build_sack

def test_gap_blocks_from_spec_trace():
    rx = _rx(itsn=6)            # cum starts at 5
    for tsn in (7, 8, 10):
        rx.on_data([_msg(tsn, 0)])
    sack = rx.build_sack()
    assert sack.cum_tsn == 5
    assert sack.gaps == ((2, 3), (5, 5))


def test_no_gaps_when_in_order():
    rx = _rx()
    rx.on_data([_msg(1, 0)])
    assert rx.build_sack().gaps == ()


def test_a_rwnd_reflects_buffered_bytes():
    rx = _rx(buf=10_000)
    rx.on_data([_msg(2, 1, b"x" * 4000)])   # held out of order
    sack = rx.build_sack()
    assert sack.a_rwnd == 6000
    rx.on_data([_msg(1, 0, b"y" * 100)])    # repairs, delivers both
    assert rx.build_sack().a_rwnd == 10_000


def test_window_exhaustion_drops_without_ack_coverage():
    rx = _rx(buf=1000)
    rx.on_data([_msg(2, 1, b"x" * 600)])
    res = rx.on_data([_msg(3, 2, b"y" * 600)])
    assert rx.window_drops == 1
    assert 3 not in rx.ooo                  # no ack coverage at all
    assert rx.buffered == 600
    assert rx.build_sack().gaps == ((2, 2),)


# ---------------------------------------------------------------------------
# reassembly

def test_fragmented_message_reassembles_in_order():
    rx = _rx()
    parts = [b"aa", b"bb", b"cc"]
    chunks = [
        _msg(1, 0, parts[0], begin=True, end=False),
        _msg(2, 0, parts[1], begin=False, end=False),
        _msg(3, 0, parts[2], begin=False, end=True),
    ]
    out = []
    for c in chunks:
        out.extend(rx.on_data([c]).delivered)
    assert out == [(0, b"aabbcc")]
    assert rx.buffered == 0 and not rx.frags


def test_fragments_arriving_out_of_order():
    rx = _rx()
    c1 = _msg(1, 0, b"aa", begin=True, end=False)
    c2 = _msg(2, 0, b"bb", begin=False, end=False)
    c3 = _msg(3, 0, b"cc", begin=False, end=True)
    out = []
    for c in (c2, c1, c3):
        out.extend(rx.on_data([c]).delivered)
    assert out == [(0, b"aabbcc")]
    assert rx.messages_delivered == 1
    assert rx.bytes_delivered == 6


def test_unordered_fragmented_message():
    rx = _rx()
    out = []
    out.extend(rx.on_data([_msg(1, 0, b"xx", unordered=True,
                                begin=True, end=False)]).delivered)
    out.extend(rx.on_data([_msg(2, 0, b"yy", unordered=True,
                                begin=False, end=True)]).delivered)
    assert out == [(0, b"xxyy")]


# ---------------------------------------------------------------------------
# stream inbox

def test_ssn_gap_blocks_only_its_own_stream():
    rx = _rx()
    # stream 0 ssn 1 arrives first (its ssn 0 still missing, via a TSN hole)
    r = rx.on_data([_msg(2, 1, b"s0-second", stream=0)])
    assert r.delivered == []
    # stream 1 is untouched by stream 0's hole
    r = rx.on_data([_msg(3, 0, b"s1-first", stream=1)])
    assert r.delivered == [(1, b"s1-first")]
    # now the missing chunk lands and stream 0 drains in ssn order
    r = rx.on_data([_msg(1, 0, b"s0-first", stream=0)])
    assert r.delivered == [(0, b"s0-first"), (0, b"s0-second")]


def test_unordered_bypasses_open_ssn_gap():
    rx = _rx()
    rx.on_data([_msg(2, 1, b"blocked", stream=0)])
    r = rx.on_data([_msg(3, 0, b"express", stream=0, unordered=True)])
    assert r.delivered == [(0, b"express")]


def test_deliver_ordered_release_order():
    inbox = StreamInbox(2)
    assert deliver_ordered(inbox, 0, 1, b"b") == []
    assert deliver_ordered(inbox, 0, 0, b"a") == [(0, b"a"), (0, b"b")]
    assert inbox.next_ssn[0] == 2


def test_unknown_stream_dropped():
    rx = _rx(streams=2)
    res = rx.on_data([_msg(1, 0, stream=5)])
    assert res.delivered == []
    assert rx.stream_drops == 1
    assert rx.cum == 0      # no ack coverage either


# ---------------------------------------------------------------------------
# policy parsing

def test_policy_from_cli_strings():
    assert SackPolicy.from_string("per-packet").mode == "every_packet"
    assert SackPolicy.from_string("lk-double").mode == "lk_double"
    p = SackPolicy.from_string("per-k:9")
    assert p.mode == "every_k" and p.k == 9
    d = SackPolicy.from_string("delayed:50")
    assert d.mode == "delayed" and d.delay_ms == 50.0
    assert SackPolicy.from_string("every_k").k == 7
