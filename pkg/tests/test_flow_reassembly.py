import random
from ipaddress import IPv4Address

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import byte_offset_stream, dedup_set, epochs_by_gap, random_connection
from r2scope.flow_reassembly import (
    ConnectionKey,
    assemble,
    dedup,
    group_connections,
    key_of,
    reassemble,
    reassemble_all,
    sequence_origin,
)
from r2scope.packet_model import PacketRecord, TCPFlag

A, B = IPv4Address("198.51.100.1"), IPv4Address("192.0.2.80")


def seg(seq, data=b"", ts=1_000_000, flags=TCPFlag.ACK | TCPFlag.PSH, src=A, dst=B, sport=1234, dport=80, ack=1):
    return PacketRecord(ts, src, dst, sport, dport, flags, seq % (1 << 32), ack, data)


# -- keys ------------------------------------------------------------------------------


def test_both_directions_share_a_key():
    seen = {}
    k1 = key_of(seg(1, src=A, dst=B, sport=1234, dport=80), 60, seen)
    k2 = key_of(seg(1, ts=1_500_000, src=B, dst=A, sport=80, dport=1234), 60, seen)
    assert k1 == k2
    assert k1.endpoint_lo < k1.endpoint_hi


def test_gap_opens_new_epoch():
    seen = {}
    k1 = key_of(seg(1, flags=TCPFlag.SYN, ts=1_000_000), 60, seen)
    k2 = key_of(seg(1, flags=TCPFlag.SYN, ts=1_000_000 + 600_000_000), 60, seen)
    assert (k1.epoch, k2.epoch) == (0, 1)


def test_key_text_round_trip():
    k = ConnectionKey((B, 80), (A, 1234), 3)
    assert str(k) == "192.0.2.80:80-198.51.100.1:1234#3"
    assert ConnectionKey.parse(str(k)) == k
    with pytest.raises(ValueError):
        ConnectionKey((A, 1234), (B, 80))


def test_epochs_match_brute_force_on_interleaved_reuses():
    rng = random.Random(5)
    gap_us = 60_000_000
    for _ in range(50):
        tuples = [(IPv4Address(f"198.51.100.{i}"), 1000 + i) for i in range(3)]
        pkts = []
        for ip, port in tuples:
            t = 1_000_000
            for _ in range(rng.randint(1, 4)):  # reuses
                for _ in range(rng.randint(1, 5)):
                    t += rng.randrange(0, 20_000_000)
                    pkts.append(seg(1, ts=t, src=ip, sport=port))
                t += rng.randrange(gap_us + 1, 10 * gap_us)
        pkts.sort(key=lambda p: p.ts_us)
        seen = {}
        got = {}
        for p in pkts:
            got.setdefault(p.src_port, []).append(key_of(p, 60, seen).epoch)
        for ip, port in tuples:
            ts = [p.ts_us for p in pkts if p.src_port == port]
            assert got[port] == epochs_by_gap(ts, gap_us)


# -- dedup ------------------------------------------------------------------------------


def test_exact_retransmission_dropped():
    a = seg(10, b"abc")
    conn = reassemble([a, seg(10, b"abc", ts=2_000_000)])
    assert conn.dedup_dropped == 1
    assert conn.client_stream == b"abc"


def test_same_seq_different_length_kept():
    assert len(dedup([seg(10, b"abc"), seg(10, b"abcd")])) == 2


def test_hundred_packets_thirty_duplicates():
    rng = random.Random(9)
    base = [seg(i * 10, rng.randbytes(10), ts=1_000_000 + i) for i in range(70)]
    pkts = list(base)
    for _ in range(30):
        d = rng.choice(base)
        pkts.insert(rng.randrange(len(pkts) + 1), seg(d.seq, d.payload, ts=5_000_000))
    kept = dedup(pkts)
    assert len(kept) == 70
    assert kept == dedup_set(pkts)
    assert dedup(kept) == kept


# -- assembly ------------------------------------------------------------------------------


def test_reversed_segments_reordered():
    syn = seg(0, flags=TCPFlag.SYN)
    conn = assemble([seg(5, b"/ HT"), seg(1, b"GET "), syn])
    assert conn.client_stream == b"GET / HT"
    assert conn.has_syn


def test_single_segment_identity():
    conn = assemble([seg(77, b"payload")])
    assert conn.client_stream == b"payload"
    assert conn.server_stream == b""
    assert not conn.has_syn


def test_no_payload_connection_is_flagged_empty():
    conn = assemble([seg(0, flags=TCPFlag.SYN), seg(1, flags=TCPFlag.ACK)])
    assert conn.empty


def test_wraparound_without_syn():
    isn = (1 << 32) - 3
    pkts = [seg(isn + 1 + 4, b"5678"), seg(isn + 1, b"1234")]
    assert assemble(pkts).client_stream == b"12345678"
    assert sequence_origin([p.seq for p in pkts]) == (isn + 1) % (1 << 32)


def test_twenty_segments_three_overlaps_match_oracle():
    rng = random.Random(2024)
    for _ in range(200):
        pkts, isn, _ = random_connection(rng)
        kept = dedup(pkts)
        data = [p for p in kept if p.payload]
        assert assemble(kept).client_stream == byte_offset_stream(data, isn)


def test_server_direction_and_conservation():
    syn = seg(99, flags=TCPFlag.SYN, ts=1)
    reply = seg(499, flags=TCPFlag.SYN | TCPFlag.ACK, ts=2, src=B, dst=A, sport=80, dport=1234)
    c1 = seg(100, b"hello", ts=3)
    s1 = seg(500, b"world!", ts=4, src=B, dst=A, sport=80, dport=1234)
    conn = assemble([s1, c1, reply, syn])
    assert conn.client == (A, 1234) and conn.server == (B, 80)
    assert (conn.client_stream, conn.server_stream) == (b"hello", b"world!")
    assert len(conn.client_stream) + len(conn.server_stream) == 11
    assert (conn.first_ts_us, conn.last_ts_us, conn.packet_count) == (1, 4, 4)


def test_overlap_trimmed_accounts_for_every_byte():
    rng = random.Random(31)
    for _ in range(200):
        pkts, _, _ = random_connection(rng)
        kept = dedup(pkts)
        conn = assemble(kept)
        payload = sum(len(p.payload) for p in kept)
        assert len(conn.client_stream) + len(conn.server_stream) + conn.overlap_trimmed == payload


def test_reassemble_all_splits_epochs():
    early = [seg(0, flags=TCPFlag.SYN, ts=1_000_000), seg(1, b"one", ts=1_000_100)]
    late = [seg(0, flags=TCPFlag.SYN, ts=900_000_000), seg(1, b"two", ts=900_000_100)]
    conns = reassemble_all(early + late, 60)
    assert [c.client_stream for c in conns] == [b"one", b"two"]
    assert [c.key.epoch for c in conns] == [0, 1]
    assert len(group_connections(early + late, 60)) == 2


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.lists(st.binary(min_size=1, max_size=30), min_size=1, max_size=12), st.randoms(use_true_random=False))
def test_permutation_invariance_without_conflicts(isn, chunks, rnd):
    pkts, off = [], 0
    for c in chunks:
        pkts.append(seg(isn + 1 + off, c))
        off += len(c)
    shuffled = list(pkts)
    rnd.shuffle(shuffled)
    assert assemble(shuffled).client_stream == assemble(pkts).client_stream == b"".join(chunks)
