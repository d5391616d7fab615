"""Independent reference implementations used to check the package.

Each one is deliberately naive: a linear scan, a byte buffer, a set, a
textbook formula. None of them import the code under test.
"""

from __future__ import annotations

import math
import random
from ipaddress import IPv4Address

from r2scope.packet_model import PacketRecord, TCPFlag

SEQ_MOD = 1 << 32


def byte_offset_stream(pkts, isn: int) -> bytes:
    """First-writer-wins: write each payload byte at (seq - isn - 1) mod 2^32."""
    buf: dict[int, int] = {}
    for p in pkts:
        base = (p.seq - isn - 1) % SEQ_MOD
        for i, b in enumerate(p.payload):
            buf.setdefault(base + i, b)
    return bytes(buf[k] for k in sorted(buf))


def dedup_set(pkts):
    seen = set()
    out = []
    for p in pkts:
        t = ((p.src_ip, p.src_port), p.seq, p.ack, len(p.payload))
        if t not in seen:
            seen.add(t)
            out.append(p)
    return out


def epochs_by_gap(timestamps: list[int], gap_us: int) -> list[int]:
    """Group one tuple's sorted timestamps; a gap > gap_us opens a new epoch."""
    out, epoch, prev = [], 0, None
    for t in sorted(timestamps):
        if prev is not None and t - prev > gap_us:
            epoch += 1
        out.append(epoch)
        prev = t
    return out


def pearson_closed_form(xs, ys) -> float:
    n = len(xs)
    sx, sy = sum(xs), sum(ys)
    sxx = sum(x * x for x in xs)
    syy = sum(y * y for y in ys)
    sxy = sum(x * y for x, y in zip(xs, ys))
    return (n * sxy - sx * sy) / math.sqrt((n * sxx - sx * sx) * (n * syy - sy * sy))


def geo_linear(rows, ip: int):
    for start, end, country, asn, _ in rows:
        if start <= ip <= end:
            return country, asn
    return "ZZ", None


def random_connection(rng: random.Random, ts0: int = 1_700_000_000_000_000):
    """A client connection with 1-20 data segments, overlaps, duplicates and a
    full shuffle. Returns (packets, isn, with_syn)."""
    client, server = IPv4Address("198.51.100.7"), IPv4Address("192.0.2.9")
    sport, dport = rng.randrange(1024, 65536), 80
    isn = rng.choice([rng.getrandbits(32), SEQ_MOD - rng.randrange(1, 3000)])
    length = rng.randrange(1, 3000)
    stream = rng.randbytes(length)
    nseg = rng.randint(1, 20)
    cuts = sorted(rng.sample(range(1, length), min(nseg - 1, length - 1))) if length > 1 else []
    bounds = [0, *cuts, length]
    segs = [(bounds[k], stream[bounds[k]:bounds[k + 1]]) for k in range(len(bounds) - 1)]
    # overlapping segments, some carrying conflicting bytes
    for _ in range(rng.randint(0, 3)):
        a = rng.randrange(length)
        b = min(length, a + rng.randint(1, 300))
        data = stream[a:b] if rng.random() < 0.5 else rng.randbytes(b - a)
        segs.append((a, data))
    pkts = []
    for off, data in segs:
        pkts.append((off, data))
    dup_rate = rng.uniform(0.0, 0.3)
    pkts += [pk for pk in pkts if rng.random() < dup_rate]
    rng.shuffle(pkts)
    out = [
        PacketRecord(ts0 + i, client, server, sport, dport, TCPFlag.ACK | TCPFlag.PSH, (isn + 1 + off) % SEQ_MOD, 1, data)
        for i, (off, data) in enumerate(pkts)
    ]
    with_syn = rng.random() < 0.5
    if with_syn:
        out.insert(rng.randrange(len(out) + 1), PacketRecord(ts0 - 1, client, server, sport, dport, TCPFlag.SYN, isn, 0))
    return out, isn, with_syn
