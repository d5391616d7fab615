"""Connection keying, retransmission removal and byte-stream reassembly.

Only IP/TCP header fields and raw payload bytes are consulted here; nothing
in this module looks inside a payload.
"""

from __future__ import annotations

import bisect
from collections import defaultdict
from dataclasses import dataclass
from ipaddress import IPv4Address
from typing import Callable, Iterable

from .packet_model import SEQ_MOD, PacketRecord, TCPFlag

DEFAULT_SESSION_GAP_S = 60.0

Endpoint = tuple[IPv4Address, int]


@dataclass(frozen=True, order=True)
class ConnectionKey:
    endpoint_lo: Endpoint
    endpoint_hi: Endpoint
    epoch: int = 0

    def __post_init__(self):
        if not self.endpoint_lo < self.endpoint_hi:
            raise ValueError("endpoint_lo must sort before endpoint_hi")
        if self.epoch < 0:
            raise ValueError("epoch must be non-negative")

    def __str__(self) -> str:
        (a, ap), (b, bp) = self.endpoint_lo, self.endpoint_hi
        return f"{a}:{ap}-{b}:{bp}#{self.epoch}"

    @classmethod
    def parse(cls, text: str) -> "ConnectionKey":
        pair, epoch = text.rsplit("#", 1)
        lo, hi = pair.split("-")
        ends = []
        for ep in (lo, hi):
            ip, port = ep.rsplit(":", 1)
            ends.append((IPv4Address(ip), int(port)))
        return cls(ends[0], ends[1], int(epoch))


def canonical_pair(pkt: PacketRecord) -> tuple[Endpoint, Endpoint]:
    a = (pkt.src_ip, pkt.src_port)
    b = (pkt.dst_ip, pkt.dst_port)
    return (a, b) if a < b else (b, a)


def key_of(pkt: PacketRecord, session_gap_s: float, last_seen: dict) -> ConnectionKey:
    """Key a packet, updating ``last_seen`` (pair -> (last ts, epoch)) in place.

    The gap is measured from the previous packet on the same 4-tuple.
    """
    pair = canonical_pair(pkt)
    gap_us = round(session_gap_s * 1_000_000)
    prev = last_seen.get(pair)
    if prev is None:
        epoch = 0
    else:
        last_ts, epoch = prev
        if pkt.ts_us - last_ts > gap_us:
            epoch += 1
    last_seen[pair] = (max(pkt.ts_us, prev[0]) if prev else pkt.ts_us, epoch)
    return ConnectionKey(pair[0], pair[1], epoch)


def group_connections(packets: Iterable[PacketRecord], session_gap_s: float = DEFAULT_SESSION_GAP_S) -> dict[ConnectionKey, list[PacketRecord]]:
    last_seen: dict = {}
    groups: dict[ConnectionKey, list[PacketRecord]] = defaultdict(list)
    for pkt in packets:
        groups[key_of(pkt, session_gap_s, last_seen)].append(pkt)
    return dict(groups)


def _direction(pkt: PacketRecord) -> Endpoint:
    return (pkt.src_ip, pkt.src_port)


def dedup(pkts: Iterable[PacketRecord]) -> list[PacketRecord]:
    """Drop packets repeating an earlier (direction, seq, ack, payload length)."""
    seen: set = set()
    kept = []
    for pkt in pkts:
        triple = (_direction(pkt), pkt.seq, pkt.ack, len(pkt.payload))
        if triple in seen:
            continue
        seen.add(triple)
        kept.append(pkt)
    return kept


@dataclass
class ReassembledConnection:
    key: ConnectionKey
    client: Endpoint
    server: Endpoint
    client_stream: bytes
    server_stream: bytes
    first_ts_us: int
    last_ts_us: int
    packet_count: int
    dedup_dropped: int = 0
    overlap_trimmed: int = 0
    has_syn: bool = False

    @property
    def empty(self) -> bool:
        """True when no packet carried payload in either direction."""
        return not self.client_stream and not self.server_stream


def sequence_origin(seqs: Iterable[int]) -> int:
    """Pick the sequence number every other one is a forward distance from.

    The origin follows the widest circular gap between observed values, so
    the choice does not depend on arrival order and survives 32-bit wrap.
    """
    vals = sorted(set(seqs))
    if len(vals) == 1:
        return vals[0]
    best_gap, origin = -1, vals[0]
    for i, v in enumerate(vals):
        nxt = vals[(i + 1) % len(vals)]
        gap = (nxt - v) % SEQ_MOD
        if gap > best_gap:
            best_gap, origin = gap, nxt
    return origin


def _stitch(segments: list[tuple[int, bytes]], origin: int) -> tuple[bytes, int]:
    """First-arrival-wins placement of (seq, payload) segments.

    Returns the stream and the number of overlapped bytes discarded.
    """
    starts: list[int] = []  # disjoint covered intervals, sorted
    ends: list[int] = []
    pieces: list[tuple[int, bytes]] = []
    trimmed = 0
    for seq, data in segments:
        lo = (seq - origin) % SEQ_MOD
        hi = lo + len(data)
        cur = lo
        i = bisect.bisect_right(ends, lo)
        while cur < hi:
            if i < len(starts) and starts[i] <= cur:
                trimmed += min(ends[i], hi) - cur
                cur = ends[i]
                i += 1
                continue
            stop = min(hi, starts[i]) if i < len(starts) else hi
            pieces.append((cur, data[cur - lo:stop - lo]))
            starts.insert(i, cur)
            ends.insert(i, stop)
            cur = stop
            i += 1
        # merge touching intervals to keep the lists short
        j = 0
        while j + 1 < len(starts):
            if ends[j] >= starts[j + 1]:
                ends[j] = max(ends[j], ends[j + 1])
                del starts[j + 1], ends[j + 1]
            else:
                j += 1
    pieces.sort(key=lambda p: p[0])
    return b"".join(p[1] for p in pieces), trimmed


def _client_endpoint(pkts: list[PacketRecord], is_client: Callable[[PacketRecord], bool] | None) -> Endpoint:
    for pkt in pkts:
        if pkt.has(TCPFlag.SYN) and not pkt.has(TCPFlag.ACK):
            return _direction(pkt)
    if is_client is not None:
        for pkt in pkts:
            if is_client(pkt):
                return _direction(pkt)
    first = min(pkts, key=lambda p: (p.ts_us, _direction(p)))
    return _direction(first)


def assemble(
    pkts: list[PacketRecord],
    key: ConnectionKey | None = None,
    *,
    dedup_dropped: int = 0,
    is_client: Callable[[PacketRecord], bool] | None = None,
) -> ReassembledConnection:
    """Rebuild both byte streams of one already-deduplicated connection.

    ``is_client`` lets the caller identify the client side when the capture
    missed the SYN (e.g. a packet aimed at a monitored address).
    """
    if not pkts:
        raise ValueError("assemble needs at least one packet")
    if key is None:
        lo, hi = canonical_pair(pkts[0])
        key = ConnectionKey(lo, hi, 0)
    client = _client_endpoint(pkts, is_client)
    server = key.endpoint_hi if client == key.endpoint_lo else key.endpoint_lo

    streams = {}
    trimmed_total = 0
    for side in (client, server):
        segs = [(p.seq, p.payload) for p in pkts if _direction(p) == side and p.payload]
        syns = [p.seq for p in pkts if _direction(p) == side and p.has(TCPFlag.SYN)]
        if not segs:
            streams[side] = b""
            continue
        origin = (syns[0] + 1) % SEQ_MOD if syns else sequence_origin(s for s, _ in segs)
        streams[side], trimmed = _stitch(segs, origin)
        trimmed_total += trimmed

    return ReassembledConnection(
        key=key,
        client=client,
        server=server,
        client_stream=streams[client],
        server_stream=streams[server],
        first_ts_us=min(p.ts_us for p in pkts),
        last_ts_us=max(p.ts_us for p in pkts),
        packet_count=len(pkts),
        dedup_dropped=dedup_dropped,
        overlap_trimmed=trimmed_total,
        has_syn=any(p.has(TCPFlag.SYN) for p in pkts),
    )


def reassemble(
    pkts: list[PacketRecord],
    key: ConnectionKey | None = None,
    is_client: Callable[[PacketRecord], bool] | None = None,
) -> ReassembledConnection:
    kept = dedup(pkts)
    return assemble(kept, key, dedup_dropped=len(pkts) - len(kept), is_client=is_client)


def reassemble_all(
    packets: Iterable[PacketRecord],
    session_gap_s: float = DEFAULT_SESSION_GAP_S,
    is_client: Callable[[PacketRecord], bool] | None = None,
) -> list[ReassembledConnection]:
    groups = group_connections(packets, session_gap_s)
    return [reassemble(pkts, key, is_client) for key, pkts in sorted(groups.items())]
