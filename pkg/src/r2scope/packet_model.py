"""Packet records, classic capture-file parsing and the telescope responder.

The responder is what turns a passive darknet into an active one: it
completes the TCP handshake for any SYN aimed at a monitored address so that
the scanner goes on to send its first flight of application data.
"""

from __future__ import annotations

import enum
import ipaddress
import logging
import random
import struct
from dataclasses import dataclass, field, replace
from ipaddress import IPv4Address, IPv4Network
from typing import Iterable, Iterator, Sequence

from .errors import MalformedHeader, OutOfOrderInput, TruncatedRecord

logger = logging.getLogger(__name__)

PCAP_MAGIC_US = 0xA1B2C3D4
PCAP_MAGIC_NS = 0xA1B23C4D
LINKTYPE_ETHERNET = 1
GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16

ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_VLAN = 0x8100
IPPROTO_TCP = 6

DEFAULT_BYTE_CAP = 14_600  # ten 1460-byte segments
DEFAULT_ROTATION_S = 5.0
SEQ_MOD = 1 << 32


class TCPFlag(enum.IntFlag):
    FIN = 0x01
    SYN = 0x02
    RST = 0x04
    PSH = 0x08
    ACK = 0x10

    @classmethod
    def from_header(cls, value: int) -> "TCPFlag":
        return cls(value & 0x1F)


@dataclass(frozen=True, slots=True)
class PacketRecord:
    ts_us: int
    src_ip: IPv4Address
    dst_ip: IPv4Address
    src_port: int
    dst_port: int
    flags: TCPFlag
    seq: int
    ack: int
    payload: bytes = b""
    capture_id: str = ""

    def __post_init__(self):
        if self.ts_us <= 0:
            raise ValueError(f"ts_us must be positive, got {self.ts_us}")
        if not (0 <= self.src_port <= 0xFFFF and 0 <= self.dst_port <= 0xFFFF):
            raise ValueError("port out of range")
        if not (0 <= self.seq < SEQ_MOD and 0 <= self.ack < SEQ_MOD):
            raise ValueError("seq/ack must be unsigned 32-bit")

    @property
    def four_tuple(self) -> tuple[IPv4Address, int, IPv4Address, int]:
        return (self.src_ip, self.src_port, self.dst_ip, self.dst_port)

    def has(self, flag: TCPFlag) -> bool:
        return bool(self.flags & flag)


@dataclass
class ParsedCapture:
    """Result of parsing one capture file.

    ``skipped`` counts frames that were not TCP over IPv4; ``malformed``
    counts frames that claimed to be TCP/IPv4 but whose headers could not be
    decoded. ``truncated`` is set when a record header or body ran past the
    end of the file and parsing stopped early.
    """

    capture_id: str
    packets: list[PacketRecord] = field(default_factory=list)
    skipped: int = 0
    malformed: int = 0
    truncated: bool = False
    nanosecond: bool = False

    def __len__(self) -> int:
        return len(self.packets)

    def __iter__(self) -> Iterator[PacketRecord]:
        return iter(self.packets)


def _read_global_header(data: bytes) -> tuple[str, bool]:
    if len(data) < GLOBAL_HEADER_LEN:
        raise MalformedHeader(f"global header needs {GLOBAL_HEADER_LEN} bytes, got {len(data)}")
    for endian in ("<", ">"):
        (magic,) = struct.unpack_from(endian + "I", data, 0)
        if magic in (PCAP_MAGIC_US, PCAP_MAGIC_NS):
            break
    else:
        raise MalformedHeader(f"bad magic 0x{data[:4].hex()}")
    _, _, _, _, _, linktype = struct.unpack_from(endian + "HHiIII", data, 4)
    if linktype != LINKTYPE_ETHERNET:
        raise MalformedHeader(f"unsupported link type {linktype}")
    return endian, magic == PCAP_MAGIC_NS


def _decode_frame(frame: bytes, ts_us: int, capture_id: str) -> PacketRecord | None | bool:
    """Return a PacketRecord, None for non-TCP/IPv4 frames, False if malformed."""
    if len(frame) < 14:
        return None
    ethertype = int.from_bytes(frame[12:14], "big")
    offset = 14
    if ethertype == ETHERTYPE_VLAN:
        if len(frame) < 18:
            return None
        ethertype = int.from_bytes(frame[16:18], "big")
        offset = 18
    if ethertype != ETHERTYPE_IPV4:
        return None
    ip = frame[offset:]
    if len(ip) < 20 or ip[0] >> 4 != 4:
        return None
    if ip[9] != IPPROTO_TCP:
        return None
    ihl = (ip[0] & 0x0F) * 4
    total_len = int.from_bytes(ip[2:4], "big")
    frag = int.from_bytes(ip[6:8], "big") & 0x1FFF
    if frag:
        # non-first fragment: no TCP header to read
        return None
    if ihl < 20 or total_len < ihl or len(ip) < ihl + 20:
        return False
    end = min(total_len, len(ip))
    tcp = ip[ihl:end]
    if len(tcp) < 20:
        return False
    sport, dport, seq, ack, off_flags = struct.unpack_from("!HHIIH", tcp, 0)
    doff = (off_flags >> 12) * 4
    if doff < 20 or doff > len(tcp):
        return False
    return PacketRecord(
        ts_us=ts_us,
        src_ip=IPv4Address(ip[12:16]),
        dst_ip=IPv4Address(ip[16:20]),
        src_port=sport,
        dst_port=dport,
        flags=TCPFlag.from_header(off_flags),
        seq=seq,
        ack=ack,
        payload=bytes(tcp[doff:]),
        capture_id=capture_id,
    )


def parse_capture_file(data: bytes, capture_id: str = "", *, strict: bool = False) -> ParsedCapture:
    """Parse a classic (non-ng) capture file with Ethernet framing.

    Records are returned in file order. A truncated trailing record stops
    parsing; with ``strict=True`` it raises :class:`TruncatedRecord` instead.
    """
    endian, nano = _read_global_header(data)
    result = ParsedCapture(capture_id=capture_id, nanosecond=nano)
    rec_fmt = endian + "IIII"
    pos = GLOBAL_HEADER_LEN
    n = len(data)
    while pos < n:
        if n - pos < RECORD_HEADER_LEN:
            result.truncated = True
            break
        ts_sec, ts_frac, incl_len, _orig_len = struct.unpack_from(rec_fmt, data, pos)
        pos += RECORD_HEADER_LEN
        if incl_len > n - pos:
            result.truncated = True
            break
        frame = data[pos:pos + incl_len]
        pos += incl_len
        ts_us = ts_sec * 1_000_000 + (ts_frac // 1000 if nano else ts_frac)
        try:
            rec = _decode_frame(frame, ts_us, capture_id)
        except ValueError:
            rec = False
        if rec is None:
            result.skipped += 1
        elif rec is False:
            result.malformed += 1
        else:
            result.packets.append(rec)
    if result.truncated:
        if strict:
            raise TruncatedRecord(f"{capture_id}: record at offset {pos} runs past end of file")
        logger.warning("%s: truncated record, kept %d packets", capture_id, len(result.packets))
    return result


# -- telescope configuration -------------------------------------------------


@dataclass(frozen=True)
class TelescopeConfig:
    """One vantage point: which addresses it answers for and how it records.

    ``addresses`` optionally pins the exact monitored IP list; otherwise every
    host address of ``monitored_prefixes`` is part of the pool.
    """

    monitored_prefixes: tuple[IPv4Network, ...]
    vantage_id: str = "VP1"
    rotation_interval_s: float = DEFAULT_ROTATION_S
    byte_cap: int = DEFAULT_BYTE_CAP
    addresses: tuple[IPv4Address, ...] | None = None

    def __post_init__(self):
        prefixes = tuple(ipaddress.ip_network(p) for p in self.monitored_prefixes)
        object.__setattr__(self, "monitored_prefixes", prefixes)
        if self.addresses is not None:
            object.__setattr__(self, "addresses", tuple(IPv4Address(a) for a in self.addresses))
        if not self.rotation_interval_s > 0:
            raise ValueError("rotation_interval_s must be positive")
        if self.byte_cap < 0:
            raise ValueError("byte_cap must be non-negative")
        for i, a in enumerate(prefixes):
            for b in prefixes[i + 1:]:
                if a.overlaps(b):
                    raise ValueError(f"monitored prefixes overlap: {a} and {b}")
        if self.addresses is not None:
            for addr in self.addresses:
                if not any(addr in p for p in prefixes):
                    raise ValueError(f"{addr} is outside the monitored prefixes")

    @property
    def pool(self) -> tuple[IPv4Address, ...]:
        if self.addresses is not None:
            return self.addresses
        return tuple(h for p in self.monitored_prefixes for h in p.hosts())

    def monitors(self, addr: IPv4Address) -> bool:
        if self.addresses is not None:
            return addr in self._address_set
        return any(addr in p for p in self.monitored_prefixes)

    @property
    def _address_set(self) -> frozenset[IPv4Address]:
        cached = self.__dict__.get("_addr_cache")
        if cached is None:
            cached = frozenset(self.addresses or ())
            object.__setattr__(self, "_addr_cache", cached)
        return cached

    def to_dict(self) -> dict:
        return {
            "vantage_id": self.vantage_id,
            "monitored_prefixes": [str(p) for p in self.monitored_prefixes],
            "rotation_interval_s": self.rotation_interval_s,
            "byte_cap": self.byte_cap,
            "addresses": None if self.addresses is None else [str(a) for a in self.addresses],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TelescopeConfig":
        return cls(
            monitored_prefixes=tuple(d["monitored_prefixes"]),
            vantage_id=d.get("vantage_id", "VP1"),
            rotation_interval_s=d.get("rotation_interval_s", DEFAULT_ROTATION_S),
            byte_cap=d.get("byte_cap", DEFAULT_BYTE_CAP),
            addresses=None if d.get("addresses") is None else tuple(d["addresses"]),
        )


# -- responder state machine -------------------------------------------------


class ConnState(enum.Enum):
    LISTEN = "LISTEN"
    SYN_RCVD = "SYN_RCVD"
    ESTABLISHED = "ESTABLISHED"
    CLOSED = "CLOSED"


@dataclass(frozen=True)
class ResponderState:
    """Per client 4-tuple state. ``received`` holds merged byte ranges,
    relative to the client's first data byte."""

    state: ConnState = ConnState.LISTEN
    isn: int = 0
    bytes_accepted: int = 0
    byte_cap: int = DEFAULT_BYTE_CAP
    client_isn: int | None = None
    received: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.bytes_accepted > self.byte_cap:
            raise ValueError("bytes_accepted exceeds byte_cap")

    @property
    def rcv_next(self) -> int:
        """Cumulative ACK number for the client direction."""
        contiguous = 0
        if self.received and self.received[0][0] == 0:
            contiguous = self.received[0][1]
        return ((self.client_isn or 0) + 1 + contiguous) % SEQ_MOD


def _merge_range(ranges: tuple[tuple[int, int], ...], start: int, end: int) -> tuple[tuple[int, int], ...]:
    out: list[tuple[int, int]] = []
    for a, b in sorted(ranges + ((start, end),)):
        if out and a <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return tuple(out)


def _covered(ranges: Iterable[tuple[int, int]]) -> int:
    return sum(b - a for a, b in ranges)


RESPONSE_DELAY_US = 40


def _reply(pkt: PacketRecord, flags: TCPFlag, seq: int, ack: int) -> PacketRecord:
    return PacketRecord(
        ts_us=pkt.ts_us + RESPONSE_DELAY_US,
        src_ip=pkt.dst_ip,
        dst_ip=pkt.src_ip,
        src_port=pkt.dst_port,
        dst_port=pkt.src_port,
        flags=flags,
        seq=seq % SEQ_MOD,
        ack=ack % SEQ_MOD,
        capture_id=pkt.capture_id,
    )


def respond(state: ResponderState, pkt: PacketRecord, config: TelescopeConfig) -> tuple[ResponderState, list[PacketRecord]]:
    """Advance one client 4-tuple by one inbound packet.

    Packets that do not fit the current state are ignored and produce no
    response, like a silent telescope would.
    """
    if not config.monitors(pkt.dst_ip) or state.state is ConnState.CLOSED:
        return state, []

    if pkt.has(TCPFlag.RST) or (pkt.has(TCPFlag.FIN) and state.state is not ConnState.LISTEN):
        return replace(state, state=ConnState.CLOSED), []

    if state.state is ConnState.LISTEN:
        if pkt.has(TCPFlag.SYN) and not pkt.has(TCPFlag.ACK):
            new = replace(state, state=ConnState.SYN_RCVD, client_isn=pkt.seq, byte_cap=config.byte_cap)
            return new, [_reply(pkt, TCPFlag.SYN | TCPFlag.ACK, state.isn, pkt.seq + 1)]
        return state, []

    if state.state is ConnState.SYN_RCVD:
        if not pkt.has(TCPFlag.ACK) or pkt.has(TCPFlag.SYN) or pkt.ack != (state.isn + 1) % SEQ_MOD:
            return state, []
        state = replace(state, state=ConnState.ESTABLISHED)
        if not pkt.payload:
            return state, []

    if not pkt.payload:
        return state, []

    assert state.client_isn is not None
    start = (pkt.seq - state.client_isn - 1) % SEQ_MOD
    if start >= 1 << 31:
        # segment lies before the client's first data byte
        return state, []
    merged = _merge_range(state.received, start, start + len(pkt.payload))
    new_bytes = _covered(merged) - _covered(state.received)
    if state.bytes_accepted + new_bytes > state.byte_cap:
        closed = replace(state, state=ConnState.CLOSED)
        return closed, [_reply(pkt, TCPFlag.RST | TCPFlag.ACK, state.isn + 1, state.rcv_next)]
    state = replace(state, received=merged, bytes_accepted=state.bytes_accepted + new_bytes)
    return state, [_reply(pkt, TCPFlag.ACK, state.isn + 1, state.rcv_next)]


class Responder:
    """Holds responder state for every client 4-tuple seen at one vantage.

    ISNs come from a seeded generator so simulated runs are reproducible.
    """

    def __init__(self, config: TelescopeConfig, seed: int | str = 0):
        self.config = config
        self._rng = random.Random(seed)
        self._states: dict[tuple, ResponderState] = {}
        self.synacks_sent = 0

    def state_of(self, pkt: PacketRecord) -> ResponderState:
        return self._states.get(pkt.four_tuple, ResponderState(byte_cap=self.config.byte_cap))

    def handle(self, pkt: PacketRecord) -> list[PacketRecord]:
        key = pkt.four_tuple
        state = self._states.get(key)
        if state is None or state.state is ConnState.CLOSED:
            if not (pkt.has(TCPFlag.SYN) and not pkt.has(TCPFlag.ACK)):
                return []
            state = ResponderState(isn=self._rng.getrandbits(32), byte_cap=self.config.byte_cap)
        new, out = respond(state, pkt, self.config)
        self._states[key] = new
        self.synacks_sent += sum(1 for p in out if p.has(TCPFlag.SYN))
        return out


# -- capture rotation --------------------------------------------------------


def rotate(records: Iterable[PacketRecord], config: TelescopeConfig, reorder_tolerance_us: int = 0) -> Iterator[list[PacketRecord]]:
    """Split a time-ordered packet stream into fixed-interval capture batches.

    Boundaries sit at whole multiples of the rotation interval counted from
    the first timestamp. A packet that regresses by no more than the
    tolerance stays in the current batch.
    """
    interval_us = round(config.rotation_interval_s * 1_000_000)
    origin = None
    current_idx = None
    batch: list[PacketRecord] = []
    high = None
    for rec in records:
        if origin is None:
            origin = rec.ts_us
            high = rec.ts_us
        if rec.ts_us < high - reorder_tolerance_us:
            raise OutOfOrderInput(f"timestamp {rec.ts_us} regresses behind {high}")
        high = max(high, rec.ts_us)
        idx = (rec.ts_us - origin) // interval_us
        if current_idx is None:
            current_idx = idx
        if idx > current_idx:
            yield batch
            batch = []
            current_idx = idx
        batch.append(rec)
    if batch:
        yield batch


def batch_start_us(batch: Sequence[PacketRecord], origin_us: int, config: TelescopeConfig) -> int:
    interval_us = round(config.rotation_interval_s * 1_000_000)
    return origin_us + ((batch[0].ts_us - origin_us) // interval_us) * interval_us
