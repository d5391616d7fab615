"""Classic capture-file writer (Ethernet / IPv4 / TCP), plus a couple of
non-TCP frame builders used as background noise."""

from __future__ import annotations

import struct
import sys
from array import array
from dataclasses import dataclass
from ipaddress import IPv4Address
from typing import Iterable, Union

from ..packet_model import LINKTYPE_ETHERNET, PCAP_MAGIC_US, PacketRecord

SNAPLEN = 65535
CLIENT_MAC = bytes.fromhex("020000000001")
TELESCOPE_MAC = bytes.fromhex("020000000002")

_GLOBAL = struct.Struct("<IHHiIII")
_RECORD = struct.Struct("<IIII")
_IP_HDR = struct.Struct("!BBHHHBBH4s4s")
_TCP_HDR = struct.Struct("!HHIIHHHH")


@dataclass(frozen=True)
class RawFrame:
    """An already-built link-layer frame with its capture timestamp."""

    ts_us: int
    data: bytes


Frame = Union[PacketRecord, RawFrame]


def _csum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    s = sum(array("H", data))
    while s >> 16:
        s = (s & 0xFFFF) + (s >> 16)
    value = ~s & 0xFFFF
    # one's-complement sums are byte-order agnostic; convert back to wire order
    if sys.byteorder == "little":
        value = ((value & 0xFF) << 8) | (value >> 8)
    return value


def tcp_frame(rec: PacketRecord, ip_id: int = 0) -> bytes:
    src, dst = rec.src_ip.packed, rec.dst_ip.packed
    total = 20 + 20 + len(rec.payload)
    ip_hdr = _IP_HDR.pack(0x45, 0, total, ip_id & 0xFFFF, 0x4000, 64, 6, 0, src, dst)
    ip_hdr = ip_hdr[:10] + _csum(ip_hdr).to_bytes(2, "big") + ip_hdr[12:]
    tcp_hdr = _TCP_HDR.pack(rec.src_port, rec.dst_port, rec.seq, rec.ack, (5 << 12) | int(rec.flags), 64240, 0, 0)
    pseudo = src + dst + struct.pack("!BBH", 0, 6, 20 + len(rec.payload))
    ck = _csum(pseudo + tcp_hdr + rec.payload)
    tcp_hdr = tcp_hdr[:16] + ck.to_bytes(2, "big") + tcp_hdr[18:]
    return TELESCOPE_MAC + CLIENT_MAC + b"\x08\x00" + ip_hdr + tcp_hdr + rec.payload


def arp_frame(sender: IPv4Address, target: IPv4Address) -> bytes:
    body = struct.pack("!HHBBH", 1, 0x0800, 6, 4, 1) + CLIENT_MAC + sender.packed + bytes(6) + target.packed
    return b"\xff" * 6 + CLIENT_MAC + b"\x08\x06" + body


def udp_frame(src: IPv4Address, dst: IPv4Address, sport: int, dport: int, payload: bytes = b"") -> bytes:
    udp = struct.pack("!HHHH", sport, dport, 8 + len(payload), 0) + payload
    ip_hdr = _IP_HDR.pack(0x45, 0, 20 + len(udp), 0, 0, 64, 17, 0, src.packed, dst.packed)
    ip_hdr = ip_hdr[:10] + _csum(ip_hdr).to_bytes(2, "big") + ip_hdr[12:]
    return TELESCOPE_MAC + CLIENT_MAC + b"\x08\x00" + ip_hdr + udp


def serialize_capture(frames: Iterable[Frame], snaplen: int = SNAPLEN) -> bytes:
    """Write frames (in the given order) as a microsecond-resolution capture."""
    out = [_GLOBAL.pack(PCAP_MAGIC_US, 2, 4, 0, 0, snaplen, LINKTYPE_ETHERNET)]
    for i, fr in enumerate(frames):
        data = fr.data if isinstance(fr, RawFrame) else tcp_frame(fr, ip_id=i)
        sec, usec = divmod(fr.ts_us, 1_000_000)
        incl = min(len(data), snaplen)
        out.append(_RECORD.pack(sec, usec, incl, len(data)))
        out.append(data[:incl])
    return b"".join(out)
