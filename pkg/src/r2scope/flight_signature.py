"""React2Shell exploit signature and backend endpoint extraction.

A payload counts as an exploitation attempt only when all three indicators
appear together:

1. ``__proto__`` (prototype traversal), literal and case-sensitive;
2. a ``constructor`` -> ``constructor`` chain, joined by ``:`` or ``.``
   with optional quotes and whitespace around the separator;
3. a Flight reference token: ``$``, one or more digits, ``:``.
"""

from __future__ import annotations

import hashlib
import ipaddress
import re
from dataclasses import dataclass, field
from ipaddress import IPv4Address
from typing import NamedTuple

from .flow_reassembly import ConnectionKey, ReassembledConnection
from .payload_decode import DecodedPayload, normalize

PROTO_RE = re.compile(r"__proto__")
CTOR_CHAIN_RE = re.compile(r"""constructor["'\s]*[:.]["'\s]*constructor""")
FLIGHT_REF_RE = re.compile(r"\$\d+:")

INDICATORS = {
    "proto": PROTO_RE,
    "ctor_chain": CTOR_CHAIN_RE,
    "flight_ref": FLIGHT_REF_RE,
}

_URL_RE = re.compile(r"""https?://([A-Za-z0-9.\-]+)(?::(\d{1,5}))?""", re.IGNORECASE)
_QUAD_RE = re.compile(r"(?<![\d.])(\d{1,3})\.(\d{1,3})\.(\d{1,3})\.(\d{1,3})(?![\d])(?!\.\d)")


class Endpoint(NamedTuple):
    ip: IPv4Address
    port: int | None = None

    def __str__(self) -> str:
        return str(self.ip) if self.port is None else f"{self.ip}:{self.port}"


@dataclass(frozen=True)
class SignatureMatch:
    has_proto: bool
    has_ctor_chain: bool
    has_flight_ref: bool
    matched_spans: tuple[tuple[int, int], ...] = ()

    @property
    def is_exploit(self) -> bool:
        return self.has_proto and self.has_ctor_chain and self.has_flight_ref

    def indicators(self) -> list[str]:
        names = []
        if self.has_proto:
            names.append("proto")
        if self.has_ctor_chain:
            names.append("ctor_chain")
        if self.has_flight_ref:
            names.append("flight_ref")
        return names


def match_signature(text: str) -> SignatureMatch:
    spans: list[tuple[int, int]] = []
    found = {}
    for name, rx in INDICATORS.items():
        hits = [(m.start(), m.end() - m.start()) for m in rx.finditer(text)]
        found[name] = bool(hits)
        spans.extend(hits)
    return SignatureMatch(
        has_proto=found["proto"],
        has_ctor_chain=found["ctor_chain"],
        has_flight_ref=found["flight_ref"],
        matched_spans=tuple(sorted(spans)),
    )


def _quad(groups) -> IPv4Address | None:
    octets = [int(g) for g in groups]
    if any(o > 255 for o in octets):
        return None
    return IPv4Address(".".join(map(str, octets)))


def scan_backends(text: str) -> tuple[list[Endpoint], int]:
    """Return (IP endpoints in first-occurrence order, number of domain URLs).

    URL hosts that are dotted quads become endpoints with their port; other
    URL hosts only bump the domain count. Bare dotted quads outside URLs are
    returned without a port. Endpoints are de-duplicated by address.
    """
    hits: list[tuple[int, Endpoint]] = []
    domains = 0
    masked = list(text)
    for m in _URL_RE.finditer(text):
        host, port = m.group(1), m.group(2)
        qm = re.fullmatch(r"(\d{1,3})\.(\d{1,3})\.(\d{1,3})\.(\d{1,3})", host)
        ip = _quad(qm.groups()) if qm else None
        for i in range(m.start(), m.end()):
            masked[i] = " "
        if ip is not None:
            p = int(port) if port is not None and int(port) <= 0xFFFF else None
            hits.append((m.start(), Endpoint(ip, p)))
        elif not qm:
            domains += 1
    rest = "".join(masked)
    for m in _QUAD_RE.finditer(rest):
        ip = _quad(m.groups())
        if ip is not None:
            hits.append((m.start(), Endpoint(ip, None)))
    hits.sort(key=lambda h: h[0])
    seen: set[IPv4Address] = set()
    out: list[Endpoint] = []
    for _, ep in hits:
        if ep.ip not in seen:
            seen.add(ep.ip)
            out.append(ep)
    return out, domains


def extract_backends(text: str) -> list[Endpoint]:
    return scan_backends(text)[0]


def is_public(ip: IPv4Address) -> bool:
    return ip.is_global and not ip.is_multicast


@dataclass(frozen=True)
class ExploitEvent:
    key: ConnectionKey
    ts_us: int
    src_ip: IPv4Address
    src_port: int
    dst_ip: IPv4Address
    dst_port: int
    vantage_id: str
    match: SignatureMatch
    backend_endpoints: tuple[Endpoint, ...] = ()
    domain_count: int = 0
    payload_digest: str = ""
    decode_steps: tuple[str, ...] = field(default_factory=tuple)


def payload_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8", "surrogatepass")).hexdigest()


def classify_connection(
    conn: ReassembledConnection,
    decoded: DecodedPayload,
    vantage_id: str = "",
    *,
    allow_private: bool = False,
) -> ExploitEvent | None:
    """Turn one decoded client stream into an event if it matches."""
    if not conn.client_stream or not decoded.accepted:
        return None
    text = normalize(decoded.text)
    match = match_signature(text)
    if not match.is_exploit:
        return None
    endpoints, domains = scan_backends(text)
    if not allow_private:
        endpoints = [ep for ep in endpoints if is_public(ep.ip)]
    (src_ip, src_port), (dst_ip, dst_port) = conn.client, conn.server
    return ExploitEvent(
        key=conn.key,
        ts_us=conn.first_ts_us,
        src_ip=src_ip,
        src_port=src_port,
        dst_ip=dst_ip,
        dst_port=dst_port,
        vantage_id=vantage_id,
        match=match,
        backend_endpoints=tuple(endpoints),
        domain_count=domains,
        payload_digest=payload_digest(text),
        decode_steps=decoded.steps,
    )


def parse_endpoint(text: str) -> Endpoint:
    ip, _, port = text.partition(":")
    return Endpoint(ipaddress.IPv4Address(ip), int(port) if port else None)
