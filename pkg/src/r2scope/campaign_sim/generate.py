"""Turn a CampaignSpec into rotated capture files plus ground truth.

Ground truth is read straight off the connection schedule; nothing here
decodes payloads or runs the detector.
"""

from __future__ import annotations

import json
import math
import random
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from datetime import date, datetime, timezone
from ipaddress import IPv4Address
from pathlib import Path
from typing import Iterator

from ..enrichment_store import GeoDataset, utc_date
from ..packet_model import SEQ_MOD, PacketRecord, Responder, TCPFlag, TelescopeConfig, rotate
from .payloads import payload_for
from .spec import CampaignSpec, ScannerSpec
from .writer import RawFrame, arp_frame, serialize_capture, udp_frame

DAY_US = 86_400 * 1_000_000


@dataclass(frozen=True)
class ConnectionLabel:
    vantage_id: str
    scanner: int
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    ts_us: int
    kind: str
    exploit: bool
    src_country: str
    src_asn: int
    backend: str | None = None
    backend_country: str | None = None

    @property
    def date(self) -> str:
        return utc_date(self.ts_us).isoformat()


@dataclass
class GroundTruth:
    labels: list[ConnectionLabel] = field(default_factory=list)

    def exploits(self, vantage_id: str | None = None) -> list[ConnectionLabel]:
        return [l for l in self.labels if l.exploit and (vantage_id is None or l.vantage_id == vantage_id)]

    def event_keys(self, vantage_id: str | None = None) -> Counter:
        return Counter(
            (l.vantage_id, l.src_ip, l.src_port, l.dst_ip, l.dst_port, l.ts_us) for l in self.exploits(vantage_id)
        )

    def daily_counts(self, vantage_id: str) -> dict[str, int]:
        return dict(sorted(Counter(l.date for l in self.exploits(vantage_id)).items()))

    def coverage(self, vantage_id: str) -> dict[str, int]:
        dsts: dict[str, set] = defaultdict(set)
        for l in self.exploits(vantage_id):
            dsts[l.src_ip].add(l.dst_ip)
        return {ip: len(s) for ip, s in sorted(dsts.items())}

    def growth(self, vantage_id: str | None = None) -> list[tuple[str, int, int]]:
        ips, asns = set(), set()
        by_date: dict[str, list[ConnectionLabel]] = defaultdict(list)
        for l in self.exploits(vantage_id):
            by_date[l.date].append(l)
        out = []
        for d in sorted(by_date):
            for l in by_date[d]:
                ips.add(l.src_ip)
                asns.add(l.src_asn)
            out.append((d, len(ips), len(asns)))
        return out

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(l), separators=(",", ":")) + "\n" for l in self.labels)

    @classmethod
    def from_jsonl(cls, text: str) -> "GroundTruth":
        return cls([ConnectionLabel(**json.loads(line)) for line in text.splitlines() if line.strip()])


@dataclass(frozen=True)
class CaptureFile:
    name: str  # relative path, e.g. VP1/2025-12-05/VP1-1764892800000000.pcap
    data: bytes


@dataclass
class SimulationResult:
    captures: dict[str, list[CaptureFile]]
    ground_truth: GroundTruth
    geo: GeoDataset

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        for files in self.captures.values():
            for cf in files:
                path = out / cf.name
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_bytes(cf.data)
        (out / "ground_truth.jsonl").write_text(self.ground_truth.to_jsonl(), encoding="utf-8")
        (out / "geo.csv").write_text(self.geo.to_csv_text(), encoding="utf-8")


@dataclass(frozen=True)
class _Conn:
    ts_us: int
    order: int
    scanner: ScannerSpec
    scanner_idx: int
    src_port: int
    dst_ip: IPv4Address
    dst_port: int
    pseed: int


def geo_of(spec: CampaignSpec) -> GeoDataset:
    return GeoDataset(
        (int(IPv4Address(a)), int(IPv4Address(b)), c, int(asn), name or None) for a, b, c, asn, name in spec.geo
    )


def _epoch_us(start_date: str) -> int:
    d = date.fromisoformat(start_date)
    return int(datetime(d.year, d.month, d.day, tzinfo=timezone.utc).timestamp()) * 1_000_000


def _in_outage(day: int, windows) -> bool:
    return any(a <= day <= b for a, b in windows)


def schedule(spec: CampaignSpec, vantage: TelescopeConfig) -> list[_Conn]:
    """Every connection a vantage will see, in time order."""
    vid = vantage.vantage_id
    pool = vantage.pool
    base = _epoch_us(spec.start_date) + round(spec.clock_skew_s.get(vid, 0.0) * 1_000_000)
    outages = spec.outages.get(vid, ())
    # one shared factor per day, so vantages differ in shape but not in who scans
    day_rng = random.Random(f"{spec.seed}:{vid}:daily")
    factors = [1.0 + spec.daily_jitter * (2 * day_rng.random() - 1) for _ in range(spec.duration_days)]
    conns: list[_Conn] = []
    for i, sc in enumerate(spec.scanners):
        if not sc.targets(vid):
            continue
        rng = random.Random(f"{spec.seed}:{vid}:{i}")
        subset = rng.sample(pool, math.ceil(sc.coverage * len(pool)))
        port_base = rng.randrange(64512)
        n = 0
        first, last = sc.active_window
        for day in range(max(first, 0), min(last, spec.duration_days - 1) + 1):
            count = sc.rate if spec.daily_jitter == 0 else max(1, round(sc.rate * factors[day]))
            for _ in range(count):
                offset = rng.randrange(DAY_US - 10_000_000)
                dport = rng.choice(sc.dst_ports)
                pseed = rng.getrandbits(32)
                dst = subset[n % len(subset)]
                sport = 1024 + (port_base + n) % 64512
                n += 1
                if _in_outage(day, outages):
                    continue
                conns.append(_Conn(base + day * DAY_US + offset, len(conns), sc, i, sport, dst, dport, pseed))
    conns.sort(key=lambda c: (c.ts_us, c.order))
    return conns


def _split(payload: bytes, nseg: int, rng: random.Random) -> list[tuple[int, bytes]]:
    nseg = max(1, min(nseg, len(payload)))
    cuts = sorted(rng.sample(range(1, len(payload)), nseg - 1)) if nseg > 1 else []
    bounds = [0, *cuts, len(payload)]
    return [(bounds[k], payload[bounds[k]:bounds[k + 1]]) for k in range(nseg)]


def connection_packets(conn: _Conn, vantage: TelescopeConfig, responder: Responder, spec: CampaignSpec) -> list[PacketRecord]:
    """Client packets for one connection, interleaved with responder replies."""
    rng = random.Random(conn.pseed)
    sc = conn.scanner
    payload = payload_for(sc.payload_kind, sc.backend, conn.pseed)
    src = IPv4Address(sc.src_ip)
    cisn = rng.getrandbits(32)
    rtt = rng.randrange(20_000, 200_000)
    segs = _split(payload, rng.randint(1, 3), rng)
    order = list(range(len(segs)))
    if len(order) > 1 and rng.random() < spec.reorder_prob:
        while order == sorted(order):
            rng.shuffle(order)
    resend = [k for k in range(len(segs)) if rng.random() < spec.retransmit_prob]

    def client(ts, flags, seq, ack, data=b""):
        return PacketRecord(ts, src, conn.dst_ip, conn.src_port, conn.dst_port, flags, seq % SEQ_MOD, ack % SEQ_MOD, data)

    out: list[PacketRecord] = []

    def send(pkt):
        out.append(pkt)
        out.extend(responder.handle(pkt))

    t = conn.ts_us
    send(client(t, TCPFlag.SYN, cisn, 0))
    isn = out[-1].seq if len(out) > 1 else 0
    t += rtt
    send(client(t, TCPFlag.ACK, cisn + 1, isn + 1))
    for k in order + resend:
        t += 150
        off, data = segs[k]
        send(client(t, TCPFlag.PSH | TCPFlag.ACK, cisn + 1 + off, isn + 1, data))
    t += 150
    send(client(t, TCPFlag.FIN | TCPFlag.ACK, cisn + 1 + len(payload), isn + 1))
    return out


def _noise(spec: CampaignSpec, vantage: TelescopeConfig) -> list[RawFrame]:
    if not spec.noise_frames_per_day:
        return []
    rng = random.Random(f"{spec.seed}:{vantage.vantage_id}:noise")
    base = _epoch_us(spec.start_date)
    pool = vantage.pool
    frames = []
    for day in range(spec.duration_days):
        for _ in range(spec.noise_frames_per_day):
            ts = base + day * DAY_US + rng.randrange(DAY_US)
            dst = rng.choice(pool)
            src = IPv4Address(rng.getrandbits(32) | 0x01000000)
            if rng.random() < 0.5:
                frames.append(RawFrame(ts, arp_frame(src, dst)))
            else:
                frames.append(RawFrame(ts, udp_frame(src, dst, rng.randrange(1024, 65536), 53, b"\x00" * 12)))
    return frames


def simulate_vantage(spec: CampaignSpec, vantage: TelescopeConfig, geo: GeoDataset) -> tuple[list[CaptureFile], list[ConnectionLabel]]:
    vid = vantage.vantage_id
    responder = Responder(vantage, seed=f"{spec.seed}:{vid}:responder")
    labelled = []
    timed: list[tuple[int, int, object]] = []
    for conn in schedule(spec, vantage):
        sc = conn.scanner
        for pkt in connection_packets(conn, vantage, responder, spec):
            timed.append((pkt.ts_us, len(timed), pkt))
        backend = None if sc.backend is None else f"{sc.backend[0]}:{sc.backend[1]}"
        labelled.append(ConnectionLabel(
            vantage_id=vid,
            scanner=conn.scanner_idx,
            src_ip=sc.src_ip,
            src_port=conn.src_port,
            dst_ip=str(conn.dst_ip),
            dst_port=conn.dst_port,
            ts_us=conn.ts_us,
            kind=sc.payload_kind,
            exploit=sc.is_exploit,
            src_country=sc.country,
            src_asn=sc.asn,
            backend=backend,
            backend_country=None if sc.backend is None else geo.lookup(sc.backend[0]).country,
        ))
    for fr in _noise(spec, vantage):
        timed.append((fr.ts_us, len(timed), fr))
    timed.sort(key=lambda t: (t[0], t[1]))
    frames = [t[2] for t in timed]

    files = []
    if frames:
        interval_us = round(vantage.rotation_interval_s * 1_000_000)
        origin = frames[0].ts_us
        for batch in rotate(frames, vantage):
            start = origin + ((batch[0].ts_us - origin) // interval_us) * interval_us
            day = utc_date(start).isoformat()
            files.append(CaptureFile(f"{vid}/{day}/{vid}-{start}.pcap", serialize_capture(batch)))
    return files, labelled


def iter_vantages(spec: CampaignSpec) -> Iterator[tuple[str, list[CaptureFile], list[ConnectionLabel]]]:
    spec.validate()
    geo = geo_of(spec)
    for vantage in spec.vantages:
        files, labels = simulate_vantage(spec, vantage, geo)
        yield vantage.vantage_id, files, labels


def generate(spec: CampaignSpec) -> SimulationResult:
    captures: dict[str, list[CaptureFile]] = {}
    truth = GroundTruth()
    for vid, files, labels in iter_vantages(spec):
        captures[vid] = files
        truth.labels.extend(labels)
    return SimulationResult(captures, truth, geo_of(spec))


def simulate_to_dir(spec: CampaignSpec, out_dir: str | Path) -> GroundTruth:
    """Write captures vantage by vantage, plus spec, telescope, geo and truth files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    truth = GroundTruth()
    for vid, files, labels in iter_vantages(spec):
        for cf in files:
            path = out / cf.name
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(cf.data)
        truth.labels.extend(labels)
    (out / "spec.json").write_text(spec.dumps(), encoding="utf-8")
    (out / "telescope.json").write_text(
        json.dumps([v.to_dict() for v in spec.vantages], indent=1) + "\n", encoding="utf-8"
    )
    (out / "geo.csv").write_text(geo_of(spec).to_csv_text(), encoding="utf-8")
    (out / "ground_truth.jsonl").write_text(truth.to_jsonl(), encoding="utf-8")
    return truth
