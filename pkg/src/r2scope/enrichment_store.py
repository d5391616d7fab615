"""Offline geo/ASN enrichment and the daily-partitioned event store.

Geo dataset: CSV rows ``start_ip,end_ip,country,asn,as_name`` (inclusive
ranges, no overlaps; an optional header row starting with ``start_ip`` is
skipped).

Event store: one file per UTC date, ``events-YYYY-MM-DD.jsonl``, one JSON
object per line with keys in ``EVENT_FIELDS`` order.
"""

from __future__ import annotations

import bisect
import csv
import io
import json
import os
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from ipaddress import IPv4Address
from pathlib import Path
from typing import Iterable, Iterator

from .errors import MalformedRow, OverlappingRanges, StorageUnavailable
from .flight_signature import ExploitEvent

UNKNOWN_COUNTRY = "ZZ"

EVENT_FIELDS = (
    "vantage_id",
    "partition_date",
    "ts_us",
    "key",
    "src_ip",
    "src_port",
    "dst_ip",
    "dst_port",
    "src_country",
    "src_asn",
    "src_as_name",
    "indicators",
    "decode_steps",
    "payload_digest",
    "domain_count",
    "backends",
)


@dataclass(frozen=True)
class GeoAsnRecord:
    ip: IPv4Address
    country: str = UNKNOWN_COUNTRY
    asn: int | None = None
    as_name: str | None = None
    city: str | None = None

    def __post_init__(self):
        if len(self.country) != 2 or not self.country.isalpha() or not self.country.isupper():
            raise ValueError(f"country must be two uppercase letters, got {self.country!r}")
        if self.asn is not None and self.asn <= 0:
            raise ValueError("asn must be positive")


class GeoDataset:
    """Sorted, non-overlapping IPv4 ranges answering point lookups by bisection."""

    def __init__(self, rows: Iterable[tuple[int, int, str, int | None, str | None]] = ()):
        rows = sorted(rows)
        for prev, cur in zip(rows, rows[1:]):
            if cur[0] <= prev[1]:
                raise OverlappingRanges(
                    f"{IPv4Address(prev[0])}-{IPv4Address(prev[1])} overlaps "
                    f"{IPv4Address(cur[0])}-{IPv4Address(cur[1])}"
                )
        self._starts = [r[0] for r in rows]
        self._rows = rows

    def __len__(self) -> int:
        return len(self._rows)

    def lookup(self, ip: IPv4Address | str) -> GeoAsnRecord:
        addr = IPv4Address(ip)
        n = int(addr)
        i = bisect.bisect_right(self._starts, n) - 1
        if i >= 0:
            start, end, country, asn, as_name = self._rows[i]
            if start <= n <= end:
                return GeoAsnRecord(addr, country, asn, as_name)
        return GeoAsnRecord(addr)

    @classmethod
    def from_csv_text(cls, text: str) -> "GeoDataset":
        rows = []
        for lineno, rec in enumerate(csv.reader(io.StringIO(text)), start=1):
            if not rec or (lineno == 1 and rec[0].strip() == "start_ip"):
                continue
            if len(rec) < 4:
                raise MalformedRow(lineno, f"expected 5 columns, got {len(rec)}")
            try:
                start = int(IPv4Address(rec[0].strip()))
                end = int(IPv4Address(rec[1].strip()))
            except ValueError as exc:
                raise MalformedRow(lineno, str(exc)) from None
            if end < start:
                raise MalformedRow(lineno, "end_ip precedes start_ip")
            country = rec[2].strip().upper()
            if len(country) != 2 or not country.isalpha():
                raise MalformedRow(lineno, f"bad country code {rec[2]!r}")
            asn_txt = rec[3].strip()
            try:
                asn = int(asn_txt.upper().removeprefix("AS")) if asn_txt else None
            except ValueError:
                raise MalformedRow(lineno, f"bad asn {asn_txt!r}") from None
            if asn is not None and asn <= 0:
                raise MalformedRow(lineno, "asn must be positive")
            as_name = rec[4].strip() if len(rec) > 4 and rec[4].strip() else None
            rows.append((start, end, country, asn, as_name))
        return cls(rows)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["start_ip", "end_ip", "country", "asn", "as_name"])
        for start, end, country, asn, as_name in self._rows:
            w.writerow([IPv4Address(start), IPv4Address(end), country, "" if asn is None else asn, as_name or ""])
        return buf.getvalue()


def load_geo_dataset(path: str | os.PathLike) -> GeoDataset:
    return GeoDataset.from_csv_text(Path(path).read_text(encoding="utf-8"))


# -- event rows ---------------------------------------------------------------


def utc_date(ts_us: int) -> date:
    return datetime.fromtimestamp(ts_us / 1_000_000, tz=timezone.utc).date()


@dataclass(frozen=True)
class BackendInfo:
    ip: str
    port: int | None
    country: str
    asn: int | None


@dataclass(frozen=True)
class EventRow:
    vantage_id: str
    partition_date: str
    ts_us: int
    key: str
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    src_country: str
    src_asn: int | None
    src_as_name: str | None
    indicators: tuple[str, ...]
    decode_steps: tuple[str, ...]
    payload_digest: str
    domain_count: int
    backends: tuple[BackendInfo, ...] = field(default_factory=tuple)

    @property
    def uid(self) -> tuple[str, int, str]:
        return (self.key, self.ts_us, self.payload_digest)

    def to_json(self) -> str:
        d = {name: getattr(self, name) for name in EVENT_FIELDS}
        d["indicators"] = list(self.indicators)
        d["decode_steps"] = list(self.decode_steps)
        d["backends"] = [
            {"ip": b.ip, "port": b.port, "country": b.country, "asn": b.asn} for b in self.backends
        ]
        return json.dumps(d, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "EventRow":
        d = json.loads(line)
        d["indicators"] = tuple(d["indicators"])
        d["decode_steps"] = tuple(d["decode_steps"])
        d["backends"] = tuple(BackendInfo(**b) for b in d["backends"])
        return cls(**d)


def enrich(event: ExploitEvent, geo: GeoDataset) -> EventRow:
    src = geo.lookup(event.src_ip)
    backends = []
    for ep in event.backend_endpoints:
        g = geo.lookup(ep.ip)
        backends.append(BackendInfo(str(ep.ip), ep.port, g.country, g.asn))
    return EventRow(
        vantage_id=event.vantage_id,
        partition_date=utc_date(event.ts_us).isoformat(),
        ts_us=event.ts_us,
        key=str(event.key),
        src_ip=str(event.src_ip),
        src_port=event.src_port,
        dst_ip=str(event.dst_ip),
        dst_port=event.dst_port,
        src_country=src.country,
        src_asn=src.asn,
        src_as_name=src.as_name,
        indicators=tuple(event.match.indicators()),
        decode_steps=tuple(event.decode_steps),
        payload_digest=event.payload_digest,
        domain_count=event.domain_count,
        backends=tuple(backends),
    )


# -- store ----------------------------------------------------------------------


@dataclass(frozen=True)
class WriteReceipt:
    written: int
    skipped: int
    partitions: tuple[str, ...] = ()


class EventStore:
    """Append-only JSONL partitions under ``root``, one file per UTC date."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self._uids: dict[str, set] = {}

    def partition_path(self, day: str) -> Path:
        return self.root / f"events-{day}.jsonl"

    def partitions(self) -> list[Path]:
        if not self.root.is_dir():
            return []
        return sorted(self.root.glob("events-*.jsonl"))

    def _known(self, day: str) -> set:
        if day not in self._uids:
            path = self.partition_path(day)
            uids = set()
            if path.exists():
                with path.open(encoding="utf-8") as fh:
                    for line in fh:
                        if line.strip():
                            uids.add(EventRow.from_json(line).uid)
            self._uids[day] = uids
        return self._uids[day]

    def append(self, rows: Iterable[EventRow]) -> WriteReceipt:
        by_day: dict[str, list[EventRow]] = {}
        for row in rows:
            by_day.setdefault(row.partition_date, []).append(row)
        written = skipped = 0
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            for day in sorted(by_day):
                known = self._known(day)
                lines = []
                for row in by_day[day]:
                    if row.uid in known:
                        skipped += 1
                        continue
                    known.add(row.uid)
                    lines.append(row.to_json() + "\n")
                if lines:
                    with self.partition_path(day).open("a", encoding="utf-8") as fh:
                        fh.writelines(lines)
                written += len(lines)
        except OSError as exc:
            raise StorageUnavailable(str(exc)) from exc
        return WriteReceipt(written, skipped, tuple(sorted(by_day)))

    def read(self) -> Iterator[EventRow]:
        try:
            for path in self.partitions():
                with path.open(encoding="utf-8") as fh:
                    for line in fh:
                        if line.strip():
                            yield EventRow.from_json(line)
        except OSError as exc:
            raise StorageUnavailable(str(exc)) from exc

    def rows(self) -> list[EventRow]:
        return list(self.read())
