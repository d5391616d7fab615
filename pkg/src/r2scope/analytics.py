"""Measurement analytics over the event store.

Every function takes either an :class:`EventStore` or any iterable of
:class:`EventRow` and is a pure function of the row multiset: results never
depend on row order.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Iterable, Sequence

from .enrichment_store import EventRow, EventStore
from .errors import DegenerateSeries, EmptyStore, StorageUnavailable

DateRange = tuple[date, date]


def _rows(store: EventStore | Iterable[EventRow], vantage: str | None = None) -> list[EventRow]:
    rows = store.read() if isinstance(store, EventStore) else store
    return [r for r in rows if vantage is None or r.vantage_id == vantage]


def parse_range(text: str) -> DateRange:
    """``YYYY-MM-DD:YYYY-MM-DD`` (inclusive) -> (start, end)."""
    a, _, b = text.partition(":")
    start = date.fromisoformat(a)
    end = date.fromisoformat(b) if b else start
    if end < start:
        raise ValueError(f"range ends before it starts: {text}")
    return start, end


def _excluded(d: date, windows: Sequence[DateRange]) -> bool:
    return any(a <= d <= b for a, b in windows)


# -- time series ------------------------------------------------------------------


@dataclass(frozen=True)
class DailySeries:
    vantage_id: str
    points: tuple[tuple[date, int], ...]
    exclusion_windows: tuple[DateRange, ...] = ()

    def __post_init__(self):
        dates = [d for d, _ in self.points]
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise ValueError("dates must be strictly increasing")
        if any(not isinstance(c, int) or c < 0 for _, c in self.points):
            raise ValueError("counts must be non-negative integers")

    def as_dict(self) -> dict[date, int]:
        return dict(self.points)


def daily_series(
    store,
    vantage: str,
    span: DateRange | None = None,
    exclusions: Sequence[DateRange] = (),
) -> DailySeries:
    """Exploit events per UTC date, zero-filled over the observation span."""
    rows = _rows(store, vantage)
    if not rows:
        raise EmptyStore(f"no events for vantage {vantage!r}")
    counts = Counter(date.fromisoformat(r.partition_date) for r in rows)
    start, end = span or (min(counts), max(counts))
    points = []
    d = start
    while d <= end:
        points.append((d, counts.get(d, 0)))
        d += timedelta(days=1)
    return DailySeries(vantage, tuple(points), tuple(exclusions))


def pearson(a: DailySeries, b: DailySeries, exclusions: Sequence[DateRange] = ()) -> float:
    """Sample Pearson r over dates present in both series and not excluded."""
    windows = tuple(exclusions) + a.exclusion_windows + b.exclusion_windows
    bd = b.as_dict()
    pairs = [(x, bd[d]) for d, x in a.points if d in bd and not _excluded(d, windows)]
    if len(pairs) < 3:
        raise DegenerateSeries(f"need at least 3 paired dates, have {len(pairs)}")
    # counts are integers, so n-scaled centered sums are exact
    n = len(pairs)
    sx = sum(x for x, _ in pairs)
    sy = sum(y for _, y in pairs)
    sxx = n * sum(x * x for x, _ in pairs) - sx * sx
    syy = n * sum(y * y for _, y in pairs) - sy * sy
    sxy = n * sum(x * y for x, y in pairs) - sx * sy
    if sxx == 0 or syy == 0:
        raise DegenerateSeries("zero variance")
    prod = sxx * syy
    root = math.isqrt(prod)
    r = sxy / root if root * root == prod else sxy / math.sqrt(prod)
    return max(-1.0, min(1.0, r))


# -- destination coverage ------------------------------------------------------------


@dataclass(frozen=True)
class CoverageStats:
    vantage_id: str
    pool_size: int
    per_scanner: dict[str, int]
    median: int
    mean: float
    p75: int
    full_coverage: tuple[str, ...]


def nearest_rank(sorted_values: Sequence[int], q: float) -> int:
    """Nearest-rank percentile: the value at 1-based rank ceil(q * n)."""
    n = len(sorted_values)
    rank = max(1, math.ceil(q * n))
    return sorted_values[rank - 1]


def coverage_stats(store, vantage: str, pool_size: int) -> CoverageStats:
    if pool_size <= 0:
        raise ValueError("pool_size must be positive")
    rows = _rows(store, vantage)
    if not rows:
        raise EmptyStore(f"no events for vantage {vantage!r}")
    dsts: dict[str, set] = defaultdict(set)
    for r in rows:
        dsts[r.src_ip].add(r.dst_ip)
    per = {ip: len(s) for ip, s in sorted(dsts.items())}
    vals = sorted(per.values())
    return CoverageStats(
        vantage_id=vantage,
        pool_size=pool_size,
        per_scanner=per,
        median=nearest_rank(vals, 0.5),
        mean=sum(vals) / len(vals),
        p75=nearest_rank(vals, 0.75),
        full_coverage=tuple(ip for ip, n in per.items() if n == pool_size),
    )


# -- countries -------------------------------------------------------------------------


def _server_countries(rows: Iterable[EventRow]) -> Counter:
    return Counter(b.country for r in rows for b in r.backends)


def rank_countries(store, side: str = "scanner", k: int = 5, vantage: str | None = None) -> list[tuple[str, float]]:
    """Top-k countries by share of exploit events (scanner side) or of
    backend endpoint occurrences (server side)."""
    rows = _rows(store, vantage)
    if side == "scanner":
        counts = Counter(r.src_country for r in rows)
    elif side == "server":
        counts = _server_countries(rows)
    else:
        raise ValueError(f"side must be 'scanner' or 'server', not {side!r}")
    total = sum(counts.values())
    if not total:
        return []
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(c, n / total) for c, n in ranked[:k]]


@dataclass(frozen=True)
class CouplingMatrix:
    rows: tuple[str, ...]
    columns: tuple[str, ...]
    counts: dict[tuple[str, str], int]
    unique_servers: dict[tuple[str, str], int]
    no_backend: dict[str, int] = field(default_factory=dict)

    def share(self, row: str, col: str) -> float:
        total = sum(self.counts.get((row, c), 0) for c in self.columns)
        return self.counts.get((row, col), 0) / total if total else 0.0

    def row_shares(self, row: str) -> dict[str, float]:
        return {c: self.share(row, c) for c in self.columns if (row, c) in self.counts}


def coupling(store, vantage: str | None = None) -> CouplingMatrix:
    counts: Counter = Counter()
    servers: dict[tuple[str, str], set] = defaultdict(set)
    no_backend: Counter = Counter()
    for r in _rows(store, vantage):
        if not r.backends:
            no_backend[r.src_country] += 1
            continue
        for b in r.backends:
            counts[(r.src_country, b.country)] += 1
            servers[(r.src_country, b.country)].add(b.ip)
    return CouplingMatrix(
        rows=tuple(sorted({a for a, _ in counts})),
        columns=tuple(sorted({b for _, b in counts})),
        counts=dict(sorted(counts.items())),
        unique_servers={k: len(v) for k, v in sorted(servers.items())},
        no_backend=dict(sorted(no_backend.items())),
    )


# -- growth and ports ------------------------------------------------------------------


def growth_curves(store, vantage: str | None = None) -> list[tuple[date, int, int]]:
    """Cumulative distinct source IPs and ASNs by first-seen date."""
    by_date: dict[date, list[EventRow]] = defaultdict(list)
    for r in _rows(store, vantage):
        by_date[date.fromisoformat(r.partition_date)].append(r)
    ips: set[str] = set()
    asns: set[int] = set()
    out = []
    for d in sorted(by_date):
        for r in by_date[d]:
            ips.add(r.src_ip)
            if r.src_asn is not None:
                asns.add(r.src_asn)
        out.append((d, len(ips), len(asns)))
    return out


@dataclass(frozen=True)
class PortHeatmap:
    week_starts: tuple[date, ...]
    ports: tuple[int, ...]
    cells: tuple[tuple[float, ...], ...]  # weeks x ports
    counts: tuple[tuple[int, ...], ...]


def port_heatmap(store, k: int = 15, vantage: str | None = None) -> PortHeatmap:
    """Top-k destination ports, counts scaled by each week's maximum.

    Weeks are 7-day bins starting at the first event date; the week maximum
    is taken over the selected ports.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    rows = _rows(store, vantage)
    if not rows:
        return PortHeatmap((), (), (), ())
    days = [date.fromisoformat(r.partition_date) for r in rows]
    first, last = min(days), max(days)
    totals = Counter(r.dst_port for r in rows)
    ports = tuple(p for p, _ in sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))[:k])
    col = {p: i for i, p in enumerate(ports)}
    n_weeks = (last - first).days // 7 + 1
    counts = [[0] * len(ports) for _ in range(n_weeks)]
    for r, d in zip(rows, days):
        if r.dst_port in col:
            counts[(d - first).days // 7][col[r.dst_port]] += 1
    cells = []
    for row in counts:
        top = max(row)
        cells.append(tuple(c / top if top else 0.0 for c in row))
    return PortHeatmap(
        week_starts=tuple(first + timedelta(days=7 * w) for w in range(n_weeks)),
        ports=ports,
        cells=tuple(cells),
        counts=tuple(tuple(r) for r in counts),
    )


# -- report ------------------------------------------------------------------------------


def _csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def report_tables(
    store,
    pool_sizes: dict[str, int] | None = None,
    exclusions: Sequence[DateRange] = (),
    top: int = 5,
    heatmap_k: int = 15,
) -> dict[str, str]:
    """Every analytic as CSV text, keyed by output file name."""
    rows = _rows(store)
    if not rows:
        raise EmptyStore("store holds no events")
    vantages = sorted({r.vantage_id for r in rows})
    days = [date.fromisoformat(r.partition_date) for r in rows]
    span = (min(days), max(days))
    out: dict[str, str] = {}

    series = {v: daily_series(rows, v, span) for v in vantages}
    for v, s in series.items():
        out[f"series_{v}.csv"] = _csv(
            ["date", "exploit_events", "excluded"],
            ((d.isoformat(), n, int(_excluded(d, exclusions))) for d, n in s.points),
        )
    if len(vantages) > 1:
        pr = []
        for i, a in enumerate(vantages):
            for b in vantages[i + 1:]:
                try:
                    r = pearson(series[a], series[b], exclusions)
                except DegenerateSeries:
                    r = ""
                pr.append((a, b, r))
        out["pearson.csv"] = _csv(["vantage_a", "vantage_b", "r"], pr)

    for v in vantages:
        pool = (pool_sizes or {}).get(v)
        if pool is None:
            continue
        cs = coverage_stats(rows, v, pool)
        out[f"coverage_{v}.csv"] = _csv(
            ["src_ip", "unique_destinations", "full_coverage"],
            ((ip, n, int(n == pool)) for ip, n in cs.per_scanner.items()),
        )
        out[f"coverage_summary_{v}.csv"] = _csv(
            ["vantage", "pool_size", "scanners", "median", "mean", "p75", "full_coverage_scanners"],
            [(v, pool, len(cs.per_scanner), cs.median, cs.mean, cs.p75, len(cs.full_coverage))],
        )

    for side in ("scanner", "server"):
        out[f"rank_{side}.csv"] = _csv(["rank", "country", "share"], (
            (i + 1, c, s) for i, (c, s) in enumerate(rank_countries(rows, side, top))
        ))

    cm = coupling(rows)
    out["coupling.csv"] = _csv(
        ["scanner_country", "server_country", "events", "row_share", "unique_server_ips"],
        ((a, b, n, cm.share(a, b), cm.unique_servers[(a, b)]) for (a, b), n in cm.counts.items()),
    )
    out["no_backend.csv"] = _csv(["scanner_country", "events"], cm.no_backend.items())

    out["growth.csv"] = _csv(
        ["date", "unique_src_ips", "unique_src_asns"],
        ((d.isoformat(), i, a) for d, i, a in growth_curves(rows)),
    )
    hm = port_heatmap(rows, heatmap_k)
    out["heatmap.csv"] = _csv(
        ["week_start", *[str(p) for p in hm.ports]],
        ((w.isoformat(), *cells) for w, cells in zip(hm.week_starts, hm.cells)),
    )
    return out


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def report(
    store: EventStore,
    out_dir: str | Path,
    pool_sizes: dict[str, int] | None = None,
    exclusions: Sequence[DateRange] = (),
    top: int = 5,
    heatmap_k: int = 15,
) -> dict:
    """Write all tables plus ``manifest.json``; returns the manifest."""
    from . import __version__

    tables = report_tables(store, pool_sizes, exclusions, top, heatmap_k)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        inputs = {p.name: _sha256(p.read_bytes()) for p in store.partitions()}
        for name, text in tables.items():
            (out / name).write_text(text, encoding="utf-8")
        manifest = {
            "tool": "r2scope",
            "version": __version__,
            "config": {
                "pool_sizes": dict(sorted((pool_sizes or {}).items())),
                "exclusions": [f"{a.isoformat()}:{b.isoformat()}" for a, b in exclusions],
                "top": top,
                "heatmap_k": heatmap_k,
            },
            "inputs": inputs,
            "outputs": {name: _sha256(text.encode("utf-8")) for name, text in sorted(tables.items())},
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise StorageUnavailable(str(exc)) from exc
    return manifest
