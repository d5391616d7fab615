"""Command-line entry point: ``r2scope simulate | ingest | analyze``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import analytics as an
from .campaign_sim import CampaignSpec, demo_campaign, simulate_to_dir
from .enrichment_store import EventStore, load_geo_dataset
from .errors import R2ScopeError
from .packet_model import TelescopeConfig
from .payload_decode import DecodeConfig
from .pipeline import ingest

logger = logging.getLogger("r2scope")

ANALYSES = ("series", "pearson", "coverage", "rank", "coupling", "growth", "heatmap", "report")


def _load_telescope(args) -> TelescopeConfig:
    if args.telescope:
        data = json.loads(Path(args.telescope).read_text(encoding="utf-8"))
        entries = data if isinstance(data, list) else [data]
        for entry in entries:
            if entry.get("vantage_id") == args.vantage:
                return TelescopeConfig.from_dict(entry)
        raise SystemExit(f"vantage {args.vantage!r} not found in {args.telescope}")
    if not args.prefix:
        raise SystemExit("ingest needs --telescope or at least one --prefix")
    return TelescopeConfig(tuple(args.prefix), args.vantage)


def cmd_simulate(args) -> int:
    if args.demo:
        spec = demo_campaign() if args.seed is None else demo_campaign(args.seed)
    elif args.spec:
        spec = CampaignSpec.loads(Path(args.spec).read_text(encoding="utf-8"))
    else:
        raise SystemExit("simulate needs --spec or --demo")
    truth = simulate_to_dir(spec, args.out)
    print(f"wrote {len(truth.labels)} connections ({len(truth.exploits())} exploit) to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    config = _load_telescope(args)
    store = EventStore(args.store)
    geo = load_geo_dataset(args.geo) if args.geo else None
    settings = json.loads(Path(args.config).read_text(encoding="utf-8")) if args.config else {}
    stats, receipt = ingest(
        args.pcap, config, store, geo,
        decode_config=DecodeConfig.from_mapping(settings),
        session_gap_s=float(settings.get("session_gap_s", args.session_gap)),
        allow_private=args.allow_private,
    )
    print(
        f"{config.vantage_id}: {stats.files} files, {stats.packets} packets, "
        f"{stats.connections} connections, {stats.exploits} exploit events, "
        f"{receipt.written} written, {receipt.skipped} already stored"
    )
    return 0


def _emit(header, rows, out: Path | None, name: str) -> None:
    text = an._csv(header, rows)
    if out is None:
        sys.stdout.write(text)
    else:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text, encoding="utf-8")


def _pool_sizes(args) -> dict[str, int]:
    sizes = {}
    for item in args.pool or ():
        vid, _, n = item.partition("=")
        sizes[vid] = int(n)
    if args.telescope:
        data = json.loads(Path(args.telescope).read_text(encoding="utf-8"))
        for entry in data if isinstance(data, list) else [data]:
            sizes.setdefault(entry["vantage_id"], len(TelescopeConfig.from_dict(entry).pool))
    return sizes


def cmd_analyze(args) -> int:
    store = EventStore(args.store)
    out = Path(args.out) if args.out else None
    excl = [an.parse_range(x) for x in args.exclude or ()]
    vantages = args.vantage or []
    what = args.what

    if what == "series":
        for v in vantages or sorted({r.vantage_id for r in store.read()}):
            s = an.daily_series(store, v, exclusions=excl)
            _emit(["date", "exploit_events", "excluded"],
                  ((d.isoformat(), n, int(an._excluded(d, excl))) for d, n in s.points), out, f"series_{v}.csv")
    elif what == "pearson":
        if len(vantages) != 2:
            raise SystemExit("pearson needs exactly two --vantage values")
        a = an.daily_series(store, vantages[0])
        b = an.daily_series(store, vantages[1])
        r = an.pearson(a, b, excl)
        _emit(["vantage_a", "vantage_b", "r"], [(vantages[0], vantages[1], r)], out, "pearson.csv")
    elif what == "coverage":
        sizes = _pool_sizes(args)
        for v in vantages:
            if v not in sizes:
                raise SystemExit(f"pool size for {v} unknown; pass --pool {v}=N or --telescope")
            cs = an.coverage_stats(store, v, sizes[v])
            _emit(["src_ip", "unique_destinations", "full_coverage"],
                  ((ip, n, int(n == cs.pool_size)) for ip, n in cs.per_scanner.items()), out, f"coverage_{v}.csv")
            print(f"{v}: scanners={len(cs.per_scanner)} median={cs.median} mean={cs.mean:.2f} "
                  f"p75={cs.p75} full_coverage={len(cs.full_coverage)}", file=sys.stderr)
    elif what == "rank":
        v = vantages[0] if vantages else None
        for side in ("scanner", "server"):
            ranked = an.rank_countries(store, side, args.top, v)
            _emit(["rank", "country", "share"], ((i + 1, c, s) for i, (c, s) in enumerate(ranked)), out, f"rank_{side}.csv")
    elif what == "coupling":
        cm = an.coupling(store, vantages[0] if vantages else None)
        _emit(["scanner_country", "server_country", "events", "row_share", "unique_server_ips"],
              ((a, b, n, cm.share(a, b), cm.unique_servers[(a, b)]) for (a, b), n in cm.counts.items()),
              out, "coupling.csv")
        _emit(["scanner_country", "events"], cm.no_backend.items(), out, "no_backend.csv")
    elif what == "growth":
        _emit(["date", "unique_src_ips", "unique_src_asns"],
              ((d.isoformat(), i, a) for d, i, a in an.growth_curves(store, vantages[0] if vantages else None)),
              out, "growth.csv")
    elif what == "heatmap":
        hm = an.port_heatmap(store, args.top, vantages[0] if vantages else None)
        _emit(["week_start", *[str(p) for p in hm.ports]],
              ((w.isoformat(), *c) for w, c in zip(hm.week_starts, hm.cells)), out, "heatmap.csv")
    elif what == "report":
        if out is None:
            raise SystemExit("report needs --out")
        manifest = an.report(store, out, _pool_sizes(args), excl, args.top, args.heatmap_top)
        print(f"wrote {len(manifest['outputs'])} tables and manifest.json to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="r2scope", description="Active-telescope exploit measurement toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate capture files and ground truth from a campaign spec")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", help="campaign spec JSON file")
    src.add_argument("--demo", action="store_true", help="use the built-in demo campaign")
    s.add_argument("--seed", type=int, help="override the demo seed")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    i = sub.add_parser("ingest", help="detect exploit events in capture files and store them")
    i.add_argument("--pcap", required=True, help="capture file or directory (searched recursively)")
    i.add_argument("--vantage", required=True)
    i.add_argument("--store", required=True, help="event store root directory")
    i.add_argument("--geo", help="geo/ASN range CSV")
    i.add_argument("--telescope", help="telescope JSON (object or list of objects)")
    i.add_argument("--prefix", action="append", help="monitored prefix, repeatable (if no --telescope)")
    i.add_argument("--config", help="JSON settings: decode.threshold, decode.max_depth, session_gap_s")
    i.add_argument("--session-gap", type=float, default=60.0)
    i.add_argument("--allow-private", action="store_true", help="keep backends in reserved address space")
    i.set_defaults(func=cmd_ingest)

    a = sub.add_parser("analyze", help="compute measurement tables from the event store")
    a.add_argument("what", choices=ANALYSES)
    a.add_argument("--store", required=True)
    a.add_argument("--vantage", action="append", help="vantage id, repeatable")
    a.add_argument("--exclude", action="append", metavar="YYYY-MM-DD:YYYY-MM-DD", help="inclusive date range, repeatable")
    a.add_argument("--top", type=int, default=5, help="top-k countries or ports")
    a.add_argument("--heatmap-top", type=int, default=15, help="ports in the report heatmap")
    a.add_argument("--pool", action="append", metavar="VANTAGE=N", help="monitored pool size for coverage")
    a.add_argument("--telescope", help="telescope JSON to derive pool sizes from")
    a.add_argument("--out", help="output directory (stdout if omitted, except report)")
    a.set_defaults(func=cmd_analyze)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (R2ScopeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
