"""Capture files in, enriched exploit events out."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .enrichment_store import EventRow, EventStore, GeoDataset, WriteReceipt, enrich
from .flight_signature import ExploitEvent, classify_connection
from .flow_reassembly import DEFAULT_SESSION_GAP_S, reassemble_all
from .packet_model import PacketRecord, TelescopeConfig, parse_capture_file
from .payload_decode import DecodeConfig, decode

logger = logging.getLogger(__name__)


@dataclass
class IngestStats:
    files: int = 0
    packets: int = 0
    skipped_frames: int = 0
    malformed_frames: int = 0
    truncated_files: int = 0
    connections: int = 0
    empty_connections: int = 0
    undecodable: int = 0
    exploits: int = 0
    written: int = 0
    duplicates: int = 0


def capture_paths(path: str | os.PathLike) -> list[Path]:
    p = Path(path)
    if p.is_dir():
        return sorted(q for q in p.rglob("*") if q.suffix in (".pcap", ".cap") and q.is_file())
    return [p]


def read_captures(paths: Iterable[Path], stats: IngestStats) -> list[PacketRecord]:
    packets: list[PacketRecord] = []
    for path in paths:
        parsed = parse_capture_file(path.read_bytes(), path.name)
        stats.files += 1
        stats.skipped_frames += parsed.skipped
        stats.malformed_frames += parsed.malformed
        stats.truncated_files += parsed.truncated
        packets.extend(parsed.packets)
    packets.sort(key=lambda p: p.ts_us)
    stats.packets = len(packets)
    return packets


def detect(
    packets: Iterable[PacketRecord],
    config: TelescopeConfig,
    *,
    decode_config: DecodeConfig | None = None,
    session_gap_s: float = DEFAULT_SESSION_GAP_S,
    allow_private: bool = False,
    stats: IngestStats | None = None,
) -> list[ExploitEvent]:
    stats = stats if stats is not None else IngestStats()
    conns = reassemble_all(packets, session_gap_s, is_client=lambda p: config.monitors(p.dst_ip))
    events = []
    for conn in conns:
        stats.connections += 1
        if conn.empty:
            stats.empty_connections += 1
            continue
        if not conn.client_stream:
            continue
        decoded = decode(conn.client_stream, decode_config)
        if not decoded.accepted:
            stats.undecodable += 1
            continue
        ev = classify_connection(conn, decoded, config.vantage_id, allow_private=allow_private)
        if ev is not None:
            events.append(ev)
    events.sort(key=lambda e: (e.ts_us, e.key))
    stats.exploits += len(events)
    return events


def ingest(
    path: str | os.PathLike,
    config: TelescopeConfig,
    store: EventStore,
    geo: GeoDataset | None = None,
    **kwargs,
) -> tuple[IngestStats, WriteReceipt]:
    stats = IngestStats()
    packets = read_captures(capture_paths(path), stats)
    events = detect(packets, config, stats=stats, **kwargs)
    geo = geo or GeoDataset()
    rows: list[EventRow] = [enrich(ev, geo) for ev in events]
    receipt = store.append(rows)
    stats.written += receipt.written
    stats.duplicates += receipt.skipped
    logger.info(
        "%s: %d packets, %d connections, %d exploit events (%d new)",
        config.vantage_id, stats.packets, stats.connections, stats.exploits, receipt.written,
    )
    return stats, receipt
