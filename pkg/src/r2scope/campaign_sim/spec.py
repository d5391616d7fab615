"""Declarative campaign description and its JSON form."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date
from ipaddress import IPv4Address

from ..errors import SpecInvalid
from ..packet_model import TelescopeConfig
from .payloads import EXPLOIT_KINDS, PAYLOAD_KINDS


@dataclass(frozen=True)
class ScannerSpec:
    src_ip: str
    country: str
    asn: int
    active_window: tuple[int, int]  # inclusive day indices
    rate: int  # connections per active day, per vantage
    dst_ports: tuple[int, ...] = (80,)
    coverage: float = 1.0
    payload_kind: str = "exploit_plain"
    backend: tuple[str, int] | None = None
    vantages: tuple[str, ...] | None = None  # None: every vantage

    @property
    def is_exploit(self) -> bool:
        return self.payload_kind in EXPLOIT_KINDS

    def targets(self, vantage_id: str) -> bool:
        return self.vantages is None or vantage_id in self.vantages

    def to_dict(self) -> dict:
        return {
            "src_ip": self.src_ip,
            "country": self.country,
            "asn": self.asn,
            "active_window": list(self.active_window),
            "rate": self.rate,
            "dst_ports": list(self.dst_ports),
            "coverage": self.coverage,
            "payload_kind": self.payload_kind,
            "backend": None if self.backend is None else list(self.backend),
            "vantages": None if self.vantages is None else list(self.vantages),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScannerSpec":
        return cls(
            src_ip=d["src_ip"],
            country=d["country"],
            asn=int(d["asn"]),
            active_window=tuple(d["active_window"]),
            rate=int(d["rate"]),
            dst_ports=tuple(d.get("dst_ports", (80,))),
            coverage=float(d.get("coverage", 1.0)),
            payload_kind=d.get("payload_kind", "exploit_plain"),
            backend=None if d.get("backend") is None else (d["backend"][0], int(d["backend"][1])),
            vantages=None if d.get("vantages") is None else tuple(d["vantages"]),
        )


GeoRow = tuple[str, str, str, int, str]  # start_ip, end_ip, country, asn, as_name


@dataclass(frozen=True)
class CampaignSpec:
    seed: int
    duration_days: int
    vantages: tuple[TelescopeConfig, ...]
    scanners: tuple[ScannerSpec, ...]
    clock_skew_s: dict[str, float] = field(default_factory=dict)
    start_date: str = "2025-12-01"
    outages: dict[str, tuple[tuple[int, int], ...]] = field(default_factory=dict)
    geo: tuple[GeoRow, ...] = ()
    retransmit_prob: float = 0.05
    reorder_prob: float = 0.3
    noise_frames_per_day: int = 0
    daily_jitter: float = 0.0  # per-vantage, per-day multiplier spread on scanner rates

    def validate(self) -> None:
        if self.duration_days <= 0:
            raise SpecInvalid("duration_days", "must be positive")
        if not self.vantages:
            raise SpecInvalid("vantages", "at least one vantage required")
        ids = [v.vantage_id for v in self.vantages]
        if len(set(ids)) != len(ids):
            raise SpecInvalid("vantages", "duplicate vantage_id")
        try:
            date.fromisoformat(self.start_date)
        except ValueError:
            raise SpecInvalid("start_date", f"not an ISO date: {self.start_date!r}") from None
        if not 0 <= self.retransmit_prob <= 1 or not 0 <= self.reorder_prob <= 1:
            raise SpecInvalid("retransmit_prob", "probabilities must lie in [0, 1]")
        if not 0 <= self.daily_jitter < 1:
            raise SpecInvalid("daily_jitter", "must lie in [0, 1)")
        for vid in list(self.clock_skew_s) + list(self.outages):
            if vid not in ids:
                raise SpecInvalid("vantages", f"unknown vantage {vid!r}")
        for i, s in enumerate(self.scanners):
            where = f"scanners[{i}]"
            try:
                IPv4Address(s.src_ip)
            except ValueError:
                raise SpecInvalid(f"{where}.src_ip", f"bad address {s.src_ip!r}") from None
            if not 0 < s.coverage <= 1:
                raise SpecInvalid(f"{where}.coverage", "must lie in (0, 1]")
            if s.rate <= 0:
                raise SpecInvalid(f"{where}.rate", "must be positive")
            if s.payload_kind not in PAYLOAD_KINDS:
                raise SpecInvalid(f"{where}.payload_kind", f"unknown kind {s.payload_kind!r}")
            if not s.dst_ports or any(not 0 < p <= 0xFFFF for p in s.dst_ports):
                raise SpecInvalid(f"{where}.dst_ports", "ports must lie in 1..65535")
            a, b = s.active_window
            if a > b or a < 0:
                raise SpecInvalid(f"{where}.active_window", "start must be >= 0 and <= end")
            if s.asn <= 0:
                raise SpecInvalid(f"{where}.asn", "must be positive")
            if len(s.country) != 2 or not s.country.isupper():
                raise SpecInvalid(f"{where}.country", "must be an ISO alpha-2 code")
            if s.vantages is not None and any(v not in ids for v in s.vantages):
                raise SpecInvalid(f"{where}.vantages", "references an unknown vantage")
            if s.backend is not None:
                try:
                    IPv4Address(s.backend[0])
                except ValueError:
                    raise SpecInvalid(f"{where}.backend", f"bad address {s.backend[0]!r}") from None

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "duration_days": self.duration_days,
            "start_date": self.start_date,
            "vantages": [v.to_dict() for v in self.vantages],
            "clock_skew_s": dict(sorted(self.clock_skew_s.items())),
            "outages": {k: [list(w) for w in v] for k, v in sorted(self.outages.items())},
            "retransmit_prob": self.retransmit_prob,
            "reorder_prob": self.reorder_prob,
            "noise_frames_per_day": self.noise_frames_per_day,
            "daily_jitter": self.daily_jitter,
            "geo": [list(r) for r in self.geo],
            "scanners": [s.to_dict() for s in self.scanners],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignSpec":
        return cls(
            seed=int(d["seed"]),
            duration_days=int(d["duration_days"]),
            start_date=d.get("start_date", "2025-12-01"),
            vantages=tuple(TelescopeConfig.from_dict(v) for v in d["vantages"]),
            scanners=tuple(ScannerSpec.from_dict(s) for s in d["scanners"]),
            clock_skew_s={k: float(v) for k, v in d.get("clock_skew_s", {}).items()},
            outages={k: tuple(tuple(w) for w in v) for k, v in d.get("outages", {}).items()},
            geo=tuple(tuple(r) for r in d.get("geo", ())),
            retransmit_prob=float(d.get("retransmit_prob", 0.05)),
            reorder_prob=float(d.get("reorder_prob", 0.3)),
            noise_frames_per_day=int(d.get("noise_frames_per_day", 0)),
            daily_jitter=float(d.get("daily_jitter", 0.0)),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=False) + "\n"

    @classmethod
    def loads(cls, text: str) -> "CampaignSpec":
        return cls.from_dict(json.loads(text))
