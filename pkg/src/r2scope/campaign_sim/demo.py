"""The built-in demo campaign.

A month of activity against two vantages, sized for a desk run but built
to the headline shape of the December 2025 React2Shell wave: 735 exploit
scanners in 239 ASNs, a Netherlands-heavy source mix, a single very busy
Bulgarian scanner, backend servers concentrated in the Netherlands with
Tunisia second, a three-day VP2 outage and one high-port-diversity US
scanner late in the month.

All addresses are drawn from reserved space (100.64.0.0/10 for scanners,
198.18.0.0/15 for backends, 10.0.0.0/8 for the telescopes), so replaying
the demo requires ``allow_private``.
"""

from __future__ import annotations

import math
import random
from ipaddress import IPv4Network

from ..packet_model import TelescopeConfig
from .spec import CampaignSpec, ScannerSpec

DEMO_SEED = 20251205
DURATION_DAYS = 31
FIRST_DAY = 4  # 5 December
OUTAGE_VP2 = (9, 11)  # 10-12 December
ANOMALY_WINDOW = (22, 26)  # 23-27 December

VP1_POOL = 511
VP2_POOL = 124
ANOMALY_RATE = {"VP1": 40, "VP2": 300}
DAILY_JITTER = 0.15
# VP2 sees nearly every VP1 scanner (all but its outage days), so combined
# volume is about this multiple of VP1 volume
COMBINED_FACTOR = 1.87

COMMON_PORTS = (80, 443, 3000, 3001, 3002, 8080)
EXTRA_PORTS = (8000, 8443, 5000, 3003, 4000, 9000, 8888, 8081, 5173, 8001)

# country: (scanner IPs, ASNs, share of VP1 exploit volume)
COUNTRY_MIX = {
    "NL": (260, 70, 0.358),
    "US": (150, 55, 0.160),
    "DE": (80, 25, 0.090),
    "BG": (1, 1, 0.067),
    "PL": (40, 15, 0.060),
    "CN": (40, 15, 0.050),
    "FR": (30, 12, 0.040),
    "GB": (30, 12, 0.035),
    "SG": (25, 10, 0.030),
    "IN": (25, 10, 0.030),
    "HK": (20, 8, 0.025),
    "RU": (24, 3, 0.025),
    "CH": (10, 3, 0.017),
}
VP1_VOLUME = 14_000

# scanner country -> server country -> (unique server IPs, VP1 backend volume)
BACKEND_PLAN = {
    "NL": {"NL": (6, 2330), "DE": (3, 250), "HK": (1, 60), "LT": (1, 60), "US": (1, 150)},
    "PL": {"NL": (2, 540), "DE": (2, 60), "LV": (1, 20), "PL": (1, 20), "RU": (1, 20), "US": (2, 40)},
    "US": {"NL": (2, 400), "TN": (1, 250), "US": (5, 150)},
    "DE": {"BD": (1, 30), "DE": (1, 100), "NL": (2, 600), "RU": (1, 30), "US": (1, 60)},
    "FR": {"MY": (3, 300)},
    "GB": {"IR": (1, 100)},
    "IN": {"US": (1, 50)},
}

BENIGN_SCANNERS = (("benign_http", 15), ("benign_flight", 15), ("pollution_only", 10))


def telescopes() -> tuple[TelescopeConfig, TelescopeConfig]:
    net1 = IPv4Network("10.1.0.0/23")
    net2 = IPv4Network("10.2.0.0/25")
    vp1 = TelescopeConfig((net1,), "VP1", addresses=tuple(net1[i] for i in range(1, VP1_POOL + 1)))
    vp2 = TelescopeConfig((net2,), "VP2", addresses=tuple(net2[i] for i in range(1, VP2_POOL + 1)))
    return vp1, vp2


def _coverage_for(k: int, pool: int) -> float:
    # ceil(coverage * pool) == k without float surprises
    return 1.0 if k >= pool else (k - 0.5) / pool


def _ports(rng: random.Random) -> tuple[int, ...]:
    ports = rng.sample(COMMON_PORTS, rng.randint(1, len(COMMON_PORTS)))
    if rng.random() < 0.3:
        ports.append(rng.choice(EXTRA_PORTS))
    return tuple(sorted(ports))


class _Builder:
    def __init__(self, seed: int):
        self.rng = random.Random(seed)
        self.geo: list[tuple[str, str, str, int, str]] = []
        self.next_asn = 64512
        self.next_block = 0

    def asn_block(self, country: str, base: str, label: str) -> tuple[int, IPv4Network]:
        asn = self.next_asn
        self.next_asn += 1
        net = IPv4Network(base)
        block = IPv4Network((int(net.network_address) + 256 * self.next_block, 24))
        self.next_block += 1
        self.geo.append((str(block[0]), str(block[-1]), country, asn, f"{label}-{country}-{asn}"))
        return asn, block


def _volume_plan(rng: random.Random, n: int, target: int, early: int) -> list[tuple[int, int, int]]:
    """(start, end, rate) windows for n scanners summing to roughly target.

    The first ``early`` scanners (one per ASN) start in the first ten days;
    the rest arrive later, which makes IPs keep growing after ASNs level off.
    """
    windows = []
    for i in range(n):
        start = rng.randint(FIRST_DAY + 1, 14) if i < early else rng.randint(9, 24)
        length = rng.randint(1, 7)
        windows.append([start, min(DURATION_DAYS - 1, start + length - 1), 1])
    total = sum(w[1] - w[0] + 1 for w in windows)
    while total < target:
        w = rng.choice(windows)
        span = w[1] - w[0] + 1
        if total + span > target + span // 2:
            # pick the shortest window to finish close to target
            w = min(windows, key=lambda x: x[1] - x[0])
            span = w[1] - w[0] + 1
            if total + span > target + span // 2:
                break
        w[2] += 1
        total += span
    return [tuple(w) for w in windows]


def demo_campaign(seed: int = DEMO_SEED) -> CampaignSpec:
    b = _Builder(seed)
    rng = b.rng
    vp1, vp2 = telescopes()
    scanners: list[ScannerSpec] = []

    # per country: allocate ASN blocks, then scanner IPs across them
    country_ips: dict[str, list[tuple[str, int]]] = {}
    for country, (n_ips, n_asns, _) in COUNTRY_MIX.items():
        blocks = [b.asn_block(country, "100.64.0.0/10", "scan") for _ in range(n_asns)]
        ips = []
        for i in range(n_ips):
            asn, block = blocks[i % n_asns]
            ips.append((str(block[1 + i // n_asns]), asn))
        country_ips[country] = ips

    backend_ips: dict[str, list[str]] = {}

    def server_ip(country: str) -> str:
        if country not in backend_ips:
            _, block = b.asn_block(country, "198.18.0.0/15", "srv")
            backend_ips[country] = [str(block[i]) for i in range(1, 255)]
        return backend_ips[country].pop(0)

    # Table-1 style pairs: (scanner country, server country) -> server IPs
    pair_servers = {
        (sc_c, sv_c): [server_ip(sv_c) for _ in range(n)]
        for sc_c, plan in BACKEND_PLAN.items()
        for sv_c, (n, _) in plan.items()
    }
    backend_port = {ip: rng.choice((80, 8080, 8000, 443, 4444)) for ips in pair_servers.values() for ip in ips}

    for country, (n_ips, _, share) in COUNTRY_MIX.items():
        ips = country_ips[country]
        target = round(share * VP1_VOLUME)
        if country == "US":
            # the VP2-only spike would otherwise inflate the combined US share
            days = ANOMALY_WINDOW[1] - ANOMALY_WINDOW[0] + 1
            target -= round((ANOMALY_RATE["VP2"] - ANOMALY_RATE["VP1"]) * days / COMBINED_FACTOR)
        specials: list[tuple[ScannerSpec, int]] = []
        preassigned: dict[str, int] = {}
        if country in ("NL", "PL"):
            # the two first-day scanners, sweeping every monitored address
            ip, asn = ips.pop(0)
            srv = pair_servers[(country, "NL")][0]
            specials.append((ScannerSpec(ip, country, asn, (FIRST_DAY, 30), 20, COMMON_PORTS, 1.0, "exploit_plain", (srv, backend_port[srv])), 20 * 27))
            preassigned["NL"] = 20 * 27
        if country == "US":
            ip, asn = ips.pop(0)
            tn = pair_servers[("US", "TN")][0]
            specials.append((ScannerSpec(ip, country, asn, (7, 30), 23, COMMON_PORTS, 1.0, "exploit_base64", (tn, backend_port[tn])), 23 * 24))
            ip, asn = ips.pop(0)
            rng_a = random.Random(seed + 1)
            ports = tuple(sorted(rng_a.sample(range(1, 65536), 1015)))
            days = ANOMALY_WINDOW[1] - ANOMALY_WINDOW[0] + 1
            # no embedded backend: shows up in the no-backend report only
            rate1, rate2 = ANOMALY_RATE["VP1"], ANOMALY_RATE["VP2"]
            specials.append((ScannerSpec(ip, country, asn, ANOMALY_WINDOW, rate1, ports, 0.5, "exploit_gzip_base64", None, ("VP1",)), rate1 * days))
            specials.append((ScannerSpec(ip, country, asn, ANOMALY_WINDOW, rate2, ports, 1.0, "exploit_gzip_base64", None, ("VP2",)), 0))
        if country == "BG":
            ip, asn = ips.pop(0)
            days = 25
            rate = round(target / days)
            specials.append((ScannerSpec(ip, country, asn, (5, 5 + days - 1), rate, COMMON_PORTS, 0.4, "exploit_plain"), rate * days))

        remaining = target - sum(v for _, v in specials)
        early = COUNTRY_MIX[country][1] - len(specials) if country in ("NL", "PL") else COUNTRY_MIX[country][1]
        plan = _volume_plan(rng, len(ips), remaining, early)
        generic = []
        for (ip, asn), (start, end, rate) in zip(ips, plan):
            vol = rate * (end - start + 1)
            k = max(1, min(vol, 400, round(rng.lognormvariate(math.log(24), 1.0))))
            kind = rng.choice(("exploit_plain", "exploit_plain", "exploit_base64", "exploit_gzip_base64"))
            generic.append([ScannerSpec(ip, country, asn, (start, end), rate, _ports(rng), _coverage_for(k, VP1_POOL), kind), vol])

        _assign_backends(country, generic, pair_servers, backend_port, preassigned)
        scanners.extend(sc for sc, _ in specials)
        scanners.extend(sc for sc, _ in generic)

    # benign background from its own block; never counted as exploit sources
    benign_asn, benign_block = b.asn_block("US", "100.64.0.0/10", "benign")
    host = 1
    for kind, count in BENIGN_SCANNERS:
        for _ in range(count):
            start = rng.randint(FIRST_DAY, 28)
            window = (start, min(30, start + rng.randint(0, 4)))
            scanners.append(ScannerSpec(str(benign_block[host]), "US", benign_asn, window, 2, _ports(rng), 0.02, kind))
            host += 1

    return CampaignSpec(
        seed=seed,
        duration_days=DURATION_DAYS,
        start_date="2025-12-01",
        vantages=(vp1, vp2),
        scanners=tuple(scanners),
        clock_skew_s={"VP1": 0.0, "VP2": 0.25},
        outages={"VP2": (OUTAGE_VP2,)},
        geo=tuple(b.geo),
        daily_jitter=DAILY_JITTER,
    )


def _assign_backends(country, generic, pair_servers, backend_port, preassigned) -> None:
    """Give scanners backends so each pair gets close to its planned volume.

    Every server IP of a pair is used by at least one scanner; the smallest
    scanners are reserved for that, the rest are filled greedily.
    """
    plan = BACKEND_PLAN.get(country)
    if not plan:
        return
    pairs = [(sv_c, n, vol) for sv_c, (n, vol) in plan.items() if vol > 0]
    order = sorted(range(len(generic)), key=lambda i: (generic[i][1], i))
    assigned: dict[str, int] = {sv_c: preassigned.get(sv_c, 0) for sv_c, _, _ in pairs}
    taken: set[int] = set()

    def give(i: int, server: str) -> None:
        sc, vol = generic[i]
        generic[i][0] = ScannerSpec(
            sc.src_ip, sc.country, sc.asn, sc.active_window, sc.rate, sc.dst_ports, sc.coverage,
            sc.payload_kind, (server, backend_port[server]),
        )
        taken.add(i)

    small = iter(order)
    for sv_c, n, _ in pairs:
        for ip in pair_servers[(country, sv_c)]:
            i = next(small)
            give(i, ip)
            assigned[sv_c] += generic[i][1]
    counters = {sv_c: 0 for sv_c, _, _ in pairs}
    for i in reversed(order):
        if i in taken:
            continue
        vol = generic[i][1]
        sv_c, n, target = max(pairs, key=lambda p: p[2] - assigned[p[0]])
        if target - assigned[sv_c] < vol / 2:
            continue
        servers = pair_servers[(country, sv_c)]
        give(i, servers[counters[sv_c] % len(servers)])
        counters[sv_c] += 1
        assigned[sv_c] += vol
