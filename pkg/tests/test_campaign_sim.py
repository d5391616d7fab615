import base64
import gzip
import math
import re
from collections import Counter
from ipaddress import IPv4Network

import pytest

from r2scope.campaign_sim import (
    CampaignSpec,
    GroundTruth,
    ScannerSpec,
    benign_payload,
    demo_campaign,
    exploit_payload,
    generate,
    geo_of,
    schedule,
    simulate_to_dir,
)
from r2scope.enrichment_store import EventStore
from r2scope.errors import SpecInvalid
from r2scope.packet_model import TelescopeConfig, parse_capture_file
from r2scope.pipeline import ingest


def body_of(payload: bytes) -> bytes:
    return payload.split(b"\r\n\r\n", 1)[1]


def vantage(vid="VP1", n=4, net="10.9.0.0/24"):
    netw = IPv4Network(net)
    return TelescopeConfig((netw,), vid, addresses=tuple(netw[i] for i in range(1, n + 1)))


def small_spec(**kw) -> CampaignSpec:
    scanners = (
        ScannerSpec("203.0.113.10", "NL", 64500, (0, 1), 6, (80, 3000), 1.0, "exploit_plain", ("198.51.100.9", 8080)),
        ScannerSpec("203.0.113.11", "US", 64501, (1, 2), 5, (443,), 0.5, "exploit_base64"),
        ScannerSpec("203.0.113.12", "DE", 64502, (0, 2), 4, (8080,), 0.75, "exploit_gzip_base64", ("198.51.100.10", 80)),
        ScannerSpec("203.0.113.20", "US", 64503, (0, 2), 3, (80,), 1.0, "benign_flight"),
        ScannerSpec("203.0.113.21", "US", 64503, (0, 2), 3, (80,), 1.0, "benign_http"),
        ScannerSpec("203.0.113.22", "US", 64503, (0, 2), 3, (80,), 1.0, "pollution_only"),
    )
    args = dict(
        seed=42, duration_days=3, vantages=(vantage("VP1"), vantage("VP2", net="10.8.0.0/24")),
        scanners=scanners, noise_frames_per_day=5,
        geo=(
            ("203.0.113.0", "203.0.113.255", "NL", 64500, "scan"),
            ("198.51.100.0", "198.51.100.255", "DE", 64600, "srv"),
        ),
    )
    args.update(kw)
    return CampaignSpec(**args)


# -- payloads ---------------------------------------------------------------------------


def test_exploit_plain_substrings():
    p = exploit_payload("exploit_plain", ("198.51.100.9", 80), seed=1)
    body = body_of(p)
    assert p.startswith(b"POST ")
    assert b"$1:__proto__" in body
    assert b"constructor:constructor" in body
    assert b'"then":' in body
    assert b"http://198.51.100.9:80/" in body


def test_base64_variant_wraps_plain_body():
    plain = body_of(exploit_payload("exploit_plain", ("198.51.100.9", 80), seed=5))
    assert base64.b64decode(body_of(exploit_payload("exploit_base64", ("198.51.100.9", 80), seed=5))) == plain
    gz = body_of(exploit_payload("exploit_gzip_base64", ("198.51.100.9", 80), seed=5))
    assert gzip.decompress(base64.b64decode(gz)) == plain


def test_exploit_kind_contract():
    with pytest.raises(ValueError):
        exploit_payload("benign_flight")
    with pytest.raises(ValueError):
        benign_payload("exploit_plain")


def test_benign_payload_substrings():
    flight = body_of(benign_payload("benign_flight", 3))
    assert re.search(rb"\$\d+:", flight) and b"__proto__" not in flight and b"constructor" not in flight
    http = benign_payload("benign_http", 3)
    assert http.startswith(b"GET ") and b"__proto__" not in http and not re.search(rb"\$\d+:", http)
    poll = body_of(benign_payload("pollution_only", 3))
    assert b"__proto__" in poll and b"constructor.constructor" in poll and not re.search(rb"\$\d+:", poll)


def test_payloads_deterministic():
    assert exploit_payload("exploit_gzip_base64", None, 9) == exploit_payload("exploit_gzip_base64", None, 9)
    assert benign_payload("benign_flight", 9) == benign_payload("benign_flight", 9)


# -- spec ---------------------------------------------------------------------------------


def test_spec_validation_names_field():
    bad = small_spec(scanners=(ScannerSpec("203.0.113.10", "NL", 1, (0, 1), 1, coverage=0.0),))
    with pytest.raises(SpecInvalid) as exc:
        bad.validate()
    assert exc.value.field == "scanners[0].coverage"
    with pytest.raises(SpecInvalid):
        small_spec(scanners=(ScannerSpec("203.0.113.10", "NL", 1, (0, 1), 1, payload_kind="nope"),)).validate()
    with pytest.raises(SpecInvalid):
        small_spec(duration_days=0).validate()


def test_spec_json_round_trip():
    spec = small_spec(outages={"VP2": ((1, 1),)}, clock_skew_s={"VP2": 0.25})
    assert CampaignSpec.loads(spec.dumps()) == spec
    demo = demo_campaign()
    assert CampaignSpec.loads(demo.dumps()) == demo


# -- generation ------------------------------------------------------------------------------


def test_four_ip_pool_full_coverage():
    spec = CampaignSpec(
        seed=1, duration_days=1, vantages=(vantage(),),
        scanners=(ScannerSpec("203.0.113.10", "NL", 64500, (0, 0), 10, (80,), 1.0),),
    )
    conns = schedule(spec, spec.vantages[0])
    assert len(conns) == 10
    assert {c.dst_ip for c in conns} == set(spec.vantages[0].pool)
    truth = generate(spec).ground_truth
    assert truth.coverage("VP1") == {"203.0.113.10": 4}


def test_subset_size_is_ceil_of_coverage():
    spec = small_spec()
    conns = schedule(spec, spec.vantages[0])
    for sc in spec.scanners:
        dsts = {c.dst_ip for c in conns if c.scanner is sc}
        n = sum(1 for c in conns if c.scanner is sc)
        assert len(dsts) == min(n, math.ceil(sc.coverage * 4))


def test_symmetric_vantages_identical_daily_counts():
    truth = generate(small_spec()).ground_truth
    assert truth.daily_counts("VP1") == truth.daily_counts("VP2")


def test_outage_and_skew():
    plain = small_spec(outages={"VP2": ((1, 1),)})
    skewed = small_spec(outages={"VP2": ((1, 1),)}, clock_skew_s={"VP2": 0.25})
    truth = generate(skewed).ground_truth
    assert list(truth.daily_counts("VP2")) == ["2025-12-01", "2025-12-03"]
    assert len(truth.daily_counts("VP1")) == 3
    a = [c.ts_us for c in schedule(plain, plain.vantages[1])]
    b = [c.ts_us for c in schedule(skewed, skewed.vantages[1])]
    assert [y - x for x, y in zip(a, b)] == [250_000] * len(a)


def test_byte_identical_runs():
    a, b = generate(small_spec()), generate(small_spec())
    assert [(c.name, c.data) for c in a.captures["VP1"]] == [(c.name, c.data) for c in b.captures["VP1"]]
    assert a.ground_truth.to_jsonl() == b.ground_truth.to_jsonl()
    other = generate(small_spec(seed=43))
    assert [c.data for c in other.captures["VP1"]] != [c.data for c in a.captures["VP1"]]


def test_ground_truth_jsonl_round_trip():
    truth = generate(small_spec()).ground_truth
    assert GroundTruth.from_jsonl(truth.to_jsonl()) == truth


def test_capture_files_parse_and_rotate():
    result = generate(small_spec())
    for cf in result.captures["VP1"]:
        parsed = parse_capture_file(cf.data, cf.name)
        ts = [p.ts_us for p in parsed.packets]
        if ts:
            assert max(ts) - min(ts) < 5_000_000


def test_pipeline_recovers_ground_truth(tmp_path):
    spec = small_spec(retransmit_prob=0.5, reorder_prob=1.0)
    truth = simulate_to_dir(spec, tmp_path / "sim")
    store = EventStore(tmp_path / "store")
    for v in spec.vantages:
        stats, _ = ingest(tmp_path / "sim" / v.vantage_id, v, store, geo_of(spec), allow_private=True)
        assert stats.skipped_frames == 5 * 3
    got = Counter((r.vantage_id, r.src_ip, r.src_port, r.dst_ip, r.dst_port, r.ts_us) for r in store.read())
    assert got == truth.event_keys()
    nl = [r for r in store.read() if r.src_ip == "203.0.113.10"]
    assert all(len(r.backends) == 1 and r.backends[0].country == "DE" for r in nl)
    assert {r.src_country for r in nl} == {"NL"}
    for name in ("spec.json", "telescope.json", "geo.csv", "ground_truth.jsonl"):
        assert (tmp_path / "sim" / name).exists()


def test_demo_spec_shape():
    spec = demo_campaign()
    spec.validate()
    exploit = [s for s in spec.scanners if s.is_exploit]
    assert len({s.src_ip for s in exploit}) == 735
    assert len({s.asn for s in exploit}) == 239
    assert [len(v.pool) for v in spec.vantages] == [511, 124]
    anomaly = [s for s in exploit if len(s.dst_ports) == 1015]
    assert {s.active_window for s in anomaly} == {(22, 26)}
    assert spec.outages == {"VP2": ((9, 11),)}


def test_daily_jitter_varies_days_per_vantage():
    jittered = generate(small_spec(daily_jitter=0.4)).ground_truth
    a, b = jittered.daily_counts("VP1"), jittered.daily_counts("VP2")
    assert a != b
    assert all(n > 0 for n in a.values())
    assert generate(small_spec(daily_jitter=0.4)).ground_truth == jittered
    with pytest.raises(SpecInvalid):
        small_spec(daily_jitter=1.0).validate()
