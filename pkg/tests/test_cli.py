import json
from ipaddress import IPv4Network

import pytest

from r2scope.campaign_sim import CampaignSpec, ScannerSpec
from r2scope.cli import main
from r2scope.packet_model import TelescopeConfig


@pytest.fixture
def spec_file(tmp_path):
    net = IPv4Network("10.7.0.0/24")
    spec = CampaignSpec(
        seed=5, duration_days=3,
        vantages=(
            TelescopeConfig((net,), "VP1", addresses=tuple(net[i] for i in range(1, 9))),
            TelescopeConfig((IPv4Network("10.6.0.0/24"),), "VP2"),
        ),
        scanners=(
            ScannerSpec("203.0.113.1", "NL", 64500, (0, 2), 5, (80,), 1.0, "exploit_plain", ("198.51.100.1", 80)),
            ScannerSpec("203.0.113.2", "US", 64501, (1, 2), 3, (443, 3000), 0.5, "exploit_base64"),
            ScannerSpec("203.0.113.3", "US", 64501, (1, 2), 4, (8080,), 0.25, "benign_flight"),
        ),
        geo=(
            ("203.0.113.0", "203.0.113.1", "NL", 64500, "a"),
            ("203.0.113.2", "203.0.113.255", "US", 64501, "b"),
            ("198.51.100.0", "198.51.100.255", "NL", 64600, "c"),
        ),
    )
    path = tmp_path / "spec.json"
    path.write_text(spec.dumps())
    return path


def run_all(tmp_path, spec_file, out):
    sim, store = tmp_path / "sim", tmp_path / "store"
    assert main(["simulate", "--spec", str(spec_file), "--out", str(sim)]) == 0
    for vid in ("VP1", "VP2"):
        assert main([
            "ingest", "--pcap", str(sim / vid), "--vantage", vid, "--store", str(store),
            "--geo", str(sim / "geo.csv"), "--telescope", str(sim / "telescope.json"), "--allow-private",
        ]) == 0
    assert main([
        "analyze", "report", "--store", str(store), "--telescope", str(sim / "telescope.json"),
        "--exclude", "2025-12-02:2025-12-02", "--out", str(out),
    ]) == 0
    return sim, store


def test_end_to_end(tmp_path, spec_file, capsys):
    sim, store = run_all(tmp_path, spec_file, tmp_path / "rep")
    truth = [json.loads(l) for l in (sim / "ground_truth.jsonl").read_text().splitlines()]
    stored = sum(1 for p in store.iterdir() for _ in p.open())
    assert stored == sum(1 for t in truth if t["exploit"])
    manifest = json.loads((tmp_path / "rep" / "manifest.json").read_text())
    assert manifest["config"]["pool_sizes"] == {"VP1": 8, "VP2": 254}
    assert "coverage_VP1.csv" in manifest["outputs"]

    capsys.readouterr()
    assert main(["analyze", "rank", "--store", str(store), "--top", "1"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[:2] == ["rank,country,share", "1,NL," + repr(15 / 21)]

    assert main(["analyze", "pearson", "--store", str(store), "--vantage", "VP1", "--vantage", "VP2",
                 "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "p" / "pearson.csv").read_text().startswith("vantage_a,vantage_b,r\nVP1,VP2,")

    for what in ("series", "coupling", "growth", "heatmap"):
        assert main(["analyze", what, "--store", str(store), "--out", str(tmp_path / what)]) == 0
    assert main(["analyze", "coverage", "--store", str(store), "--vantage", "VP1", "--pool", "VP1=8",
                 "--out", str(tmp_path / "cov")]) == 0
    lines = (tmp_path / "cov" / "coverage_VP1.csv").read_text().splitlines()
    assert "203.0.113.1,8,1" in lines


def test_reingest_is_idempotent(tmp_path, spec_file, capsys):
    sim, store = run_all(tmp_path, spec_file, tmp_path / "rep")
    capsys.readouterr()
    main(["ingest", "--pcap", str(sim / "VP1"), "--vantage", "VP1", "--store", str(store),
          "--telescope", str(sim / "telescope.json"), "--allow-private"])
    assert " 0 written" in capsys.readouterr().out


def test_report_twice_byte_identical(tmp_path, spec_file):
    run_all(tmp_path, spec_file, tmp_path / "a")
    main(["analyze", "report", "--store", str(tmp_path / "store"), "--telescope", str(tmp_path / "sim" / "telescope.json"),
          "--exclude", "2025-12-02:2025-12-02", "--out", str(tmp_path / "b")])
    for p in (tmp_path / "a").iterdir():
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()


def test_errors_exit_nonzero(tmp_path, capsys):
    assert main(["analyze", "series", "--store", str(tmp_path / "none"), "--vantage", "VP1"]) == 1
    assert "error:" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["analyze", "bogus", "--store", "x"])
