import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from harmq.cli import SplitMix64, analyze, fnum, main, parse_spec, render, sweep, verify

from conftest import FIXTURES


def run(*args):
    return subprocess.run([sys.executable, "-m", "harmq.cli", *args], capture_output=True,
                          text=True, timeout=300)


def test_splitmix64_reference_values():
    # first outputs for seed 0 and 1234567 from the reference C implementation
    r = SplitMix64(0)
    assert [r.next_u64() for _ in range(3)] == [
        0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]
    r = SplitMix64(1234567)
    assert r.next_u64() == 6457827717110365317


def test_uniform_and_normal_ranges():
    r = SplitMix64(9)
    u = [r.uniform() for _ in range(1000)]
    assert 0.0 <= min(u) and max(u) < 1.0
    z = r.normals(2000)
    assert abs(z.mean()) < 0.1 and abs(z.std() - 1) < 0.1


def test_fnum_twelve_digits():
    assert fnum(1 / 3) == 0.333333333333
    assert fnum(2 / 3 * 1e-20) == 6.66666666667e-21


def test_analyze_is_byte_deterministic():
    spec = parse_spec(FIXTURES / "ledger-obata-su2-s3.json")
    a = render(analyze(spec, seed=5), "json")
    b = render(analyze(spec, seed=5), "json")
    assert a == b
    data = json.loads(a)
    assert data["seed"] == 5 and data["status"] == "ok"
    assert data["betti"]["match"]


def test_json_round_trip_keeps_numbers():
    report = analyze(parse_spec("catalog:su3-cubed-so3"), seed=1)
    text = render(report, "json")
    data = json.loads(text)
    assert render(data, "json") == text


def test_su3_table_matches_golden():
    report = analyze(parse_spec(FIXTURES / "su3-group.json"))
    golden = (FIXTURES / "su3-group.table.golden").read_text(encoding="utf-8")
    assert render(report, "table") == golden


def test_every_check_has_both_criteria_and_oracle():
    report = analyze(parse_spec("catalog:ledger-obata-su2-s3-z112"))
    for c in report["checks"]:
        assert {"printed", "corrected", "oracle", "agree"} <= set(c)


def test_k_trivial_report():
    report = analyze(parse_spec("catalog:su2-cubed-group"))
    assert report["betti"]["formula"]["b3"] == 3 == report["space"]["s"]
    assert all("closed_form" in c and "printed" not in c for c in report["checks"])


def test_sweep_csv_one_row_per_pair():
    spec = parse_spec("catalog:ledger-obata-su2-s3-z112")
    grid = np.linspace(0.1, 2.0, 20)
    report = sweep(spec, 4, grid, oracle="sample")
    rows = list(csv.DictReader(io.StringIO(render(report, "csv"))))
    assert len(rows) == 20 * 2
    holds = sorted({float(r["x"].split()[-1]) for r in rows if r["corrected"] == "yes"})
    assert holds == []  # 2/sqrt5 is not on this grid
    report = sweep(spec, 4, np.array([2 / np.sqrt(5)]), oracle="on")
    assert all(c["corrected"]["holds"] and c["oracle"]["harmonic"] for c in report["checks"])


def test_verify_passes_on_catalog_spaces(tmp_path):
    for name in ("ledger-obata-su2-s3", "su2-cubed-u1", "su2-cubed-group"):
        code, report = verify(parse_spec(f"catalog:{name}"), 20, 3, bundle_dir=tmp_path)
        assert code == 0, name
        assert report["disagreements"] == 0 and len(report["checks"]) == 20


def test_verify_fault_writes_bundle(tmp_path):
    spec = parse_spec(FIXTURES / "negative-control-lo-z121.json")
    code, report = verify(spec, 50, 0, fault="flip-sign", bundle_dir=tmp_path)
    assert code == 1
    bundle = json.loads(open(report["repro"], encoding="utf-8").read())
    assert bundle["fault"] == "flip-sign" and bundle["check"]["agree"] is False
    # the pinned spec replays the disagreement
    pinned = tmp_path / (report["repro"].rsplit("/", 1)[1].replace(".json", ".spec.json"))
    assert main(["analyze", "--spec", str(pinned), "--inject-fault", "flip-sign",
                 "--out", str(tmp_path / "r.json")]) == 1
    assert main(["analyze", "--spec", str(pinned), "--out", str(tmp_path / "r.json")]) == 0


def test_exit_codes_via_subprocess(tmp_path):
    r = run("analyze", "--spec", str(FIXTURES / "bad-embedding-dims.json"))
    assert r.returncode == 2 and "embedding[1][0]" in r.stderr
    r = run("analyze", "--spec", str(tmp_path / "missing.json"))
    assert r.returncode == 2
    r = run("betti", "--spec", "catalog:su3-flag", "--format", "table")
    assert r.returncode == 0 and "b2=2" in r.stdout
    r = run("verify", "--spec", str(FIXTURES / "negative-control-lo-z121.json"), "--trials", "30",
            "--inject-fault", "flip-sign", "--bundle-dir", str(tmp_path))
    assert r.returncode == 1 and "repro bundle" in r.stderr


def test_unwritable_out(tmp_path):
    assert main(["betti", "--spec", "catalog:su2-pair-diag",
                 "--out", str(tmp_path / "no" / "such" / "dir.json")]) == 2


def test_timings_opt_in():
    spec = parse_spec("catalog:su2-pair-diag")
    assert "timings" not in analyze(spec)
    assert "timings" in analyze(spec, timings=True)


@pytest.mark.parametrize("fmt", ["json", "csv", "table"])
def test_formats_render(fmt):
    text = render(analyze(parse_spec("catalog:ex2-su3-torus")), fmt)
    assert text.endswith("\n") and len(text) > 10
