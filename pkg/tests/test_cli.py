import csv
import json
import subprocess
import sys

import pytest

from laxlab import cli, verify
from laxlab.singlattice import Window, classical_lattice
from laxlab.laxcore import REF

SMALL = ["--window.re_min", "-0.5", "--window.re_max", "0.5", "--window.im_min", "-1", "--window.im_max", "1"]


def zfmt(z):
    return f"{z.real:.17g}{z.imag:+.17g}j"


def run(tmp_path, *args):
    return cli.main(["--output.directory", str(tmp_path), *args])


def test_simulate_real_path(tmp_path, capsys):
    assert run(tmp_path, "simulate", "--path", "0 1") == 0
    summary = json.loads((tmp_path / "simulate.json").read_text())
    assert summary["status"] == "ok"
    assert max(summary["max_A_drift"], summary["max_B_drift"]) < 1e-8
    rows = list(csv.reader((tmp_path / "trajectory.csv").open()))
    assert rows[0][:2] == ["t_re", "t_im"] and float(rows[-1][0]) == 1.0


def test_simulate_blowup(tmp_path, nearest_pole):
    target = 1.5 * nearest_pole
    assert run(tmp_path, "simulate", "--path", "0 " + zfmt(target)) == 3
    summary = json.loads((tmp_path / "simulate.json").read_text())
    assert summary["status"] == "blowup"
    assert abs(complex(*summary["t_star"]) - nearest_pole) < 1e-4


def test_malformed_json_names_field(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"lax": {"a": [1, 0], "x0": [3, }}')
    assert cli.main(["--config", str(bad), "lattice"]) == 2
    err = capsys.readouterr().err
    assert "x0" in err


@pytest.mark.parametrize(
    "content, field",
    [
        ({"lax": {"a": 1, "x0": "big", "y0": 1, "z0": 1}}, "lax.x0"),
        ({"scan": {"resolution": 8}}, "scan.resolution"),
        ({"window": {"re_min": 1, "re_max": -1}}, "window"),
        ({"lattice": {"mn_bound": 0}}, "lattice.mn_bound"),
        ({"output": {"formats": ["xml"]}}, "output.formats"),
        ({"scan": {"grid": 3}}, "scan.grid"),
        ({"plot": {}}, "plot"),
    ],
)
def test_invalid_config_exit_2(tmp_path, capsys, content, field):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(content))
    assert cli.main(["--config", str(path), "lattice"]) == 2
    assert f"[{field}]" in capsys.readouterr().err


def test_bad_override_exit_2(capsys):
    assert cli.main(["--scan.N", "abc", "scan"]) == 2
    assert "scan.N" in capsys.readouterr().err
    assert cli.main(["--lax.colour", "1", "lattice"]) == 2


def test_config_file_and_override_precedence(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"lax": REF.to_json(), "scan": {"N": 24}}))
    run_cfg = cli.load_config(path, [("scan.N", "40"), ("lax.x0", "2.5")])
    assert run_cfg.scan["N"] == 40
    assert run_cfg.lax.x0 == 2.5
    assert run_cfg.scan["resolution"] == 64


def test_lattice_ref(tmp_path):
    assert run(tmp_path, "lattice") == 0
    report = json.loads((tmp_path / "lattice.json").read_text())
    assert report["match"]["coincide"]
    assert report["match"]["max_distance"] < 1e-6
    classical = [p for p in report["points"] if p["source"] == "classical"]
    assert len(classical) == 42
    # round trip: re-reading the JSON reproduces the computed points exactly
    assert [complex(*p["t"]) for p in classical] == [p.t for p in classical_lattice(REF).points]
    rows = list(csv.DictReader((tmp_path / "lattice.csv").open()))
    assert len(rows) == len(report["points"])
    assert complex(float(rows[0]["t_re"]), float(rows[0]["t_im"])) == complex(*report["points"][0]["t"])


def test_lattice_degenerate_exit_4(tmp_path):
    assert run(tmp_path, "--lax.x0", "1.4142135623730951", "--lax.y0", "0", "lattice") == 4


def test_lattice_output_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, "lattice") == 0 and run(b, "lattice") == 0
    for name in ("lattice.json", "lattice.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_scan_small_window(tmp_path, monkeypatch):
    assert run(tmp_path, *SMALL, "--scan.resolution", "24", "--scan.N", "24", "scan") == 0
    cands = json.loads((tmp_path / "candidates.json").read_text())
    expected = classical_lattice(REF, Window(-0.5, 0.5, -1, 1))
    assert len(cands["candidates"]) == len(expected.points) == 2
    rows = list(csv.reader((tmp_path / "scan.csv").open()))
    assert rows[0] == ["t_re", "t_im", "sigma_min", "rho"]
    assert len(rows) == 24 * 24 + 1
    # threaded scan writes the same bytes
    monkeypatch.setenv("LAXLAB_THREADS", "3")
    other = tmp_path / "threads"
    assert run(other, *SMALL, "--scan.resolution", "24", "--scan.N", "24", "scan") == 0
    for name in ("scan.csv", "candidates.json"):
        assert (tmp_path / name).read_bytes() == (other / name).read_bytes()


def test_refine(tmp_path, nearest_pole):
    guess = nearest_pole + 0.03 - 0.02j
    assert run(tmp_path, "refine", "--t-guess", zfmt(guess)) == 0
    out = json.loads((tmp_path / "refine.json").read_text())
    assert abs(complex(*out["point"]["t"]) - nearest_pole) < 1e-5


def test_verify_all_pass(tmp_path, capsys):
    assert run(tmp_path, "verify") == 0
    table = capsys.readouterr().out
    assert "FAIL" not in table and table.count("PASS") >= 25
    checks = json.loads((tmp_path / "verify.json").read_text())
    assert all(c["passed"] for c in checks)


def test_verify_names_failing_suite(tmp_path, capsys, monkeypatch):
    monkeypatch.setitem(verify.SUITES, "broken", lambda cfg: [verify.Check("broken", "always", 1.0, 0.5)])
    assert run(tmp_path, "verify", "--suite", "laxcore", "--suite", "broken") == 1
    assert "broken" in capsys.readouterr().err


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "laxlab.cli", "--output.directory", str(tmp_path), "--output.formats", "json", "lattice"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "coincide" in proc.stdout
    assert (tmp_path / "lattice.json").exists() and not (tmp_path / "lattice.csv").exists()
