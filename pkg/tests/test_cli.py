from __future__ import annotations

import csv
import io
import json
import math
import subprocess
import sys

import pytest

from qwbattery.cli import fmt, main, parse_beta, parse_n, read_config


def run_cli(capsys, *argv):
    assert main(list(argv)) == 0
    cap = capsys.readouterr()
    return cap.out, cap.err


def rows_of(text):
    return list(csv.reader(io.StringIO(text)))


def test_spectrum_ring4(capsys):
    out, _ = run_cli(capsys, "spectrum", "--topology", "ring", "--n", "4")
    rows = rows_of(out)
    assert rows[0] == ["l", "E_l", "degeneracy_group"]
    assert [float(r[1]) for r in rows[1:]] == pytest.approx([-2, 0, 0, 2], abs=1e-12)
    assert [r[2] for r in rows[1:]] == ["0", "1", "1", "2"]


def test_scaling_complete(capsys):
    out, _ = run_cli(capsys, "scaling", "--topology", "complete", "--n", "3..6", "--jobs", "1")
    rows = rows_of(out)
    assert rows[0] == ["n", "topology", "W_max", "W_localized"]
    for r in rows[1:]:
        n = int(r[0])
        assert r[1] == "complete"
        assert float(r[2]) == pytest.approx(n)
        assert float(r[3]) == pytest.approx(n - 1)


def test_thermal_ring3(capsys):
    out, _ = run_cli(capsys, "thermal", "--topology", "ring", "--n", "3", "--beta", "0.5,1,inf")
    rows = rows_of(out)
    assert rows[0] == ["beta", "W_generic", "W_closed_form", "abs_diff"]
    assert rows[-1][0] == "inf"
    for r in rows[1:]:
        assert float(r[3]) <= 1e-9
    assert float(rows[2][2]) == pytest.approx(2.5924934933073, abs=1e-9)


def test_thermal_unsupported_kind(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["thermal", "--topology", "wheel", "--n", "5"])
    assert exc.value.code == 2


def test_noise_trajectory(capsys):
    out, _ = run_cli(capsys, "noise-trajectory", "--topology", "ring", "--n", "4", "--noise", "haken-strobl",
                     "--gamma", "0.5", "--state", "localized", "--t-max", "1", "--samples", "5")
    rows = rows_of(out)
    assert rows[0] == ["t", "strategy", "work", "ergotropy"]
    assert len(rows) == 1 + 5 * 3
    for r in rows[1:]:
        assert float(r[2]) <= float(r[3]) + 1e-9


def test_chiral_sweep_csv_sidecar(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    run_cli(capsys, "chiral-sweep", "--topology", "chiral-ring", "--n", "3", "--samples", "120", "--out", str(out))
    rows = rows_of(out.read_text())
    assert rows[0] == ["gamma", "bandwidth"] and len(rows) == 121
    summary = rows_of((tmp_path / "sweep.summary.csv").read_text())
    assert summary[0] == ["argmax", "max_bandwidth", "closed_form", "diff"]
    assert float(summary[1][3]) < 1e-9
    assert float(summary[1][2]) == pytest.approx(2 * math.sqrt(3))


def test_chiral_sweep_stdout_summary_to_stderr(capsys):
    out, err = run_cli(capsys, "chiral-sweep", "--topology", "chiral-complete", "--n", "4", "--samples", "60")
    assert rows_of(err)[0][0] == "argmax"
    assert len(rows_of(out)) == 61


def test_chiral_sweep_wrong_topology():
    with pytest.raises(SystemExit):
        main(["chiral-sweep", "--topology", "ring", "--n", "4"])


def test_json_output(capsys):
    out, _ = run_cli(capsys, "chiral-sweep", "--topology", "chiral-ring", "--n", "5", "--samples", "30",
                     "--format", "json")
    doc = json.loads(out)
    assert doc["columns"] == ["gamma", "bandwidth"]
    assert len(doc["rows"]) == 30
    assert doc["metadata"]["config"]["n"] == "5"
    assert doc["metadata"]["grid"]["samples"] == 30
    assert "version" in doc["metadata"]
    assert doc["summary"]["diff"] < 1e-9
    assert "jobs" not in doc["metadata"]["config"]


def test_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# experiment\ntopology = complete\nn = 5\ncoupling-j = 2.0\n")
    out, _ = run_cli(capsys, "spectrum", "--config", str(cfg))
    assert float(rows_of(out)[1][1]) == pytest.approx(-8)
    out, _ = run_cli(capsys, "spectrum", "--config", str(cfg), "--coupling-j", "1")
    assert float(rows_of(out)[1][1]) == pytest.approx(-4)


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    with pytest.raises(ValueError):
        read_config(bad)
    bad.write_text("just words\n")
    with pytest.raises(ValueError):
        read_config(bad)
    with pytest.raises(SystemExit):
        main(["spectrum", "--config", str(tmp_path / "missing.cfg")])


def test_custom_topology(tmp_path, capsys):
    edges = tmp_path / "edges.txt"
    edges.write_text("3\n0 1 1 0\n1 2 1 0\n2 0 1 0\n")
    out, _ = run_cli(capsys, "spectrum", "--topology", "custom", "--edge-list", str(edges))
    assert [float(r[1]) for r in rows_of(out)[1:]] == pytest.approx([-2, 1, 1])
    with pytest.raises(SystemExit):
        main(["spectrum", "--topology", "custom"])


@pytest.mark.parametrize("argv", [
    ["spectrum", "--n", "2"],
    ["spectrum", "--n", "abc"],
    ["spectrum", "--n", "3..5"],
    ["thermal", "--beta", "-1"],
    ["scaling", "--jobs", "0"],
    ["noise-trajectory", "--dt", "1"],
    ["spectrum", "--topology", "hexagon"],
])
def test_error_exit_code(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


def test_jobs_do_not_change_output(capsys):
    a, _ = run_cli(capsys, "scaling", "--topology", "wheel", "--n", "4..9", "--jobs", "1")
    b, _ = run_cli(capsys, "scaling", "--topology", "wheel", "--n", "4..9", "--jobs", "3")
    assert a == b


def test_byte_identical_reruns(tmp_path):
    outs = []
    for k in range(2):
        path = tmp_path / f"run{k}.json"
        subprocess.run([sys.executable, "-m", "qwbattery.cli", "thermal", "--topology", "complete", "--n", "6",
                        "--format", "json", "--out", str(path)], check=True)
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_helpers():
    assert parse_n("3..5") == [3, 4, 5]
    assert parse_n("3,9") == [3, 9]
    assert parse_beta("1, inf") == [1.0, math.inf]
    assert fmt(-0.0) == "0" and fmt(1 / 3) == "0.333333333333" and fmt(7) == "7"
    with pytest.raises(ValueError):
        parse_n("5..3")
    with pytest.raises(ValueError):
        parse_beta("")
