import subprocess
import sys

import pytest

from mmsvirus.cli import main


def test_generate_then_percolate(tmp_path, capsys):
    g = tmp_path / "g.txt"
    assert main(["generate", "--n", "1500", "--out", str(g)]) == 0
    assert g.read_text().startswith("callgraph v1 n=1500 os_classes=2\n")
    assert main(["percolate", "--graph", str(g), "--links", "0", "20", "100", "--out", str(tmp_path / "p")]) == 0
    lines = (tmp_path / "p" / "components.csv").read_text().splitlines()
    assert lines[0] == "m,component_count,largest_size,largest_fraction" and len(lines) == 7
    assert (tmp_path / "p" / "augmentation.csv").exists()
    assert "augmentation" in capsys.readouterr().out


def test_run_naive_writes_trace_and_summary(tmp_path):
    out = tmp_path / "naive"
    assert main(["run-naive", "--n", "2000", "--m", "0.3", "--s", "20", "--rho", "0.2", "--out", str(out)]) == 0
    assert (out / "trace.csv").read_text().startswith("tick,infected,viral_sends\n0,1,")
    assert (out / "summary.csv").read_text().splitlines()[0] == "run_id,m,s,p,rho,final_fraction"


def test_run_temporal_and_detect(tmp_path, capsys):
    out = tmp_path / "t"
    args = ["run-temporal", "--n", "2000", "--s", "30", "--rho", "0.1", "--p", "0.25",
            "--T-days", "1", "--horizon-days", "14", "--out", str(out)]
    assert main(args) == 0
    for name in ("trace.csv", "profile.csv", "thresholds.csv", "detection.csv", "summary.csv"):
        assert (out / name).exists()
    capsys.readouterr()
    assert main(["detect", str(out / "trace.csv"), "--thresholds", str(out / "thresholds.csv"),
                 "--out", str(tmp_path / "d")]) == 0
    again = (tmp_path / "d" / "detection.csv").read_text().splitlines()
    assert again[1].split(",")[1:] == (out / "detection.csv").read_text().splitlines()[1].split(",")[1:]


def test_sweep(tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", "--n", "2000", "--s", "30", "--values", "0", "0.5", "--replicates", "2",
                 "--out", str(out), "--no-traces"]) == 0
    assert (out / "sweep" / "sweep.csv").read_text().splitlines()[0] == "rho,avg,min,max"
    assert (out / "manifest.json").exists()


def test_scenario_builtin_and_manifest_rerun(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["scenario", "stealth-m030", "--n", "2000", "--replicates", "2", "--out", str(a)]) == 0
    assert main(["scenario", "--manifest", str(a / "manifest.json"), "--out", str(b)]) == 0
    for f in a.rglob("*.csv"):
        assert f.read_bytes() == (b / f.relative_to(a)).read_bytes()


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("MMSVIRUS_OUT", str(tmp_path / "env"))
    assert main(["run-naive", "--n", "500", "--s", "5"]) == 0
    assert (tmp_path / "env" / "trace.csv").exists()


def test_scenario_list(capsys):
    assert main(["scenario", "--list"]) == 0
    assert "detected-m003" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["scenario", "no-such-scenario"],
    ["run-naive", "--n", "100", "--rho", "2"],
    ["sweep", "--n", "100", "--axis", "T", "--values", "1"],
    ["detect", "/nonexistent/trace.csv"],
])
def test_errors_exit_nonzero(argv, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("MMSVIRUS_OUT", str(tmp_path))
    assert main(argv) == 1
    assert "error" in capsys.readouterr().err


def test_console_script_entry(tmp_path):
    r = subprocess.run([sys.executable, "-m", "mmsvirus.cli", "scenario", "--list"], capture_output=True, text=True)
    assert r.returncode == 0 and "rho-sweep-m030" in r.stdout
    r = subprocess.run([sys.executable, "-m", "mmsvirus.cli", "bogus"], capture_output=True, text=True)
    assert r.returncode != 0
