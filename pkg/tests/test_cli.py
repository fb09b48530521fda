import json
import subprocess
import sys

import pytest

from tapknock.cli import main
from tapknock.synth import tree_digest

FAST = ["--n-seeds", "1", "--trees", "10", "--jobs", "1"]


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def plain_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("plain")
    assert main(["synth", "--users", "2", "--taps-per-terminal", "1", "--knocks-per-kind", "2",
                 "--seed", "5", "--out", str(root)]) == 0
    return root


def test_synth_needs_two_users(tmp_path, capsys):
    code, _, err = run(["synth", "--users", "1", "--out", tmp_path / "x"], capsys)
    assert code == 2 and "need ≥ 2 users" in err


def test_synth_is_reproducible(tmp_path, capsys):
    flags = ["synth", "--users", "2", "--taps-per-terminal", "1", "--knocks-per-kind", "1", "--seed", "7"]
    code, out, _ = run(flags + ["--out", tmp_path / "a"], capsys)
    assert code == 0 and "users = 2  sessions = 4" in out
    run(flags + ["--out", tmp_path / "b"], capsys)
    assert (tmp_path / "a" / "study.summary").read_bytes() == (tmp_path / "b" / "study.summary").read_bytes()
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")


def test_eval_summary_line_and_files(tiny_dir, tmp_path, capsys):
    argv = ["eval", "--data", tiny_dir, "--protocol", "terminal-agnostic", "--window", "2.5", "--offset", "0",
            "--sources", "ring,watch"] + FAST
    code, out, _ = run(argv + ["--out", tmp_path / "r1"], capsys)
    assert code == 0
    assert out.startswith("mean EER = ") and len(out.split("=")[1].strip()) == 6
    for name in ("cells.tsv", "users.tsv", "curves.tsv", "terminals.tsv", "audit.tsv", "summary.json", "run.summary"):
        assert (tmp_path / "r1" / name).exists()
    summary = (tmp_path / "r1" / "run.summary").read_text()
    assert "flag.seed = 0" in summary and "input.%s = sha256:" % tiny_dir.name in summary
    doc = json.loads((tmp_path / "r1" / "summary.json").read_text())
    assert doc["classifiers"] == 4 * 6
    run(argv + ["--out", tmp_path / "r2"], capsys)
    for name in ("cells.tsv", "users.tsv", "curves.tsv", "audit.tsv", "summary.json"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()


def test_global_flags_before_subcommand(tiny_dir, tmp_path, capsys):
    code, out, _ = run(["--seed", "3", "--out", tmp_path / "g", "eval", "--data", tiny_dir, "--protocol",
                        "access-control", "--gesture", "3-knock", "--sources", "door"] + FAST, capsys)
    assert code == 0 and out.startswith("mean EER = ")
    assert "flag.seed = 3" in (tmp_path / "g" / "run.summary").read_text()


@pytest.mark.parametrize("extra,message", [
    (["--protocol", "terminal-agnostic", "--sources", "door"], "door data exists only for knock"),
    (["--protocol", "access-control"], "needs a knock gesture"),
    (["--protocol", "terminal-agnostic", "--window", "3.5", "--offset", "1"], "exceeds 4 s"),
    (["--protocol", "terminal-agnostic", "--gesture", "5-knock"], "needs a tap gesture"),
    (["--protocol", "sweep", "--sizes", "0:1:0.5"], "not in (0, 4]"),
])
def test_usage_errors(tiny_dir, tmp_path, capsys, extra, message):
    code, _, err = run(["eval", "--data", tiny_dir, "--out", tmp_path] + extra + FAST, capsys)
    assert code == 2 and message in err


def test_unknown_flag_and_missing_data(tmp_path, capsys):
    assert run(["eval", "--bogus"], capsys)[0] == 2
    code, _, err = run(["ingest", "--data", tmp_path / "nothing"], capsys)
    assert code == 2 and "no such directory" in err


def test_broken_study_names_the_stage(tiny_dir, tmp_path, capsys):
    bad = tmp_path / "bad" / "u01" / "s1"
    bad.mkdir(parents=True)
    (bad / "manifest.json").write_text("{not json")
    code, _, err = run(["ingest", "--data", tmp_path / "bad", "--out", tmp_path / "o"], capsys)
    assert code == 1 and "ingest" in err and "malformed manifest" in err


def test_attack(tiny_dir, tmp_path, capsys):
    code, out, _ = run(["attack", "--data", tiny_dir, "--sources", "ring", "--out", tmp_path] + FAST, capsys)
    assert code == 0
    assert out.startswith("mean base-FAR = ") and "lambs = " in out
    for name in ("victims.tsv", "attackers.tsv", "lambs.tsv", "wolves.tsv"):
        assert (tmp_path / name).exists()


def test_attack_without_impersonations(plain_dir, tmp_path, capsys):
    code, _, err = run(["attack", "--data", plain_dir, "--out", tmp_path] + FAST, capsys)
    assert code == 1 and "no impersonation segments" in err


def test_sweep_and_report(plain_dir, tmp_path, capsys):
    code, out, _ = run(["eval", "--data", plain_dir, "--protocol", "sweep", "--sizes", "3:4:0.5",
                        "--offsets", "0:1:0.5", "--sources", "ring", "--out", tmp_path] + FAST, capsys)
    assert code == 0 and out.startswith("best cell")
    grid = (tmp_path / "sweep.tsv").read_text().splitlines()
    assert grid[0].split("\t") == ["size\\offset", "0", "0.5", "1"]
    assert grid[-1].split("\t")[2:] == ["NA", "NA"]
    assert (tmp_path / "sweep.svg").read_text().startswith("<svg")
    code, out, _ = run(["report", "--run", tmp_path, "--out", tmp_path / "again.svg"], capsys)
    assert code == 0 and (tmp_path / "again.svg").read_bytes() == (tmp_path / "sweep.svg").read_bytes()


def test_report_on_empty_dir(tmp_path, capsys):
    assert run(["report", "--run", tmp_path], capsys)[0] == 1


def test_ingest_segment_features(plain_dir, tmp_path, capsys):
    code, out, _ = run(["ingest", "--data", plain_dir, "--out", tmp_path / "i"], capsys)
    assert code == 0 and "streams = 40" in out
    code, out, _ = run(["segment", "--data", plain_dir, "--gesture", "watch-tap", "--out", tmp_path / "s"], capsys)
    assert code == 0 and out.startswith("segments = 28")
    assert len(list((tmp_path / "s").glob("u*_s*_watch-tap_*.txt"))) == 28
    code, out, _ = run(["features", "--data", plain_dir, "--gesture", "secret-knock", "--sources", "door",
                        "--out", tmp_path / "f.csv"], capsys)
    assert code == 0 and "features = 120" in out


def test_console_script():
    proc = subprocess.run([sys.executable, "-m", "tapknock", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("tapknock ")
