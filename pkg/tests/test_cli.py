import csv
import json
import math
import subprocess
import sys

import pytest

from psqi.cli import main


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    assert run("synth", "--n-windows", 40, "--seed", 1, "--out", d) == 0
    return d


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_synth_writes_records(corpus):
    assert len(list(corpus.glob("*.csv"))) == 40
    meta = json.loads((corpus / "synth.json").read_text())
    assert meta["arguments"]["seed"] == 1 and meta["prng"]
    assert len(meta["windows"]) == 40


def test_score_then_evaluate(corpus, tmp_path):
    scores = tmp_path / "scores.csv"
    assert run("score", "--data", corpus, "--jobs", 1, "--out", scores) == 0
    assert len(read_csv(scores)) == 41
    assert run("evaluate", "--data", corpus, "--scores", scores, "--out", tmp_path / "rep") == 0
    report = json.loads((tmp_path / "rep" / "report.json").read_text())
    assert math.isfinite(report["margin"]["delta_star"])
    for name in ("records.csv", "bins.csv", "margin.csv"):
        assert (tmp_path / "rep" / name).exists()


def test_score_vanishing_perturbation(corpus, tmp_path):
    out = tmp_path / "s.csv"
    assert run("score", "--data", corpus, "--gamma-db", 300, "--jobs", 1, "--out", out) == 0
    rows = read_csv(out)
    col = rows[0].index("psqi")
    assert all(float(r[col]) == 1.0 for r in rows[1:])


def test_evaluate_too_few_windows(tmp_path, capsys):
    d = tmp_path / "small"
    assert run("synth", "--n-windows", 6, "--out", d) == 0
    assert run("evaluate", "--data", d, "--jobs", 1, "--out", tmp_path / "rep") == 2
    assert "5" in capsys.readouterr().err


def test_sweep_matrix(corpus, tmp_path):
    out = tmp_path / "sw"
    code = run("sweep", "--data", corpus, "--gamma-grid", 300, 25, "--beta-grid", 10, "--jobs", 1, "--out", out)
    assert code == 0
    rows = read_csv(out / "matrix.csv")
    assert rows[0] == ["gamma_db/beta_db", "10.0"]
    assert rows[1] == ["300.0", "infeasible"]
    meta = json.loads((out / "sweep.json").read_text())
    assert "prng" in json.dumps(meta).lower()


def test_features_and_perturb(corpus, tmp_path):
    feats = tmp_path / "f.csv"
    assert run("features", "--data", corpus, "--out", feats) == 0
    assert len(read_csv(feats)) == 41
    out = tmp_path / "p.csv"
    assert run("perturb", "--data", corpus, "--window", "synth_0003:0", "--out", out) == 0
    info = json.loads((tmp_path / "p.perturb.json").read_text())
    assert info["window_id"] == "synth_0003:0" and 0.0 <= info["score"] <= 1.0
    assert len(read_csv(out)) == 2501


def test_perturb_unknown_window(corpus, tmp_path):
    assert run("perturb", "--data", corpus, "--window", "nope:0", "--out", tmp_path / "p.csv") == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["score", "--bogus"],
        ["score"],
        ["frobnicate"],
        ["score", "--data", ".", "--task", "external", "--out", "x.csv"],
    ],
)
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as info:
        code = main(argv)
        raise SystemExit(code)
    assert info.value.code == 1


def test_missing_data_directory(tmp_path):
    assert run("score", "--data", tmp_path / "none", "--out", tmp_path / "s.csv") == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "psqi", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("synth", "score", "evaluate", "sweep", "features", "perturb"):
        assert cmd in proc.stdout
