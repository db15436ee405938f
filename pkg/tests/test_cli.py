import subprocess
import sys
from importlib import resources

import pytest

from fsq.cache import CACHE_ENV
from fsq.cli import main
from fsq.io import load_fibers, read_scores
from fsq.lang import parse_query_text
from fsq.phantom import read_truth


@pytest.fixture(scope="module")
def shared_cache(tmp_path_factory):
    return tmp_path_factory.mktemp("cache")


@pytest.fixture(autouse=True)
def no_env_cache(monkeypatch):
    monkeypatch.delenv(CACHE_ENV, raising=False)


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def filter_args(ph, out, *extra):
    return ["filter", "--scene", ph / "phantom.scene", "--query", ph / "phantom.fq",
            "--fibers", ph / "fibers.fib", "--out", out / "kept.fib", "--scores", out / "scores.tsv", *extra]


def test_parse_corpus(capsys):
    path = resources.files("fsq") / "queries" / "L5.fq"
    code, out, _ = run(capsys, "parse", path)
    assert code == 0
    assert out.rstrip().endswith("# 9 clauses")
    assert len(parse_query_text(out).clauses) == 9
    code, ast, _ = run(capsys, "parse", path, "--dump-ast")
    assert code == 0 and ast.startswith("Query L5 (9 clauses)")


def test_parse_error_exit_2(capsys, tmp_path):
    bad = tmp_path / "bad.fq"
    bad.write_text("crossing(A)\nthen between(A)\n")
    code, out, err = run(capsys, "parse", bad)
    assert code == 2 and out == ""
    assert f"{bad}:2:6:" in err


def test_parse_missing_file_exit_1(capsys, tmp_path):
    code, _, err = run(capsys, "parse", tmp_path / "none.fq")
    assert code == 1 and "none.fq" in err


def test_landscape_cache_hit(capsys, phantom_dir, tmp_path):
    args = ["landscape", "--scene", phantom_dir / "phantom.scene", "--structure", "Piriformis",
            "--relation", "anterior_of", "--aperture", "60", "--margin", "1",
            "--cache-dir", tmp_path / "c"]
    code, out, _ = run(capsys, *args, "--out", tmp_path / "a.fvol")
    assert code == 0 and "cache miss" in out
    code, out, _ = run(capsys, *args, "--out", tmp_path / "b.fvol", "--figure", tmp_path / "b.png")
    assert code == 0 and "cache hit" in out
    assert (tmp_path / "a.fvol").read_bytes() == (tmp_path / "b.fvol").read_bytes()
    assert (tmp_path / "b.png").read_bytes()[:4] == b"\x89PNG"


def test_landscape_errors(capsys, phantom_dir, tmp_path):
    base = ["landscape", "--scene", phantom_dir / "phantom.scene", "--out", tmp_path / "x.fvol"]
    code, _, err = run(capsys, *base, "--structure", "Nope", "--relation", "near")
    assert code == 1 and "available:" in err
    code, _, err = run(capsys, *base, "--structure", "Piriformis", "--relation", "between")
    assert code == 1 and "takes 2" in err
    code, _, err = run(capsys, "landscape", "--scene", tmp_path / "none.scene", "--structure", "A",
                       "--relation", "near", "--out", tmp_path / "x.fvol")
    assert code == 1 and "cannot read scene" in err
    assert not (tmp_path / "x.fvol").exists()


def test_filter_phantom(capsys, phantom_dir, tmp_path, shared_cache):
    code, out, _ = run(capsys, *filter_args(phantom_dir, tmp_path, "--cache-dir", shared_cache,
                                            "--figure", tmp_path / "hist.png"))
    assert code == 0
    assert "accepted 20 of 50 fibers" in out
    rows = read_scores(tmp_path / "scores.tsv")
    assert len(rows) == 50
    truth = read_truth(phantom_dir / "ground_truth.tsv")
    kept = load_fibers(tmp_path / "kept.fib")
    assert {f.id for f in kept} == {i for i, (lab, _) in truth.items() if lab == "positive"}
    assert all(len(r["clause_degrees"]) == 3 for r in rows)
    assert (tmp_path / "hist.png").stat().st_size > 0


def test_filter_zero_accepted(capsys, caplog, phantom_dir, tmp_path, shared_cache):
    q = tmp_path / "none.fq"
    q.write_text("crossing(Sacrum)\n")
    args = filter_args(phantom_dir, tmp_path, "--cache-dir", shared_cache)
    args[args.index(phantom_dir / "phantom.fq")] = q
    code, out, _ = run(capsys, *args)
    assert code == 0 and "accepted 0 of 50" in out
    assert load_fibers(tmp_path / "kept.fib") == []
    assert "no loop" in caplog.text


def test_filter_threshold_flag(capsys, phantom_dir, tmp_path, shared_cache):
    code, out, _ = run(capsys, *filter_args(phantom_dir, tmp_path, "--cache-dir", shared_cache,
                                            "--threshold", "0"))
    assert code == 0 and "accepted 50 of 50" in out and "(threshold 0)" in out


def test_filter_errors(capsys, phantom_dir, tmp_path):
    bad_q = tmp_path / "bad.fq"
    bad_q.write_text("crossing(VertebralCanal) then\n")
    args = filter_args(phantom_dir, tmp_path)
    args[args.index(phantom_dir / "phantom.fq")] = bad_q
    code, _, err = run(capsys, *args)
    assert code == 2 and "bad.fq:2:1:" in err

    bad_f = tmp_path / "bad.fib"
    bad_f.write_text("FIB 1\nFIBER 1 1\n0 0 0\n")
    args = filter_args(phantom_dir, tmp_path, "--no-cache")
    args[args.index(phantom_dir / "fibers.fib")] = bad_f
    code, _, err = run(capsys, *args)
    assert code == 1 and "bad.fib:2" in err
    assert not (tmp_path / "scores.tsv").exists() and not (tmp_path / "kept.fib").exists()

    args = filter_args(phantom_dir, tmp_path, "--jobs", "0")
    code, _, err = run(capsys, *args)
    assert code == 1 and "--jobs" in err


def test_env_cache_and_no_cache(capsys, phantom_dir, tmp_path, monkeypatch):
    monkeypatch.setenv(CACHE_ENV, str(tmp_path / "envcache"))
    base = ["landscape", "--scene", phantom_dir / "phantom.scene", "--structure", "Obturator",
            "--relation", "near", "--out", tmp_path / "n.fvol"]
    assert run(capsys, *base)[0] == 0
    assert list((tmp_path / "envcache").glob("*.fvol"))
    code, out, _ = run(capsys, *base, "--no-cache")
    assert "cache disabled" in out


def test_phantom_command(capsys, tmp_path):
    code, out, _ = run(capsys, "phantom", "--seed", "3", "--out", tmp_path / "ph",
                       "--positives", "2", "--decoys", "3")
    assert code == 0 and "fibers" in out
    assert len(load_fibers(tmp_path / "ph" / "fibers.fib")) == 5
    code, _, err = run(capsys, "phantom", "--out", tmp_path / "x", "--decoys", "-1")
    assert code == 1 and "invalid phantom" in err


def test_module_entry_point(tmp_path):
    path = resources.files("fsq") / "queries" / "S3.fq"
    proc = subprocess.run([sys.executable, "-m", "fsq", "parse", str(path)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "# 9 clauses" in proc.stdout
