import json

import numpy as np
import pytest

from cephforge.cli import main
from cephforge.schema import read_landmarks, write_landmarks


@pytest.fixture
def pool_dir(pool, tmp_path):
    d = tmp_path / "pool"
    d.mkdir()
    for i, ls in enumerate(pool[:10]):
        write_landmarks(ls, d / f"p{i:02d}.json")
    return d


def test_synth_pool_and_augment(tmp_path, capsys):
    assert main(["synth-pool", "--count", "5", "--out", str(tmp_path / "pool")]) == 0
    assert main(["augment", "--pool", str(tmp_path / "pool"), "--count", "6", "--seed", "3",
                 "--out", str(tmp_path / "aug"), "--constraints", "SNA",
                 "--anatomical-min", "1", "--anatomical-max", "1"]) == 0
    prov = [json.loads(l) for l in (tmp_path / "aug" / "provenance.jsonl").read_text().splitlines()]
    assert len(prov) == 6 and all(p["applied_constraints"][0][0] == "SNA" for p in prov)


def test_rasterize_and_stub(pool_dir, tmp_path):
    assert main(["rasterize", "--in", str(pool_dir), "--size", "64", "--out", str(tmp_path / "r")]) == 0
    assert len(list((tmp_path / "r").glob("*.png"))) == 10
    assert main(["stub-render", "--in", str(pool_dir / "p00.json"), "--size", "64", "--out", str(tmp_path / "s")]) == 0
    assert (tmp_path / "s" / "p00.png").is_file()


def test_prompts_stdout(capsys):
    assert main(["prompts", "--count", "3", "--seed", "1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 3 and all(l.count(",") >= 1 for l in lines)


def test_bundle_verify_split(pool_dir, tmp_path, capsys):
    out = tmp_path / "b"
    assert main(["bundle", "--pool", str(pool_dir), "--count", "4", "--size", "64", "--out", str(out)]) == 0
    assert main(["verify-manifest", str(out / "manifest.jsonl"), "--size", "64"]) == 0
    assert "4 records, 0 defects" in capsys.readouterr().out
    assert main(["split", "--manifest", str(out / "manifest.jsonl"), "--sizes", "2,1,1"]) == 0
    split = json.loads(capsys.readouterr().out)
    assert sorted(map(len, split.values())) == [1, 1, 2]


def test_verify_fails_with_exit_1(pool_dir, tmp_path):
    out = tmp_path / "b"
    main(["bundle", "--pool", str(pool_dir), "--count", "2", "--size", "64", "--out", str(out)])
    assert main(["verify-manifest", str(out / "manifest.jsonl"), "--size", "512"]) == 1


def test_evaluate_with_baseline(pool_dir, tmp_path, capsys):
    pred = tmp_path / "pred"
    pred.mkdir()
    for p in pool_dir.iterdir():
        ls = read_landmarks(p)
        write_landmarks(ls.replace_points(ls.points + [10.0, 0.0]), pred / p.name)
    rep = tmp_path / "rep.json"
    assert main(["evaluate", "--pred", str(pool_dir), "--gt", str(pool_dir), "--out", str(rep)]) == 0
    assert json.loads(rep.read_text())["mre_mm"] == 0.0
    assert main(["evaluate", "--pred", str(pred), "--gt", str(pool_dir), "--baseline", str(rep), "--by-tag"]) == 0
    out = capsys.readouterr().out
    assert "MRE ± SD (mm)" in out and "MRE (mm)" in out and "(+" in out


def test_exit_codes(tmp_path, pool_dir, monkeypatch):
    assert main(["bogus"]) == 3
    assert main(["prompts", "--count", "0"]) == 3
    assert main(["augment", "--pool", str(tmp_path / "missing"), "--count", "1", "--out", str(tmp_path / "o")]) == 2
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["augment", "--pool", str(empty), "--count", "1", "--out", str(tmp_path / "o")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["augment", "--pool", str(pool_dir), "--count", "1", "--out", str(tmp_path / "o"), "--schema", str(bad)]) == 3
    monkeypatch.setenv("CEPHFORGE_SCHEMA", str(bad))
    assert main(["rasterize", "--in", str(pool_dir), "--out", str(tmp_path / "r")]) == 3
