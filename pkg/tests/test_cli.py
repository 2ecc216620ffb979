import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from chromabin.cli import main
from chromabin.descriptors import load_descriptors
from chromabin.detect import load_keypoints
from chromabin.evaluation import Homography
from chromabin.imagery import PlanarImage, save_image
from chromabin.matching import load_matches
from chromabin.patterns import load_pattern


@pytest.fixture
def scene_file(tmp_path, astronaut):
    path = tmp_path / "scene.ppm"
    save_image(PlanarImage.from_array(astronaut.to_array()[100:300, 150:350]), path)
    return path


@pytest.fixture
def manifest(tmp_path, astronaut):
    """Two pairs: a shifted view and a featureless one that cannot be evaluated."""
    arr = astronaut.to_array()[60:300, 100:340]
    save_image(PlanarImage.from_array(arr), tmp_path / "a.ppm")
    save_image(PlanarImage.from_array(np.roll(arr, (3, -5), axis=(0, 1))), tmp_path / "b.ppm")
    Homography(np.array([[1, 0, -5.0], [0, 1, 3], [0, 0, 1]])).save(tmp_path / "H_ab")
    save_image(PlanarImage.from_array(np.full((120, 120, 3), 90, np.uint8)), tmp_path / "flat.ppm")
    Homography.identity().save(tmp_path / "H_id")
    good = tmp_path / "good.txt"
    good.write_text("shifted 1|2 a.ppm b.ppm H_ab\n")
    mixed = tmp_path / "mixed.txt"
    mixed.write_text("shifted 1|2 a.ppm b.ppm H_ab\nflat 1|1 flat.ppm flat.ppm H_id\n")
    return good, mixed


def test_gen_pattern_is_deterministic(tmp_path):
    args = ["gen-pattern", "--space", "ycbcr", "--bits", "128", "--seed", "5"]
    assert main(args + ["--out", str(tmp_path / "a.txt")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.txt")]) == 0
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()
    pattern = load_pattern(tmp_path / "a.txt")
    luma = pattern.tests[:, [2, 5]] == 0
    assert not np.any(luma.any(axis=1) & ~luma.all(axis=1))
    assert luma.all(axis=1).sum() == 64


def test_gen_triplet_pattern(tmp_path):
    assert main(["gen-pattern", "--kind", "triplet", "--space", "rgb", "--bits", "32", "--patch", "5",
                 "--out", str(tmp_path / "t.txt")]) == 0
    p = load_pattern(tmp_path / "t.txt")
    assert (p.kind, p.patch_size, p.n_d) == ("triplet", 5, 32)


def test_bad_bits_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["gen-pattern", "--bits", "0", "--out", str(tmp_path / "x")])
    assert exc.value.code == 2
    assert not (tmp_path / "x").exists()


def test_y_fraction_on_rgb_warns(tmp_path):
    with pytest.warns(UserWarning, match="ignored"):
        rc = main(["gen-pattern", "--space", "rgb", "--y-fraction", "0.3", "--out", str(tmp_path / "p")])
    assert rc == 0


def test_extract_and_match(tmp_path, scene_file):
    out = tmp_path / "d.bin"
    kps = tmp_path / "k.txt"
    assert main(["extract", "--image", str(scene_file), "--space", "rgb", "--bits", "256",
                 "--out", str(out), "--out-keypoints", str(kps)]) == 0
    descriptors = load_descriptors(out)
    keypoints = load_keypoints(kps)
    assert len(descriptors) == len(keypoints) > 20 and descriptors.n_d == 256
    assert main(["match", "--query", str(out), "--target", str(out), "--out", str(tmp_path / "m.csv")]) == 0
    matches = load_matches(tmp_path / "m.csv")
    assert all(m.best_index == m.query_index and m.distance == 0 for m in matches)


def test_extract_with_imported_keypoints(tmp_path, scene_file):
    (tmp_path / "in.txt").write_text("100 100\n50.4 60.6 3\n5 5\n")
    assert main(["extract", "--image", str(scene_file), "--keypoints", str(tmp_path / "in.txt"),
                 "--out", str(tmp_path / "d.bin"), "--out-keypoints", str(tmp_path / "k.txt")]) == 0
    assert [(k.x, k.y) for k in load_keypoints(tmp_path / "k.txt")] == [(100, 100), (50, 61)]
    assert len(load_descriptors(tmp_path / "d.bin")) == 2


def test_extract_all_in_margin_fails(tmp_path, scene_file, capsys):
    (tmp_path / "in.txt").write_text("1 1\n")
    rc = main(["extract", "--image", str(scene_file), "--keypoints", str(tmp_path / "in.txt"),
               "--out", str(tmp_path / "d.bin"), "--out-keypoints", str(tmp_path / "k.txt")])
    assert rc == 1
    assert "margin" in capsys.readouterr().err


def test_extract_constant_image(tmp_path, caplog):
    save_image(PlanarImage.from_array(np.full((80, 80), 50, np.uint8)), tmp_path / "c.pgm")
    rc = main(["extract", "--image", str(tmp_path / "c.pgm"), "--out", str(tmp_path / "d.bin"),
               "--out-keypoints", str(tmp_path / "k.txt")])
    assert rc == 0
    assert len(load_descriptors(tmp_path / "d.bin")) == 0
    assert "no keypoints" in caplog.text


def test_extract_with_pattern_file(tmp_path, scene_file):
    main(["gen-pattern", "--space", "ycbcr", "--bits", "64", "--out", str(tmp_path / "p.txt")])
    assert main(["extract", "--image", str(scene_file), "--pattern", str(tmp_path / "p.txt"),
                 "--out", str(tmp_path / "d.bin"), "--out-keypoints", str(tmp_path / "k.txt")]) == 0
    assert load_descriptors(tmp_path / "d.bin").n_d == 64


def test_missing_image(tmp_path, capsys):
    rc = main(["extract", "--image", str(tmp_path / "nope.ppm"), "--out", str(tmp_path / "d"),
               "--out-keypoints", str(tmp_path / "k")])
    assert rc == 1
    assert "error" in capsys.readouterr().err


def test_evaluate(tmp_path, manifest):
    good, _ = manifest
    out = tmp_path / "r.csv"
    rc = main(["evaluate", "--manifest", str(good), "--bits", "128", "--out-csv", str(out)])
    assert rc == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 6
    assert {(r["variant"], r["kind"]) for r in rows} == {
        (v, k) for v in ("gray", "rgb", "ycbcr") for k in ("pair", "triplet")
    }
    assert all(float(r["score"]) > 80 for r in rows)
    payload = json.loads(out.with_suffix(".json").read_text())
    assert payload["config"]["argv"]["bits"] == 128


def test_evaluate_partial_failure(tmp_path, manifest, capsys):
    _, mixed = manifest
    rc = main(["evaluate", "--manifest", str(mixed), "--bits", "64", "--kinds", "pair",
               "--out-csv", str(tmp_path / "r.csv")])
    assert rc == 2
    assert "flat 1|1" in capsys.readouterr().err
    assert len(list(csv.DictReader((tmp_path / "r.csv").open()))) == 3


def test_evaluate_invalid_path(tmp_path, capsys):
    rc = main(["evaluate", "--dataset", str(tmp_path / "missing"), "--out-csv", str(tmp_path / "r.csv")])
    assert rc == 1
    assert not (tmp_path / "r.csv").exists()


def test_evaluate_dataset_env(tmp_path, manifest, monkeypatch):
    monkeypatch.setenv("CHROMABIN_DATASET_ROOT", str(tmp_path / "nowhere"))
    rc = main(["evaluate", "--out-csv", str(tmp_path / "r.csv")])
    assert rc == 1


def test_sweep(tmp_path, manifest):
    good, _ = manifest
    out = tmp_path / "s.csv"
    rc = main(["sweep", "--manifest", str(good), "--kinds", "pair", "--auto-variants", "gray,ycbcr",
               "--sweep-bits", "64,256", "--out-csv", str(out)])
    assert rc == 0
    rows = list(csv.DictReader(out.open()))
    assert sorted((r["variant"], int(r["n_d"])) for r in rows) == [
        ("gray", 64), ("gray", 256), ("ycbcr", 64), ("ycbcr", 256)
    ]
    assert all(r["rgb_ri"] == "-" for r in rows)


def test_console_script(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "chromabin.cli", "gen-pattern", "--out", str(tmp_path / "p")],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "wrote pair pattern" in proc.stdout
