import numpy as np
import pytest

from chromabin.imagery import ColorSpace
from chromabin.patterns import (
    PairPattern,
    PatternError,
    TripletPattern,
    dumps_pattern,
    generate_pair_pattern,
    generate_triplet_pattern,
    load_pattern,
    load_triplet_arrangement,
    loads_pattern,
    regenerate,
    save_pattern,
)


def test_pair_determinism():
    a = generate_pair_pattern("gray", 512, 48, seed=7)
    b = generate_pair_pattern("gray", 512, 48, seed=7)
    assert a == b
    assert dumps_pattern(a) == dumps_pattern(b)
    assert a != generate_pair_pattern("gray", 512, 48, seed=8)


def test_spatial_std_matches_window_over_five():
    p = generate_pair_pattern("rgb", 100_000, 48, seed=1)
    coords = p.tests[:, [0, 1, 3, 4]].astype(float)
    std = coords.std(axis=0)
    assert np.all(np.abs(std - 9.6) <= 0.05 * 9.6)
    assert np.all(np.abs(coords.mean(axis=0)) <= 0.5)


def test_ycbcr_split_counts():
    p = generate_pair_pattern("ycbcr", 512, y_fraction=0.5, seed=3)
    channels = p.tests[:, [2, 5]]
    luma = (channels == 0).all(axis=1)
    chroma = (channels > 0).all(axis=1)
    assert luma.sum() == 256 and chroma.sum() == 256
    # the luma tests are spread through the list, not bunched at the front
    assert 0 < luma[:256].sum() < 256


def test_ycbcr_fraction_floor():
    p = generate_pair_pattern("ycbcr", 10, y_fraction=0.33, seed=0)
    assert (p.tests[:, [2, 5]] == 0).all(axis=1).sum() == 3


def test_rgb_channel_frequencies():
    p = generate_pair_pattern("rgb", 50_000, seed=11)
    channels = p.tests[:, [2, 5]].ravel()
    freq = np.bincount(channels, minlength=3) / channels.size
    assert np.all(np.abs(freq - 1 / 3) <= 0.02)
    # independent per endpoint: about a third of pairs share a channel
    same = (p.tests[:, 2] == p.tests[:, 5]).mean()
    assert abs(same - 1 / 3) < 0.02


def test_gray_channels_zero():
    assert np.all(generate_pair_pattern("gray", 64, seed=0).tests[:, [2, 5]] == 0)


def test_pair_bounds_and_window():
    p = generate_pair_pattern("rgb", 20_000, 32, seed=5)
    assert np.abs(p.spatial()).max() <= 16


def test_same_seed_shares_spatial_layout_across_spaces():
    layouts = [generate_pair_pattern(s, 256, seed=9).spatial() for s in ("gray", "rgb", "ycbcr")]
    assert all(np.array_equal(layouts[0], other) for other in layouts[1:])
    tri = [generate_triplet_pattern(s, 64, seed=9).spatial() for s in ("gray", "rgb", "ycbcr")]
    assert all(np.array_equal(tri[0], other) for other in tri[1:])


@pytest.mark.parametrize("kwargs", [dict(n_d=0), dict(window=6), dict(y_fraction=1.5), dict(y_fraction=-0.1)])
def test_pair_generation_errors(kwargs):
    params = dict(space="ycbcr", n_d=8, window=48, seed=0)
    params.update(kwargs)
    with pytest.raises(PatternError):
        generate_pair_pattern(**params)


def test_y_fraction_ignored_with_warning():
    with pytest.warns(UserWarning, match="ignored"):
        p = generate_pair_pattern("rgb", 8, seed=0, y_fraction=0.2)
    assert p.y_fraction is None


def test_triplet_determinism_and_bounds():
    a = generate_triplet_pattern("rgb", 2000, 48, 7, seed=4)
    assert a == generate_triplet_pattern("rgb", 2000, 48, 7, seed=4)
    assert np.abs(a.spatial()).max() <= 21


def test_triplet_ycbcr_split():
    p = generate_triplet_pattern("ycbcr", 64, 48, 7, seed=2, y_fraction=0.5)
    channels = p.triplets[:, [2, 5, 8]]
    assert (channels == 0).all(axis=1).sum() == 32
    assert (channels > 0).all(axis=1).sum() == 32


@pytest.mark.parametrize("patch", [48, 50, 4])
def test_triplet_patch_errors(patch):
    with pytest.raises(PatternError):
        generate_triplet_pattern("gray", 8, 48, patch, seed=0)


def test_channel_purity_exhaustive():
    for seed in range(20):
        for yf in (0.0, 0.25, 0.5, 0.9, 1.0):
            p = generate_pair_pattern("ycbcr", 300, seed=seed, y_fraction=yf)
            luma = p.tests[:, [2, 5]] == 0
            assert not np.any(luma.any(axis=1) & ~luma.all(axis=1))
            t = generate_triplet_pattern("ycbcr", 100, seed=seed, y_fraction=yf)
            luma = t.triplets[:, [2, 5, 8]] == 0
            assert not np.any(luma.any(axis=1) & ~luma.all(axis=1))


def test_mixed_ycbcr_rejected():
    with pytest.raises(PatternError, match="mixes"):
        PairPattern(ColorSpace.YCBCR, 48, [[0, 0, 0, 1, 1, 1]], seed=0)


def test_out_of_window_rejected():
    with pytest.raises(PatternError):
        PairPattern(ColorSpace.GRAY, 48, [[25, 0, 0, 0, 0, 0]], seed=0)
    with pytest.raises(PatternError):
        TripletPattern(ColorSpace.GRAY, 48, 7, [[22, 0, 0, 0, 0, 0, 0, 0, 0]], seed=0)


# --- arrangement import -----------------------------------------------------------

def test_arrangement_gray(tmp_path):
    path = tmp_path / "arr.txt"
    path.write_text("0 0 5 5 -5 -5\n")
    p = load_triplet_arrangement(path, "gray", 48, 7)
    assert p.triplets.tolist() == [[0, 0, 0, 5, 5, 0, -5, -5, 0]]


def test_arrangement_bounds(tmp_path):
    path = tmp_path / "arr.txt"
    path.write_text("0 0 30 30 0 0\n")
    with pytest.raises(PatternError, match="21"):
        load_triplet_arrangement(path, "gray", 48, 7)


def test_arrangement_empty_and_malformed(tmp_path):
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    with pytest.raises(PatternError, match="empty"):
        load_triplet_arrangement(empty)
    bad = tmp_path / "bad.txt"
    bad.write_text("1 2 3\n")
    with pytest.raises(PatternError):
        load_triplet_arrangement(bad)


def test_arrangement_color_channels(tmp_path):
    path = tmp_path / "arr.txt"
    path.write_text("\n".join("1 2 3 4 -5 -6" for _ in range(200)))
    p = load_triplet_arrangement(path, "ycbcr", seed=3, y_fraction=0.5)
    assert (p.triplets[:, [2, 5, 8]] == 0).all(axis=1).sum() == 100
    assert np.all(p.spatial() == [1, 2, 3, 4, -5, -6])
    with pytest.raises(PatternError):
        regenerate(p, n_d=10)


# --- serialization ------------------------------------------------------------------

@pytest.mark.parametrize("pattern", [
    generate_pair_pattern("gray", 33, seed=1),
    generate_pair_pattern("rgb", 64, 40, seed=2),
    generate_pair_pattern("ycbcr", 17, seed=3, y_fraction=0.3),
    generate_triplet_pattern("ycbcr", 12, 48, 5, seed=4),
])
def test_round_trip(tmp_path, pattern):
    save_pattern(pattern, tmp_path / "p.txt")
    loaded = load_pattern(tmp_path / "p.txt")
    assert loaded == pattern
    assert type(loaded) is type(pattern)


def test_unknown_space_tag():
    text = dumps_pattern(generate_pair_pattern("gray", 4, seed=0)).replace("space gray", "space hsv")
    with pytest.raises(PatternError, match="space"):
        loads_pattern(text)


def test_count_mismatch():
    text = dumps_pattern(generate_pair_pattern("gray", 4, seed=0)).replace("n_d 4", "n_d 5")
    with pytest.raises(PatternError, match="n_d"):
        loads_pattern(text)


def test_version_and_checksum():
    text = dumps_pattern(generate_pair_pattern("gray", 4, seed=0))
    with pytest.raises(PatternError, match="version"):
        loads_pattern(text.replace("version 1", "version 9"))
    lines = text.splitlines()
    lines[-1] = "0 0 0 1 1 0"
    with pytest.raises(PatternError, match="checksum"):
        loads_pattern("\n".join(lines) + "\n")


def test_regenerate_changes_only_requested_parameter():
    p = generate_triplet_pattern("ycbcr", 64, 48, 7, seed=5, y_fraction=0.25)
    assert regenerate(p) == p
    q = regenerate(p, n_d=128)
    assert q == generate_triplet_pattern("ycbcr", 128, 48, 7, seed=5, y_fraction=0.25)
    r = regenerate(p, patch_size=9)
    assert r.patch_size == 9 and np.abs(r.spatial()).max() <= 20
