import numpy as np
import pytest

from chromabin.descriptors import Keypoint
from chromabin.detect import DetectorConfig, detect_fast, load_keypoints, save_keypoints
from chromabin.imagery import ImageError, PlanarImage

from oracles import brute_fast


def gray(arr):
    return PlanarImage.from_array(np.asarray(arr, dtype=np.uint8))


def synthetic(rng, size):
    """Blocky scenes with corners, plus mild noise."""
    h, w = size
    img = np.full((h, w), rng.integers(40, 200), dtype=np.int32)
    for _ in range(rng.integers(2, 6)):
        y0, x0 = rng.integers(0, h - 8), rng.integers(0, w - 8)
        y1, x1 = y0 + rng.integers(5, h // 2), x0 + rng.integers(5, w // 2)
        img[y0:y1, x0:x1] = rng.integers(0, 256)
    img += rng.integers(-6, 7, img.shape)
    return img.clip(0, 255).astype(np.uint8)


def test_constant_image_has_no_corners(backend):
    assert detect_fast(gray(np.full((40, 40), 128))) == []


def test_dark_square_corners(backend):
    arr = np.full((60, 60), 200, np.uint8)
    arr[20:40, 20:40] = 30
    kps = detect_fast(gray(arr))
    corners = [(20, 20), (39, 20), (20, 39), (39, 39)]
    assert len(kps) == 4
    for cx, cy in corners:
        assert any(abs(kp.x - cx) <= 1 and abs(kp.y - cy) <= 1 for kp in kps)


def test_max_keypoints_keeps_strongest(backend):
    arr = np.full((60, 60), 200, np.uint8)
    arr[20:40, 20:40] = 30
    all_kps = detect_fast(gray(arr))
    two = detect_fast(gray(arr), DetectorConfig(max_keypoints=2))
    assert two == all_kps[:2]
    assert two[0].response >= two[1].response


@pytest.mark.parametrize("seed", range(10))
def test_matches_brute_force(backend, seed):
    rng = np.random.default_rng(seed)
    size = (int(rng.integers(20, 65)), int(rng.integers(20, 65)))
    arr = synthetic(rng, size)
    cfg = DetectorConfig(threshold=int(rng.integers(10, 40)), max_keypoints=50, nms_radius=int(rng.integers(0, 4)))
    got = [(kp.x, kp.y, int(kp.response)) for kp in detect_fast(gray(arr), cfg)]
    assert got == brute_fast(arr, cfg.threshold, cfg.nms_radius, cfg.max_keypoints)


def test_contrast_shift_covariance(backend, rng):
    arr = synthetic(rng, (64, 64)) // 2 + 40
    base = detect_fast(gray(arr))
    shifted = detect_fast(gray(arr + 30))
    assert base == shifted
    assert base


def test_translation_covariance(backend, rng):
    arr = synthetic(rng, (64, 64))
    base = {(kp.x, kp.y) for kp in detect_fast(gray(arr), DetectorConfig(nms_radius=0))}
    moved = {(kp.x - 5, kp.y - 3) for kp in detect_fast(gray(np.pad(arr, ((3, 0), (5, 0)), mode="edge")),
                                                          DetectorConfig(nms_radius=0))}
    interior = {(x, y) for x, y in base if 8 <= x < 56 and 8 <= y < 56}
    assert interior <= moved


def test_rejects_color_and_tiny_images():
    with pytest.raises(ImageError):
        detect_fast(PlanarImage.from_array(np.zeros((20, 20, 3), np.uint8)))
    with pytest.raises(ImageError):
        detect_fast(gray(np.zeros((6, 30))))


def test_config_validation():
    for bad in (dict(threshold=0), dict(max_keypoints=0), dict(nms_radius=-1)):
        with pytest.raises(ValueError):
            DetectorConfig(**bad)


def test_keypoint_io(tmp_path):
    kps = [Keypoint(3, 4, 120.0), Keypoint(10, 2, 7.5)]
    save_keypoints(kps, tmp_path / "k.txt")
    assert load_keypoints(tmp_path / "k.txt") == kps


def test_keypoint_import_rounds(tmp_path):
    (tmp_path / "k.txt").write_text("# x y\n3.5 4.49\n\n10 2 9\n")
    assert load_keypoints(tmp_path / "k.txt") == [Keypoint(4, 4, 0.0), Keypoint(10, 2, 9.0)]
    (tmp_path / "bad.txt").write_text("1\n")
    with pytest.raises(ValueError):
        load_keypoints(tmp_path / "bad.txt")
