"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeats 7] [--keypoints 1000]

Every kernel runs on the same inputs under both backends; outputs are
checked for equality before timings are reported.
"""

import argparse
import time

import numpy as np

from chromabin import _backend
from chromabin.imagery import PlanarImage, SmoothingConfig, to_gray
from chromabin.patterns import generate_pair_pattern, generate_triplet_pattern


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def cases(rng, n_keypoints):
    h, w = 640, 800
    planes = rng.integers(0, 256, (3, h, w), dtype=np.uint8)
    gray = np.ascontiguousarray(planes[0])
    kernel = SmoothingConfig().kernel_1d()
    pair = generate_pair_pattern("rgb", 512, seed=7)
    triplet = generate_triplet_pattern("rgb", 512, seed=7)
    xs = rng.integers(28, w - 28, n_keypoints).astype(np.int32)
    ys = rng.integers(28, h - 28, n_keypoints).astype(np.int32)
    queries = rng.integers(0, 2**63, (n_keypoints, 8), dtype=np.uint64)
    targets = rng.integers(0, 2**63, (n_keypoints, 8), dtype=np.uint64)
    return {
        "smooth 9x9 (one 800x640 plane)": lambda k: k.smooth_plane(gray, kernel),
        f"pair_bits rgb 512 x {n_keypoints}": lambda k: k.pair_bits(planes, xs, ys, pair.tests, 64),
        f"triplet_bits rgb 512 x {n_keypoints}": lambda k: k.triplet_bits(planes, xs, ys, triplet.triplets, 3, 64),
        f"match_nearest {n_keypoints} x {n_keypoints}": lambda k: k.match_nearest(queries, targets),
        "fast_scores (800x640)": lambda k: k.fast_scores(gray, 20),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=7)
    parser.add_argument("--keypoints", type=int, default=1000)
    args = parser.parse_args(argv)

    names = _backend.available()
    if "cython" not in names:
        print("compiled kernels are not built; only the numpy fallback is available")
    kernels = {name: _backend.load(name) for name in names}
    rng = np.random.default_rng(0)

    header = f"{'kernel':40s}" + "".join(f"{n:>12s}" for n in names)
    if len(names) == 2:
        header += f"{'speedup':>10s}"
    print(header)
    for label, fn in cases(rng, args.keypoints).items():
        outputs = {n: fn(k) for n, k in kernels.items()}
        if len(names) == 2 and not same(outputs["cython"], outputs["python"]):
            raise SystemExit(f"backends disagree on {label}")
        times = {n: best_of(lambda k=k: fn(k), args.repeats) for n, k in kernels.items()}
        line = f"{label:40s}" + "".join(f"{times[n] * 1e3:10.2f}ms" for n in names)
        if len(names) == 2:
            line += f"{times['python'] / times['cython']:9.1f}x"
        print(line)

    img = PlanarImage.from_array(np.moveaxis(rng.integers(0, 256, (3, 640, 800), dtype=np.uint8), 0, -1))
    print(f"{'to_gray (800x640, numpy)':40s}{best_of(lambda: to_gray(img), args.repeats) * 1e3:10.2f}ms")


if __name__ == "__main__":
    main()
