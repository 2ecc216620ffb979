"""Pure numpy kernels, bit-for-bit equivalent to the compiled ``_kernels``.

Used when the Cython extension is not built. Every function here mirrors
the signature of its compiled twin; floating-point accumulation order in
``smooth_plane`` matches the C loops so both backends round identically.
"""

from __future__ import annotations

import numpy as np

_KEYPOINT_CHUNK = 256
_TRIPLET_CHUNK = 16
_QUERY_CHUNK = 64

# Bresenham circle of radius 3, clockwise from 12 o'clock, as (dx, dy)
CIRCLE = (
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
)
ARC = 9


def smooth_plane(plane, kernel):
    """Separable smoothing with edge replication; ``kernel`` must be symmetric.

    Mirrors the compiled kernel's operation order so both round identically.
    """
    plane = np.asarray(plane, dtype=np.int32)
    kernel = np.asarray(kernel, dtype=np.float64)
    r = kernel.size // 2
    n = kernel.size
    h, w = plane.shape

    rows = np.pad(plane, ((r, r), (0, 0)), mode="edge")
    vert = np.zeros((h, w))
    for k in range(r):
        vert += kernel[k] * (rows[k:k + h] + rows[n - 1 - k:n - 1 - k + h]).astype(np.float64)
    vert += kernel[r] * plane.astype(np.float64)

    cols = np.pad(vert, ((0, 0), (r, r)), mode="edge")
    acc = np.zeros((h, w))
    for k in range(r):
        acc += kernel[k] * (cols[:, k:k + w] + cols[:, n - 1 - k:n - 1 - k + w])
    acc = acc + kernel[r] * cols[:, r:r + w]
    return np.clip(np.floor(acc + 0.5), 0, 255).astype(np.uint8)


def _pack(bits: np.ndarray, row_bytes: int) -> np.ndarray:
    packed = np.packbits(bits, axis=1, bitorder="little")
    out = np.zeros((bits.shape[0], row_bytes), dtype=np.uint8)
    out[:, :packed.shape[1]] = packed
    return out


def pair_bits(planes, xs, ys, tests, row_bytes):
    planes = np.asarray(planes)
    xs = np.asarray(xs, dtype=np.intp)[:, None]
    ys = np.asarray(ys, dtype=np.intp)[:, None]
    t = np.asarray(tests, dtype=np.intp)
    x1, y1, c1, x2, y2, c2 = (t[:, i][None, :] for i in range(6))
    bits = np.empty((xs.shape[0], t.shape[0]), dtype=bool)
    for lo in range(0, xs.shape[0], _KEYPOINT_CHUNK):
        sl = slice(lo, lo + _KEYPOINT_CHUNK)
        first = planes[c1, ys[sl] + y1, xs[sl] + x1]
        second = planes[c2, ys[sl] + y2, xs[sl] + x2]
        bits[sl] = first < second
    return _pack(bits, row_bytes)


def triplet_bits(planes, xs, ys, triplets, half, row_bytes):
    planes = np.asarray(planes)
    xs = np.asarray(xs, dtype=np.intp)
    ys = np.asarray(ys, dtype=np.intp)
    t = np.asarray(triplets, dtype=np.intp)
    grid = np.arange(-half, half + 1)
    oy = np.repeat(grid, grid.size)[None, None, :]
    ox = np.tile(grid, grid.size)[None, None, :]

    def patches(col, sl):
        dx = t[:, col][None, :, None]
        dy = t[:, col + 1][None, :, None]
        ch = t[:, col + 2][None, :, None]
        py = ys[sl][:, None, None] + dy + oy
        px = xs[sl][:, None, None] + dx + ox
        return planes[ch, py, px].astype(np.int64)

    bits = np.empty((xs.shape[0], t.shape[0]), dtype=bool)
    for lo in range(0, xs.shape[0], _TRIPLET_CHUNK):
        sl = slice(lo, lo + _TRIPLET_CHUNK)
        anchor = patches(0, sl)
        ssd1 = ((anchor - patches(3, sl)) ** 2).sum(axis=2)
        ssd2 = ((anchor - patches(6, sl)) ** 2).sum(axis=2)
        bits[sl] = ssd1 > ssd2
    return _pack(bits, row_bytes)


def match_nearest(queries, targets):
    queries = np.asarray(queries, dtype=np.uint64)
    targets = np.asarray(targets, dtype=np.uint64)
    m, n = queries.shape[0], targets.shape[0]
    best = np.empty(m, dtype=np.int64)
    dist = np.empty(m, dtype=np.int64)
    second = np.empty(m, dtype=np.int64)
    rows = np.arange(m)
    for lo in range(0, m, _QUERY_CHUNK):
        q = queries[lo:lo + _QUERY_CHUNK]
        d = np.bitwise_count(q[:, None, :] ^ targets[None, :, :]).sum(axis=2, dtype=np.int64)
        idx = np.argmin(d, axis=1)
        r = rows[:q.shape[0]]
        best[lo:lo + q.shape[0]] = idx
        dist[lo:lo + q.shape[0]] = d[r, idx]
        if n > 1:
            d[r, idx] = np.iinfo(np.int64).max
            second[lo:lo + q.shape[0]] = d.min(axis=1)
        else:
            second[lo:lo + q.shape[0]] = d[r, idx]
    return best, dist, second


def fast_scores(img, threshold):
    img = np.asarray(img, dtype=np.int32)
    h, w = img.shape
    scores = np.zeros((h, w), dtype=np.int32)
    if h < 7 or w < 7:
        return scores
    center = img[3:h - 3, 3:w - 3]
    ring = np.stack([img[3 + dy:h - 3 + dy, 3 + dx:w - 3 + dx] for dx, dy in CIRCLE])
    diff = ring - center[None]
    total = np.zeros(center.shape, dtype=np.int32)
    n = len(CIRCLE)
    for flags, magnitude in ((diff > threshold, diff), (diff < -threshold, -diff)):
        windows = np.ones((n,) + center.shape, dtype=bool)
        for s in range(n):
            for i in range(ARC):
                windows[s] &= flags[(s + i) % n]
        covered = np.zeros_like(flags)
        for s in range(n):
            for i in range(ARC):
                covered[(s + i) % n] |= windows[s]
        total += np.where(covered, magnitude, 0).sum(axis=0, dtype=np.int32)
    scores[3:h - 3, 3:w - 3] = total
    return scores
