# cython: language_level=3
"""Compiled kernels: smoothing, pair/triplet tests, popcount matching, FAST scoring.

Signatures and results match ``chromabin._fallback`` exactly.
"""

import numpy as np

from libc.stdint cimport int32_t, int64_t, uint8_t, uint64_t


cdef extern from *:
    """
    static inline int cb_popcount64(unsigned long long x) {
    #if defined(__GNUC__) || defined(__clang__)
        return __builtin_popcountll(x);
    #else
        x = x - ((x >> 1) & 0x5555555555555555ULL);
        x = (x & 0x3333333333333333ULL) + ((x >> 2) & 0x3333333333333333ULL);
        x = (x + (x >> 4)) & 0x0F0F0F0F0F0F0F0FULL;
        return (int)((x * 0x0101010101010101ULL) >> 56);
    #endif
    }
    """
    int cb_popcount64(unsigned long long x) nogil


cdef extern from *:
    """
    #include <stdint.h>
    #include <stddef.h>
    #if defined(__GNUC__) && !defined(__clang__) && defined(__x86_64__) && defined(__linux__)
    #define CB_CLONES __attribute__((target_clones("avx2", "default")))
    #else
    #define CB_CLONES
    #endif

    static inline ptrdiff_t cb_clamp(ptrdiff_t v, ptrdiff_t hi) {
        return v < 0 ? 0 : (v > hi ? hi : v);
    }

    /* Exact reference for one pixel: vertical pass from the uint8 rows, then
       horizontal. Mirrored taps are summed before the multiply; sums run k
       ascending with the centre tap last. The numpy backend uses this order. */
    static double cb_column(const uint8_t *plane, ptrdiff_t h, ptrdiff_t w, const double *kernel,
                            ptrdiff_t r, ptrdiff_t y, ptrdiff_t x) {
        double s = 0.0;
        for (ptrdiff_t k = 0; k < r; k++)
            s = s + kernel[k] * (double)((int)plane[cb_clamp(y + k - r, h - 1) * w + x]
                                         + (int)plane[cb_clamp(y + r - k, h - 1) * w + x]);
        return s + kernel[r] * (double)plane[y * w + x];
    }

    static uint8_t cb_exact(const uint8_t *plane, ptrdiff_t h, ptrdiff_t w, const double *kernel,
                            ptrdiff_t n, ptrdiff_t y, ptrdiff_t x) {
        ptrdiff_t r = n / 2;
        double s = 0.0;
        for (ptrdiff_t k = 0; k < r; k++)
            s = s + kernel[k] * (cb_column(plane, h, w, kernel, r, y, cb_clamp(x + k - r, w - 1))
                                 + cb_column(plane, h, w, kernel, r, y, cb_clamp(x + r - k, w - 1)));
        double v = s + kernel[r] * cb_column(plane, h, w, kernel, r, y, x) + 0.5;
        int iv = v > 0.0 ? (int)v : 0;
        return (uint8_t)(iv < 255 ? iv : 255);
    }

    /* Same arithmetic in float32. Its error stays below 5e-4 for 8-bit input,
       so only pixels landing within CB_TIE of a rounding step can round
       differently; those are recomputed with cb_exact. */
    #define CB_TIE 2e-3f
    #define CB_MAX_RADIUS 63

    #if defined(__GNUC__)
    #define CB_INLINE static inline __attribute__((always_inline))
    #else
    #define CB_INLINE static inline
    #endif

    CB_INLINE void cb_smooth_impl(const uint8_t *plane, ptrdiff_t h, ptrdiff_t w,
                                  const double *kernel, const ptrdiff_t r,
                                  float *restrict padded, uint8_t *restrict near, uint8_t *out) {
        const ptrdiff_t n = 2 * r + 1;
        float kf[CB_MAX_RADIUS + 1];
        const uint8_t *top[CB_MAX_RADIUS], *bottom[CB_MAX_RADIUS];
        for (ptrdiff_t k = 0; k <= r; k++)
            kf[k] = (float)kernel[k];
        const float wc = kf[r];
        float *restrict mid = padded + r;
        for (ptrdiff_t y = 0; y < h; y++) {
            for (ptrdiff_t k = 0; k < r; k++) {
                top[k] = plane + cb_clamp(y + k - r, h - 1) * w;
                bottom[k] = plane + cb_clamp(y + r - k, h - 1) * w;
            }
            const uint8_t *row = plane + y * w;
            for (ptrdiff_t x = 0; x < w; x++) {
                float s = 0.0f;
                for (ptrdiff_t k = 0; k < r; k++)
                    s = s + kf[k] * (float)((int)top[k][x] + (int)bottom[k][x]);
                mid[x] = s + wc * (float)row[x];
            }
            for (ptrdiff_t x = 0; x < r; x++) {
                padded[x] = mid[0];
                mid[w + x] = mid[w - 1];
            }
            uint8_t *dst = out + y * w;
            int any = 0;
            for (ptrdiff_t x = 0; x < w; x++) {
                float s = 0.0f;
                for (ptrdiff_t k = 0; k < r; k++)
                    s = s + kf[k] * (padded[x + k] + padded[x + n - 1 - k]);
                /* weights and samples are non-negative, so v >= 0.5 and truncation is floor */
                float v = s + wc * mid[x] + 0.5f;
                int iv = (int)v;
                float frac = v - (float)iv;
                int flag = (frac < CB_TIE) | (frac > 1.0f - CB_TIE);
                near[x] = (uint8_t)flag;
                any |= flag;
                iv = iv > 255 ? 255 : iv;
                dst[x] = (uint8_t)iv;
            }
            if (any)
                for (ptrdiff_t x = 0; x < w; x++)
                    if (near[x])
                        dst[x] = cb_exact(plane, h, w, kernel, n, y, x);
        }
    }

    /* kernels up to 17 taps get copies with the tap loops fully unrolled */
    #define CB_FIXED(R) \
        CB_CLONES static void cb_smooth_r##R(const uint8_t *plane, ptrdiff_t h, ptrdiff_t w, \
                                             const double *kernel, float *restrict padded, \
                                             uint8_t *restrict near, uint8_t *out) { \
            cb_smooth_impl(plane, h, w, kernel, R, padded, near, out); \
        }
    CB_FIXED(1) CB_FIXED(2) CB_FIXED(3) CB_FIXED(4) CB_FIXED(5) CB_FIXED(6) CB_FIXED(7) CB_FIXED(8)

    CB_CLONES
    static void cb_smooth_any(const uint8_t *plane, ptrdiff_t h, ptrdiff_t w, const double *kernel,
                              ptrdiff_t r, float *restrict padded, uint8_t *restrict near, uint8_t *out) {
        cb_smooth_impl(plane, h, w, kernel, r, padded, near, out);
    }

    static void cb_smooth(const uint8_t *plane, ptrdiff_t h, ptrdiff_t w, const double *kernel,
                          ptrdiff_t n, float *padded, uint8_t *near, uint8_t *out) {
        switch (n / 2) {
        case 0: cb_smooth_any(plane, h, w, kernel, 0, padded, near, out); break;
        case 1: cb_smooth_r1(plane, h, w, kernel, padded, near, out); break;
        case 2: cb_smooth_r2(plane, h, w, kernel, padded, near, out); break;
        case 3: cb_smooth_r3(plane, h, w, kernel, padded, near, out); break;
        case 4: cb_smooth_r4(plane, h, w, kernel, padded, near, out); break;
        case 5: cb_smooth_r5(plane, h, w, kernel, padded, near, out); break;
        case 6: cb_smooth_r6(plane, h, w, kernel, padded, near, out); break;
        case 7: cb_smooth_r7(plane, h, w, kernel, padded, near, out); break;
        case 8: cb_smooth_r8(plane, h, w, kernel, padded, near, out); break;
        default: cb_smooth_any(plane, h, w, kernel, n / 2, padded, near, out);
        }
    }
    """
    void cb_smooth(const uint8_t *plane, Py_ssize_t h, Py_ssize_t w, const double *kernel, Py_ssize_t n,
                   float *padded, uint8_t *near, uint8_t *out) nogil


cdef int CIRCLE_X[16]
cdef int CIRCLE_Y[16]
CIRCLE_X[:] = [0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3, -3, -3, -2, -1]
CIRCLE_Y[:] = [-3, -3, -2, -1, 0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3]
cdef enum:
    ARC_MASK = 0x1FF  # nine contiguous circle pixels


cdef inline Py_ssize_t _clamp(Py_ssize_t v, Py_ssize_t hi) nogil:
    if v < 0:
        return 0
    if v > hi:
        return hi
    return v


def smooth_plane(const uint8_t[:, ::1] plane, const double[::1] kernel):
    """Separable smoothing with edge replication; ``kernel`` must be symmetric with odd length."""
    cdef Py_ssize_t h = plane.shape[0], w = plane.shape[1]
    cdef Py_ssize_t n = kernel.shape[0]
    if n % 2 == 0 or n > 127:
        raise ValueError(f"kernel must have an odd length of at most 127 taps, got {n}")
    padded_arr = np.empty(w + n, dtype=np.float32)
    near_arr = np.empty(w, dtype=np.uint8)
    out_arr = np.empty((h, w), dtype=np.uint8)
    cdef float[::1] padded = padded_arr
    cdef uint8_t[::1] near = near_arr
    cdef uint8_t[:, ::1] out = out_arr
    if h == 0 or w == 0:
        return out_arr
    with nogil:
        cb_smooth(&plane[0, 0], h, w, &kernel[0], n, &padded[0], &near[0], &out[0, 0])
    return out_arr


def pair_bits(const uint8_t[:, :, ::1] planes, const int32_t[::1] xs, const int32_t[::1] ys,
              const int32_t[:, ::1] tests, Py_ssize_t row_bytes):
    cdef Py_ssize_t nk = xs.shape[0], nt = tests.shape[0]
    cdef Py_ssize_t h = planes.shape[1], w = planes.shape[2]
    cdef Py_ssize_t i, j, bit
    out_arr = np.zeros((nk, row_bytes), dtype=np.uint8)
    if nk == 0 or nt == 0:
        return out_arr
    cdef uint8_t[:, ::1] out = out_arr
    # flat offsets of both endpoints relative to the keypoint pixel in plane 0
    offsets_arr = np.empty((nt, 2), dtype=np.intp)
    cdef Py_ssize_t[:, ::1] offsets = offsets_arr
    for j in range(nt):
        offsets[j, 0] = (tests[j, 2] * h + tests[j, 1]) * w + tests[j, 0]
        offsets[j, 1] = (tests[j, 5] * h + tests[j, 4]) * w + tests[j, 3]
    cdef const uint8_t *base = &planes[0, 0, 0]
    cdef const uint8_t *p
    cdef uint8_t byte

    with nogil:
        for i in range(nk):
            p = base + ys[i] * w + xs[i]
            j = 0
            while j < nt:
                byte = 0
                bit = 0
                while bit < 8 and j < nt:
                    byte |= <uint8_t>((p[offsets[j, 0]] < p[offsets[j, 1]]) << bit)
                    bit += 1
                    j += 1
                out[i, (j - 1) >> 3] = byte
    return out_arr


cdef inline int64_t _ssd(const uint8_t[:, :, ::1] planes,
                         Py_ssize_t ca, Py_ssize_t ya, Py_ssize_t xa,
                         Py_ssize_t cb, Py_ssize_t yb, Py_ssize_t xb,
                         Py_ssize_t half) nogil:
    cdef int64_t total = 0
    cdef int32_t d
    cdef Py_ssize_t u, v
    for v in range(-half, half + 1):
        for u in range(-half, half + 1):
            d = <int32_t>planes[ca, ya + v, xa + u] - <int32_t>planes[cb, yb + v, xb + u]
            total += d * d
    return total


def triplet_bits(const uint8_t[:, :, ::1] planes, const int32_t[::1] xs, const int32_t[::1] ys,
                 const int32_t[:, ::1] triplets, Py_ssize_t half, Py_ssize_t row_bytes):
    cdef Py_ssize_t nk = xs.shape[0], nt = triplets.shape[0]
    cdef Py_ssize_t i, j, x, y, ax, ay, ac
    cdef int64_t s1, s2
    out_arr = np.zeros((nk, row_bytes), dtype=np.uint8)
    cdef uint8_t[:, ::1] out = out_arr

    with nogil:
        for i in range(nk):
            x = xs[i]
            y = ys[i]
            for j in range(nt):
                ax = x + triplets[j, 0]
                ay = y + triplets[j, 1]
                ac = triplets[j, 2]
                s1 = _ssd(planes, ac, ay, ax, triplets[j, 5],
                          y + triplets[j, 4], x + triplets[j, 3], half)
                s2 = _ssd(planes, ac, ay, ax, triplets[j, 8],
                          y + triplets[j, 7], x + triplets[j, 6], half)
                if s1 > s2:
                    out[i, j >> 3] |= <uint8_t>(1 << (j & 7))
    return out_arr


def match_nearest(const uint64_t[:, ::1] queries, const uint64_t[:, ::1] targets):
    cdef Py_ssize_t m = queries.shape[0], n = targets.shape[0], words = queries.shape[1]
    cdef Py_ssize_t i, j, k
    cdef int64_t d, bd, sd, bi
    best_arr = np.empty(m, dtype=np.int64)
    dist_arr = np.empty(m, dtype=np.int64)
    second_arr = np.empty(m, dtype=np.int64)
    cdef int64_t[::1] best = best_arr
    cdef int64_t[::1] dist = dist_arr
    cdef int64_t[::1] second = second_arr

    with nogil:
        for i in range(m):
            bd = 0x7FFFFFFFFFFFFFFF
            sd = 0x7FFFFFFFFFFFFFFF
            bi = 0
            for j in range(n):
                d = 0
                for k in range(words):
                    d += cb_popcount64(queries[i, k] ^ targets[j, k])
                if d < bd:
                    sd = bd
                    bd = d
                    bi = j
                elif d < sd:
                    sd = d
            if n == 1:
                sd = bd
            best[i] = bi
            dist[i] = bd
            second[i] = sd
    return best_arr, dist_arr, second_arr


cdef inline unsigned int _arc_cover(unsigned int mask) nogil:
    # union of all runs of >= ARC set bits on the 16-position circle
    cdef unsigned int doubled = mask | (mask << 16)
    cdef unsigned int cover = 0
    cdef int s
    for s in range(16):
        if ((doubled >> s) & ARC_MASK) == ARC_MASK:
            cover |= ((ARC_MASK << s) | (ARC_MASK >> (16 - s))) & 0xFFFF
    return cover


def fast_scores(const uint8_t[:, ::1] img, int threshold):
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef Py_ssize_t x, y
    cdef int i, c, p, d, nb, nd, score
    cdef unsigned int bright, dark, cover
    cdef int diffs[16]
    scores_arr = np.zeros((h, w), dtype=np.int32)
    if h < 7 or w < 7:
        return scores_arr
    cdef int32_t[:, ::1] scores = scores_arr

    with nogil:
        for y in range(3, h - 3):
            for x in range(3, w - 3):
                c = img[y, x]
                # any 9-arc contains at least two of the four compass pixels
                nb = 0
                nd = 0
                for i in range(0, 16, 4):
                    p = img[y + CIRCLE_Y[i], x + CIRCLE_X[i]]
                    if p - c > threshold:
                        nb += 1
                    elif c - p > threshold:
                        nd += 1
                if nb < 2 and nd < 2:
                    continue
                bright = 0
                dark = 0
                for i in range(16):
                    d = <int>img[y + CIRCLE_Y[i], x + CIRCLE_X[i]] - c
                    diffs[i] = d
                    if d > threshold:
                        bright |= 1u << i
                    elif d < -threshold:
                        dark |= 1u << i
                score = 0
                cover = _arc_cover(bright)
                for i in range(16):
                    if cover & (1u << i):
                        score += diffs[i]
                cover = _arc_cover(dark)
                for i in range(16):
                    if cover & (1u << i):
                        score -= diffs[i]
                scores[y, x] = score
    return scores_arr
