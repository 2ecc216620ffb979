"""Packed binary descriptors extracted at integer keypoints."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _backend
from .imagery import ColorSpace, PlanarImage, SmoothingConfig, convert, smooth
from .patterns import PairPattern, Pattern, TripletPattern

WORD_BYTES = 8
DUMP_MAGIC = b"CBD1"
_DUMP_HEADER = struct.Struct("<4sII")


class DescriptorError(ValueError):
    """Bad keypoints, mismatched spaces or malformed descriptor dumps."""


@dataclass(frozen=True)
class Keypoint:
    x: int
    y: int
    response: float = 0.0


def row_bytes(n_d: int) -> int:
    """Storage per descriptor: whole 64-bit words."""
    return -(-n_d // (8 * WORD_BYTES)) * WORD_BYTES


def _padding_mask(n_d: int) -> np.ndarray:
    mask = np.zeros(row_bytes(n_d), dtype=np.uint8)
    full, rem = divmod(n_d, 8)
    mask[:full] = 0xFF
    if rem:
        mask[full] = (1 << rem) - 1
    return mask


def _clear_padding(data: np.ndarray, n_d: int) -> np.ndarray:
    """``data`` with every storage bit at position >= n_d zeroed; copies only if needed."""
    mask = _padding_mask(n_d)
    if np.any(data & ~mask):
        data = data & mask
    return data


@dataclass(frozen=True, eq=False)
class Descriptor:
    """A single descriptor; ``bits`` holds whole words with zero padding past ``n_d``."""

    n_d: int
    bits: np.ndarray

    def __post_init__(self):
        if self.n_d < 1:
            raise DescriptorError(f"n_d must be >= 1, got {self.n_d}")
        raw = np.asarray(self.bits, dtype=np.uint8).ravel()
        bits = np.zeros(row_bytes(self.n_d), dtype=np.uint8)
        n = min(raw.size, bits.size)
        bits[:n] = raw[:n]
        object.__setattr__(self, "bits", _clear_padding(bits, self.n_d))

    @classmethod
    def from_bits(cls, bits: Sequence[int]) -> "Descriptor":
        bits = np.asarray(bits, dtype=bool)
        packed = np.zeros(row_bytes(bits.size), dtype=np.uint8)
        raw = np.packbits(bits, bitorder="little")
        packed[:raw.size] = raw
        return cls(bits.size, packed)

    def unpack(self) -> np.ndarray:
        return np.unpackbits(self.bits, bitorder="little")[:self.n_d]

    def bit(self, i: int) -> int:
        if not 0 <= i < self.n_d:
            raise IndexError(i)
        return int(self.bits[i >> 3] >> (i & 7)) & 1

    @property
    def value(self) -> int:
        """The bitstring read as sum of ``2**i`` over set test ``i``."""
        return int.from_bytes(self.bits.tobytes(), "little")

    def popcount(self) -> int:
        return int(np.bitwise_count(self.bits).sum())

    def __eq__(self, other):
        if not isinstance(other, Descriptor):
            return NotImplemented
        return self.n_d == other.n_d and np.array_equal(self.bits, other.bits)

    __hash__ = None


class DescriptorSet:
    """``count`` descriptors of ``n_d`` bits stored as a ``(count, row_bytes)`` uint8 array."""

    def __init__(self, n_d: int, data: np.ndarray):
        data = np.ascontiguousarray(data, dtype=np.uint8)
        if n_d < 1:
            raise DescriptorError(f"n_d must be >= 1, got {n_d}")
        if data.ndim != 2 or data.shape[1] != row_bytes(n_d):
            raise DescriptorError(f"expected (count, {row_bytes(n_d)}) bytes for n_d={n_d}, got {data.shape}")
        self.n_d = n_d
        self.data = _clear_padding(data, n_d)

    @classmethod
    def empty(cls, n_d: int) -> "DescriptorSet":
        return cls(n_d, np.zeros((0, row_bytes(n_d)), dtype=np.uint8))

    @classmethod
    def from_descriptors(cls, descriptors: Iterable[Descriptor], n_d: int | None = None) -> "DescriptorSet":
        descriptors = list(descriptors)
        if not descriptors:
            if n_d is None:
                raise DescriptorError("n_d is required for an empty descriptor set")
            return cls.empty(n_d)
        n_d = descriptors[0].n_d
        if any(d.n_d != n_d for d in descriptors):
            raise DescriptorError("descriptors have mixed bit counts")
        return cls(n_d, np.stack([d.bits for d in descriptors]))

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, i: int) -> Descriptor:
        return Descriptor(self.n_d, self.data[i].copy())

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def __eq__(self, other):
        if not isinstance(other, DescriptorSet):
            return NotImplemented
        return self.n_d == other.n_d and np.array_equal(self.data, other.data)

    __hash__ = None

    def words(self) -> np.ndarray:
        return self.data.view(np.uint64)

    def unpack(self) -> np.ndarray:
        """``(count, n_d)`` array of 0/1 test outcomes."""
        return np.unpackbits(self.data, axis=1, bitorder="little")[:, :self.n_d]

    def subset(self, indices) -> "DescriptorSet":
        return DescriptorSet(self.n_d, self.data[np.asarray(indices, dtype=np.intp)])


# --- dump files -------------------------------------------------------------

def save_descriptors(descriptors: DescriptorSet, path) -> None:
    """Header ``magic, n_d, count`` then ``ceil(n_d / 8)`` bytes per descriptor."""
    nbytes = -(-descriptors.n_d // 8)
    header = _DUMP_HEADER.pack(DUMP_MAGIC, descriptors.n_d, len(descriptors))
    Path(path).write_bytes(header + descriptors.data[:, :nbytes].tobytes())


def load_descriptors(path) -> DescriptorSet:
    raw = Path(path).read_bytes()
    if len(raw) < _DUMP_HEADER.size:
        raise DescriptorError(f"{path}: truncated descriptor dump")
    magic, n_d, count = _DUMP_HEADER.unpack_from(raw)
    if magic != DUMP_MAGIC:
        raise DescriptorError(f"{path}: bad magic {magic!r}")
    if n_d < 1:
        raise DescriptorError(f"{path}: n_d must be >= 1")
    nbytes = -(-n_d // 8)
    payload = raw[_DUMP_HEADER.size:]
    if len(payload) != count * nbytes:
        raise DescriptorError(f"{path}: expected {count * nbytes} payload bytes, got {len(payload)}")
    data = np.zeros((count, row_bytes(n_d)), dtype=np.uint8)
    data[:, :nbytes] = np.frombuffer(payload, dtype=np.uint8).reshape(count, nbytes)
    return DescriptorSet(n_d, data)


# --- configuration ----------------------------------------------------------

@dataclass(frozen=True)
class DescriptorConfig:
    """A pattern plus optional pre-smoothing.

    Use :meth:`for_pattern` for the usual defaults: pair descriptors smooth
    with sigma 2 over 9x9, triplet descriptors do not smooth.
    """

    pattern: Pattern
    smoothing: SmoothingConfig | None = None

    def __post_init__(self):
        if self.smoothing is not None and self.smoothing.kernel_size > self.pattern.window:
            raise DescriptorError(
                f"smoothing kernel {self.smoothing.kernel_size} does not fit window {self.pattern.window}"
            )

    @classmethod
    def for_pattern(cls, pattern: Pattern, smoothing: "SmoothingConfig | None | str" = "default"):
        if smoothing == "default":
            smoothing = SmoothingConfig() if isinstance(pattern, PairPattern) else None
        return cls(pattern, smoothing)

    @property
    def space(self) -> ColorSpace:
        return self.pattern.space

    @property
    def kind(self) -> str:
        return self.pattern.kind

    @property
    def n_d(self) -> int:
        return self.pattern.n_d


def required_margin(cfg: DescriptorConfig) -> int:
    """Pixels a keypoint must keep from every border so no test touches padding."""
    margin = cfg.pattern.window // 2
    if isinstance(cfg.pattern, TripletPattern):
        margin += cfg.pattern.patch_size // 2
    if cfg.smoothing is not None:
        margin += cfg.smoothing.radius
    return margin


def within_margin(xs, ys, width: int, height: int, margin: int) -> np.ndarray:
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    return (xs >= margin) & (ys >= margin) & (xs <= width - 1 - margin) & (ys <= height - 1 - margin)


# --- tests and extraction -----------------------------------------------------

def _sample(img: PlanarImage, kp: Keypoint, dx: int, dy: int, channel: int) -> int:
    x, y = kp.x + dx, kp.y + dy
    if not (0 <= x < img.width and 0 <= y < img.height):
        raise DescriptorError(f"sample ({x}, {y}) lies outside the {img.width}x{img.height} image")
    if not 0 <= channel < img.planes.shape[0]:
        raise DescriptorError(f"channel {channel} not present in {img.space.value} image")
    return int(img.planes[channel, y, x])


def binary_test(img: PlanarImage, kp: Keypoint, e1, e2) -> int:
    """1 iff the first endpoint's value is strictly below the second's.

    Endpoints are ``(dx, dy, channel)`` triples.
    """
    return int(_sample(img, kp, *e1) < _sample(img, kp, *e2))


def _patch(img: PlanarImage, kp: Keypoint, endpoint, half: int) -> np.ndarray:
    dx, dy, channel = endpoint
    x, y = kp.x + dx, kp.y + dy
    if x - half < 0 or y - half < 0 or x + half >= img.width or y + half >= img.height:
        raise DescriptorError(f"patch at ({x}, {y}) leaves the {img.width}x{img.height} image")
    return img.planes[channel, y - half:y + half + 1, x - half:x + half + 1].astype(np.int64)


def triplet_test(img: PlanarImage, kp: Keypoint, triplet, patch_size: int) -> int:
    """1 iff the anchor is farther (sum of squared differences) from companion 1 than from companion 2."""
    half = patch_size // 2
    anchor, first, second = (_patch(img, kp, e, half) for e in triplet)
    return int(((anchor - first) ** 2).sum() > ((anchor - second) ** 2).sum())


def prepare_image(img: PlanarImage, cfg: DescriptorConfig) -> PlanarImage:
    """Convert ``img`` into the pattern's space and apply the configured smoothing.

    RGB patterns consume RGB input untouched; no gray conversion happens.
    """
    if img.space is not cfg.space:
        try:
            img = convert(img, cfg.space)
        except ValueError as exc:
            raise DescriptorError(str(exc)) from None
    if cfg.smoothing is not None:
        img = smooth(img, cfg.smoothing)
    return img


def keypoint_arrays(keypoints) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(keypoints, np.ndarray):
        arr = np.asarray(keypoints).reshape(-1, 2)
        return (np.ascontiguousarray(arr[:, 0], dtype=np.int32),
                np.ascontiguousarray(arr[:, 1], dtype=np.int32))
    keypoints = list(keypoints)
    if keypoints and not hasattr(keypoints[0], "x"):
        # plain (x, y) pairs
        return keypoint_arrays(np.asarray(keypoints, dtype=np.int64))
    xs = np.fromiter((kp.x for kp in keypoints), dtype=np.int32, count=len(keypoints))
    ys = np.fromiter((kp.y for kp in keypoints), dtype=np.int32, count=len(keypoints))
    return xs, ys


def extract_prepared(img: PlanarImage, keypoints, cfg: DescriptorConfig) -> DescriptorSet:
    """Extract from an image already returned by :func:`prepare_image`."""
    pattern = cfg.pattern
    if img.space is not pattern.space:
        raise DescriptorError(f"prepared image is {img.space.value}, pattern wants {pattern.space.value}")
    xs, ys = keypoint_arrays(keypoints)
    margin = required_margin(cfg)
    ok = within_margin(xs, ys, img.width, img.height, margin)
    if not ok.all():
        bad = int(np.flatnonzero(~ok)[0])
        raise DescriptorError(
            f"keypoint ({xs[bad]}, {ys[bad]}) is closer than {margin} px to the border"
        )
    if xs.size == 0:
        return DescriptorSet.empty(pattern.n_d)
    kernels = _backend.kernels
    nbytes = row_bytes(pattern.n_d)
    if isinstance(pattern, PairPattern):
        data = kernels.pair_bits(img.planes, xs, ys, pattern.tests, nbytes)
    else:
        data = kernels.triplet_bits(img.planes, xs, ys, pattern.triplets, pattern.patch_size // 2, nbytes)
    return DescriptorSet(pattern.n_d, data)


def extract(img: PlanarImage, keypoints, cfg: DescriptorConfig) -> DescriptorSet:
    """One descriptor per keypoint, bit ``i`` being the outcome of pattern test ``i``."""
    return extract_prepared(prepare_image(img, cfg), keypoints, cfg)
