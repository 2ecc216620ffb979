"""Seeded sampling patterns for pair (BRIEF-style) and triplet (LATCH-style) tests.

Every endpoint is an ``(dx, dy, channel)`` offset from the keypoint. Spatial
offsets follow an isotropic Gaussian with standard deviation ``window / 5``;
channels are drawn per color space:

* gray: always channel 0
* rgb: each endpoint independently uniform on {R, G, B}
* ycbcr: a ``y_fraction`` share of the tests lives purely in Y, the rest
  draws every endpoint uniformly from {Cb, Cr}; luma and chroma are never
  mixed within one test

Spatial offsets are drawn before any channel, so the same seed yields the
same spatial layout in every color space. This is what makes gray/rgb/ycbcr
comparisons paired.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .imagery import ColorSpace

FORMAT_VERSION = 1
RNG_NAME = "numpy-pcg64"
IMPORTED_RNG = "imported"
DEFAULT_WINDOW = 48
DEFAULT_PATCH = 7
DEFAULT_Y_FRACTION = 0.5

Y, CB, CR = 0, 1, 2


class PatternError(ValueError):
    """Invalid pattern parameters or a malformed pattern file."""


def _make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def _offsets_equal(a, b) -> bool:
    return a.shape == b.shape and np.array_equal(a, b)


@dataclass(frozen=True, eq=False)
class PairPattern:
    """Ordered pixel-pair tests; ``tests`` rows are ``x1 y1 c1 x2 y2 c2``."""

    space: ColorSpace
    window: int
    tests: np.ndarray
    seed: int
    y_fraction: float | None = None
    rng: str = RNG_NAME

    kind = "pair"
    patch_size = 0

    def __post_init__(self):
        object.__setattr__(self, "space", ColorSpace.parse(self.space))
        tests = np.ascontiguousarray(self.tests, dtype=np.int32).reshape(-1, 6)
        tests.flags.writeable = False
        object.__setattr__(self, "tests", tests)
        self.validate()

    @property
    def n_d(self) -> int:
        return self.tests.shape[0]

    @property
    def bound(self) -> int:
        return self.window // 2

    @property
    def rows(self) -> np.ndarray:
        return self.tests

    def endpoints(self) -> np.ndarray:
        """All endpoints as an ``(2 * n_d, 3)`` array of ``dx, dy, channel``."""
        return self.tests.reshape(-1, 3)

    def validate(self) -> None:
        _validate_common(self, self.tests.reshape(-1, 2, 3))

    def spatial(self) -> np.ndarray:
        return self.tests[:, [0, 1, 3, 4]]

    def as_gray(self) -> "PairPattern":
        """Same spatial layout with every channel set to 0."""
        tests = self.tests.copy()
        tests[:, [2, 5]] = 0
        return replace(self, space=ColorSpace.GRAY, tests=tests, y_fraction=None)

    def __eq__(self, other):
        if not isinstance(other, PairPattern):
            return NotImplemented
        return (
            (self.space, self.window, self.seed, self.y_fraction, self.rng)
            == (other.space, other.window, other.seed, other.y_fraction, other.rng)
            and _offsets_equal(self.tests, other.tests)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class TripletPattern:
    """Ordered patch triplets; rows are ``ax ay ac x1 y1 c1 x2 y2 c2``."""

    space: ColorSpace
    window: int
    patch_size: int
    triplets: np.ndarray
    seed: int
    y_fraction: float | None = None
    rng: str = RNG_NAME

    kind = "triplet"

    def __post_init__(self):
        object.__setattr__(self, "space", ColorSpace.parse(self.space))
        triplets = np.ascontiguousarray(self.triplets, dtype=np.int32).reshape(-1, 9)
        triplets.flags.writeable = False
        object.__setattr__(self, "triplets", triplets)
        if self.patch_size < 1 or self.patch_size % 2 == 0:
            raise PatternError(f"patch_size must be odd and >= 1, got {self.patch_size}")
        if self.patch_size >= self.window:
            raise PatternError(f"patch_size {self.patch_size} must be smaller than window {self.window}")
        self.validate()

    @property
    def n_d(self) -> int:
        return self.triplets.shape[0]

    @property
    def bound(self) -> int:
        return self.window // 2 - self.patch_size // 2

    @property
    def rows(self) -> np.ndarray:
        return self.triplets

    def endpoints(self) -> np.ndarray:
        return self.triplets.reshape(-1, 3)

    def validate(self) -> None:
        _validate_common(self, self.triplets.reshape(-1, 3, 3))

    def spatial(self) -> np.ndarray:
        return self.triplets[:, [0, 1, 3, 4, 6, 7]]

    def as_gray(self) -> "TripletPattern":
        triplets = self.triplets.copy()
        triplets[:, [2, 5, 8]] = 0
        return replace(self, space=ColorSpace.GRAY, triplets=triplets, y_fraction=None)

    def __eq__(self, other):
        if not isinstance(other, TripletPattern):
            return NotImplemented
        return (
            (self.space, self.window, self.patch_size, self.seed, self.y_fraction, self.rng)
            == (other.space, other.window, other.patch_size, other.seed, other.y_fraction, other.rng)
            and _offsets_equal(self.triplets, other.triplets)
        )

    __hash__ = None


Pattern = PairPattern | TripletPattern


def _validate_common(pattern, tests: np.ndarray) -> None:
    """``tests`` is ``(n_d, endpoints_per_test, 3)``."""
    if tests.shape[0] < 1:
        raise PatternError("a pattern needs at least one test")
    if pattern.window < 8:
        raise PatternError(f"window must be >= 8, got {pattern.window}")
    offsets = tests[:, :, :2]
    if np.abs(offsets).max() > pattern.bound:
        raise PatternError(f"offset exceeds the bound {pattern.bound} for window {pattern.window}")
    channels = tests[:, :, 2]
    if channels.min() < 0 or channels.max() >= pattern.space.n_channels:
        raise PatternError(f"channel index out of range for {pattern.space.value}")
    if pattern.space is ColorSpace.YCBCR:
        luma = channels == Y
        if np.any(luma.any(axis=1) & ~luma.all(axis=1)):
            raise PatternError("ycbcr test mixes luma with chroma")


# --- generation -------------------------------------------------------------

def _check_y_fraction(space: ColorSpace, y_fraction):
    if space is ColorSpace.YCBCR:
        if y_fraction is None:
            return DEFAULT_Y_FRACTION
        if not 0.0 <= y_fraction <= 1.0:
            raise PatternError(f"y_fraction must lie in [0, 1], got {y_fraction}")
        return float(y_fraction)
    if y_fraction is not None:
        warnings.warn(f"y_fraction is ignored for {space.value} patterns", stacklevel=3)
    return None


def draw_offsets(rng: np.random.Generator, count: int, window: int, bound: int) -> np.ndarray:
    """``count`` integer offsets from Gaussian(0, (window/5)^2), resampled until ``|v| <= bound``."""
    sigma = window / 5.0
    values = np.floor(rng.standard_normal(count) * sigma + 0.5)
    bad = np.flatnonzero(np.abs(values) > bound)
    while bad.size:
        values[bad] = np.floor(rng.standard_normal(bad.size) * sigma + 0.5)
        bad = bad[np.abs(values[bad]) > bound]
    return values.astype(np.int32)


def draw_channels(rng: np.random.Generator, space: ColorSpace, n_d: int,
                  per_test: int, y_fraction) -> np.ndarray:
    """Channel indices, shape ``(n_d, per_test)``."""
    if space is ColorSpace.GRAY:
        return np.zeros((n_d, per_test), dtype=np.int32)
    if space is ColorSpace.RGB:
        return rng.integers(0, 3, size=(n_d, per_test), dtype=np.int32)
    n_luma = int(np.floor(y_fraction * n_d))
    is_luma = np.zeros(n_d, dtype=bool)
    is_luma[:n_luma] = True
    is_luma = rng.permutation(is_luma)
    channels = rng.integers(CB, CR + 1, size=(n_d, per_test), dtype=np.int32)
    channels[is_luma] = Y
    return channels


def _check_common(n_d: int, window: int) -> None:
    if n_d < 1:
        raise PatternError(f"n_d must be >= 1, got {n_d}")
    if window < 8:
        raise PatternError(f"window must be >= 8, got {window}")


def generate_pair_pattern(space="gray", n_d: int = 512, window: int = DEFAULT_WINDOW,
                          seed: int = 0, y_fraction: float | None = None) -> PairPattern:
    space = ColorSpace.parse(space)
    _check_common(n_d, window)
    y_fraction = _check_y_fraction(space, y_fraction)
    rng = _make_rng(seed)
    xy = draw_offsets(rng, n_d * 4, window, window // 2).reshape(n_d, 2, 2)
    channels = draw_channels(rng, space, n_d, 2, y_fraction)
    tests = np.concatenate([xy, channels[:, :, None]], axis=2).reshape(n_d, 6)
    return PairPattern(space, window, tests, int(seed), y_fraction)


def generate_triplet_pattern(space="gray", n_d: int = 512, window: int = DEFAULT_WINDOW,
                             patch_size: int = DEFAULT_PATCH, seed: int = 0,
                             y_fraction: float | None = None) -> TripletPattern:
    space = ColorSpace.parse(space)
    _check_common(n_d, window)
    if patch_size < 1 or patch_size % 2 == 0:
        raise PatternError(f"patch_size must be odd and >= 1, got {patch_size}")
    if patch_size >= window:
        raise PatternError(f"patch_size {patch_size} must be smaller than window {window}")
    y_fraction = _check_y_fraction(space, y_fraction)
    rng = _make_rng(seed)
    bound = window // 2 - patch_size // 2
    xy = draw_offsets(rng, n_d * 6, window, bound).reshape(n_d, 3, 2)
    channels = draw_channels(rng, space, n_d, 3, y_fraction)
    triplets = np.concatenate([xy, channels[:, :, None]], axis=2).reshape(n_d, 9)
    return TripletPattern(space, window, patch_size, triplets, int(seed), y_fraction)


def regenerate(pattern: Pattern, *, n_d: int | None = None, patch_size: int | None = None,
               space=None) -> Pattern:
    """Re-run the generator that produced ``pattern`` with some parameters changed."""
    if pattern.rng != RNG_NAME:
        raise PatternError(f"pattern from {pattern.rng!r} source cannot be regenerated")
    space = ColorSpace.parse(space) if space is not None else pattern.space
    y_fraction = pattern.y_fraction if space is ColorSpace.YCBCR else None
    if space is ColorSpace.YCBCR and y_fraction is None:
        y_fraction = DEFAULT_Y_FRACTION
    n_d = pattern.n_d if n_d is None else n_d
    if isinstance(pattern, PairPattern):
        return generate_pair_pattern(space, n_d, pattern.window, pattern.seed, y_fraction)
    return generate_triplet_pattern(
        space, n_d, pattern.window, pattern.patch_size if patch_size is None else patch_size,
        pattern.seed, y_fraction,
    )


def load_triplet_arrangement(path, space="gray", window: int = DEFAULT_WINDOW,
                             patch_size: int = DEFAULT_PATCH, seed: int = 0,
                             y_fraction: float | None = None) -> TripletPattern:
    """Import an external spatial triplet arrangement (``ax ay c1x c1y c2x c2y`` per line).

    Offsets are used verbatim; channels are drawn for ``space`` from ``seed``.
    """
    space = ColorSpace.parse(space)
    y_fraction = _check_y_fraction(space, y_fraction)
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        try:
            values = [int(v) for v in fields]
        except ValueError:
            raise PatternError(f"{path}:{lineno}: non-integer field in {line!r}") from None
        if len(values) != 6:
            raise PatternError(f"{path}:{lineno}: expected 6 integers, got {len(values)}")
        rows.append(values)
    if not rows:
        raise PatternError(f"{path}: arrangement file is empty")
    xy = np.array(rows, dtype=np.int32).reshape(-1, 3, 2)
    bound = window // 2 - patch_size // 2
    if np.abs(xy).max() > bound:
        raise PatternError(f"{path}: offset exceeds {bound} for window {window}, patch {patch_size}")
    channels = draw_channels(_make_rng(seed), space, len(rows), 3, y_fraction)
    triplets = np.concatenate([xy, channels[:, :, None]], axis=2).reshape(-1, 9)
    return TripletPattern(space, window, patch_size, triplets, int(seed), y_fraction, rng=IMPORTED_RNG)


# --- serialization ----------------------------------------------------------

def _body(pattern: Pattern) -> str:
    return "".join(" ".join(str(v) for v in row) + "\n" for row in pattern.rows.tolist())


def pattern_digest(pattern: Pattern) -> str:
    return hashlib.sha256(dumps_pattern(pattern).encode()).hexdigest()


def dumps_pattern(pattern: Pattern) -> str:
    body = _body(pattern)
    y_fraction = "-" if pattern.y_fraction is None else repr(float(pattern.y_fraction))
    header = [
        "# chromabin sampling pattern",
        f"version {FORMAT_VERSION}",
        f"kind {pattern.kind}",
        f"space {pattern.space.value}",
        f"window {pattern.window}",
        f"patch_size {pattern.patch_size}",
        f"n_d {pattern.n_d}",
        f"seed {pattern.seed}",
        f"y_fraction {y_fraction}",
        f"rng {pattern.rng}",
        f"checksum sha256:{hashlib.sha256(body.encode()).hexdigest()}",
    ]
    return "\n".join(header) + "\n" + body


def save_pattern(pattern: Pattern, path) -> None:
    Path(path).write_text(dumps_pattern(pattern))


_HEADER_KEYS = ("version", "kind", "space", "window", "patch_size", "n_d", "seed", "y_fraction", "rng", "checksum")


def loads_pattern(text: str, source="<string>") -> Pattern:
    header: dict[str, str] = {}
    body_lines = []
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        if key in _HEADER_KEYS and not body_lines:
            header[key] = rest.strip()
        else:
            body_lines.append(line)
    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise PatternError(f"{source}: missing header field(s) {', '.join(missing)}")
    if header["version"] != str(FORMAT_VERSION):
        raise PatternError(f"{source}: unsupported pattern version {header['version']}")
    try:
        space = ColorSpace(header["space"])
    except ValueError:
        raise PatternError(f"{source}: unknown space tag {header['space']!r}") from None
    kind = header["kind"]
    if kind not in ("pair", "triplet"):
        raise PatternError(f"{source}: unknown kind {kind!r}")
    try:
        window, patch_size, n_d, seed = (int(header[k]) for k in ("window", "patch_size", "n_d", "seed"))
        y_fraction = None if header["y_fraction"] == "-" else float(header["y_fraction"])
        rows = [[int(v) for v in line.split()] for line in body_lines]
    except ValueError as exc:
        raise PatternError(f"{source}: {exc}") from None
    if len(rows) != n_d:
        raise PatternError(f"{source}: header declares n_d={n_d} but {len(rows)} tests follow")
    width = 6 if kind == "pair" else 9
    if any(len(r) != width for r in rows):
        raise PatternError(f"{source}: every {kind} line needs {width} integers")
    body = "".join(" ".join(str(v) for v in r) + "\n" for r in rows)
    expected = header["checksum"].removeprefix("sha256:")
    if hashlib.sha256(body.encode()).hexdigest() != expected:
        raise PatternError(f"{source}: checksum mismatch")
    array = np.array(rows, dtype=np.int32).reshape(n_d, width)
    if kind == "pair":
        return PairPattern(space, window, array, seed, y_fraction, rng=header["rng"])
    return TripletPattern(space, window, patch_size, array, seed, y_fraction, rng=header["rng"])


def load_pattern(path) -> Pattern:
    return loads_pattern(Path(path).read_text(), source=path)
