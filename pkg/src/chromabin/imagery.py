"""Planar 8-bit images: PNM/PNG I/O, color conversion and Gaussian pre-smoothing."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _backend


class ImageError(ValueError):
    """Raised for unreadable or malformed images and invalid conversions."""


class ColorSpace(str, enum.Enum):
    GRAY = "gray"
    RGB = "rgb"
    YCBCR = "ycbcr"

    @property
    def n_channels(self) -> int:
        return 1 if self is ColorSpace.GRAY else 3

    @classmethod
    def parse(cls, value: "str | ColorSpace") -> "ColorSpace":
        if isinstance(value, ColorSpace):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown color space {value!r}") from None


@dataclass(frozen=True, eq=False)
class PlanarImage:
    """An 8-bit image stored as ``(channels, height, width)`` planes.

    The plane array is made read-only on construction so images can be
    shared between threads without copying.
    """

    planes: np.ndarray
    space: ColorSpace

    def __post_init__(self):
        space = ColorSpace.parse(self.space)
        planes = np.asarray(self.planes)
        if planes.ndim != 3:
            raise ImageError(f"planes must be 3-D (channels, height, width), got shape {planes.shape}")
        if planes.shape[0] != space.n_channels:
            raise ImageError(f"{space.value} image needs {space.n_channels} plane(s), got {planes.shape[0]}")
        if planes.dtype != np.uint8:
            if planes.size and (planes.min() < 0 or planes.max() > 255):
                raise ImageError("sample values must lie in [0, 255]")
            planes = planes.astype(np.uint8)
        planes = np.ascontiguousarray(planes)
        if planes.flags.writeable:
            planes = planes.copy()
            planes.flags.writeable = False
        object.__setattr__(self, "planes", planes)
        object.__setattr__(self, "space", space)

    @classmethod
    def _adopt(cls, planes: np.ndarray, space: ColorSpace) -> "PlanarImage":
        """Wrap a freshly built uint8 array without the defensive copy."""
        planes.flags.writeable = False
        return cls(planes, space)

    @classmethod
    def from_array(cls, array, space: "str | ColorSpace | None" = None) -> "PlanarImage":
        """Build from an ``(H, W)`` gray array or an interleaved ``(H, W, 3)`` array."""
        array = np.asarray(array)
        if array.ndim == 2:
            space = ColorSpace.parse(space or ColorSpace.GRAY)
            return cls(array[None, :, :], space)
        if array.ndim == 3 and array.shape[2] == 3:
            space = ColorSpace.parse(space or ColorSpace.RGB)
            return cls(np.moveaxis(array, 2, 0), space)
        raise ImageError(f"cannot interpret array of shape {array.shape} as an image")

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    def plane(self, channel: int) -> np.ndarray:
        return self.planes[channel]

    def to_array(self) -> np.ndarray:
        """Interleaved ``(H, W, C)`` copy, or ``(H, W)`` for gray."""
        if self.space is ColorSpace.GRAY:
            return self.planes[0].copy()
        return np.ascontiguousarray(np.moveaxis(self.planes, 0, 2))

    def __eq__(self, other):
        if not isinstance(other, PlanarImage):
            return NotImplemented
        return self.space is other.space and np.array_equal(self.planes, other.planes)

    __hash__ = None


# --- file I/O -------------------------------------------------------------

_PNM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _parse_pnm(data: bytes, source) -> PlanarImage:
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise ImageError(f"{source}: not a binary PGM/PPM file (magic {magic!r})")
    pos = 2
    fields = []
    for _ in range(3):
        m = _PNM_TOKEN.match(data, pos)
        if m is None:
            raise ImageError(f"{source}: truncated header")
        try:
            fields.append(int(m.group(1)))
        except ValueError:
            raise ImageError(f"{source}: malformed header field {m.group(1)!r}") from None
        pos = m.end()
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise ImageError(f"{source}: invalid dimensions {width}x{height}")
    if maxval != 255:
        raise ImageError(f"{source}: only maxval 255 is supported, got {maxval}")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise ImageError(f"{source}: missing whitespace after header")
    pos += 1
    channels = 1 if magic == b"P5" else 3
    expected = width * height * channels
    payload = data[pos:pos + expected]
    if len(payload) != expected:
        raise ImageError(f"{source}: expected {expected} bytes of pixel data, got {len(payload)}")
    pixels = np.frombuffer(payload, dtype=np.uint8)
    if channels == 1:
        return PlanarImage(pixels.reshape(1, height, width).copy(), ColorSpace.GRAY)
    return PlanarImage.from_array(pixels.reshape(height, width, 3), ColorSpace.RGB)


def load_image(path) -> PlanarImage:
    """Read a binary PGM (P5), PPM (P6) or, with Pillow installed, PNG file."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ImageError(f"cannot read {path}: {exc}") from exc
    if data.startswith(b"\x89PNG"):
        return _load_png(path)
    return _parse_pnm(data, path)


def _load_png(path: Path) -> PlanarImage:
    try:
        from PIL import Image
    except ImportError:
        raise ImageError(f"{path}: PNG support needs Pillow") from None
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        arr = np.asarray(im)
    return PlanarImage.from_array(arr)


def save_image(img: PlanarImage, path) -> None:
    """Write a gray image as P5 or an RGB image as P6."""
    if img.space is ColorSpace.GRAY:
        header = b"P5\n%d %d\n255\n" % (img.width, img.height)
    elif img.space is ColorSpace.RGB:
        header = b"P6\n%d %d\n255\n" % (img.width, img.height)
    else:
        raise ImageError("only gray and RGB images can be written as PNM")
    Path(path).write_bytes(header + img.to_array().tobytes())


# --- color conversion -------------------------------------------------------

def _round_clamp(values: np.ndarray) -> np.ndarray:
    # round half up, then saturate to 8 bits
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


def _require_rgb(img: PlanarImage, op: str) -> None:
    if img.space is not ColorSpace.RGB:
        raise ImageError(f"{op} expects an RGB image, got {img.space.value}")


def _luma(r, g, b):
    return 0.299 * r + 0.587 * g + 0.114 * b


def to_gray(img: PlanarImage) -> PlanarImage:
    """Full-range BT.601 luma."""
    _require_rgb(img, "to_gray")
    r, g, b = img.planes.astype(np.float64)
    return PlanarImage._adopt(_round_clamp(_luma(r, g, b))[None], ColorSpace.GRAY)


def to_ycbcr(img: PlanarImage) -> PlanarImage:
    """Full-range (JPEG) BT.601 YCbCr; the Y plane equals :func:`to_gray`."""
    _require_rgb(img, "to_ycbcr")
    r, g, b = img.planes.astype(np.float64)
    y = _luma(r, g, b)
    cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b
    return PlanarImage._adopt(_round_clamp(np.stack([y, cb, cr])), ColorSpace.YCBCR)


def convert(img: PlanarImage, space: "str | ColorSpace") -> PlanarImage:
    """Convert ``img`` into ``space`` when a conversion is defined."""
    space = ColorSpace.parse(space)
    if img.space is space:
        return img
    if img.space is ColorSpace.RGB and space is ColorSpace.GRAY:
        return to_gray(img)
    if img.space is ColorSpace.RGB and space is ColorSpace.YCBCR:
        return to_ycbcr(img)
    raise ImageError(f"no conversion from {img.space.value} to {space.value}")


# --- smoothing ----------------------------------------------------------------

@dataclass(frozen=True)
class SmoothingConfig:
    sigma: float = 2.0
    kernel_size: int = 9

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and >= 1, got {self.kernel_size}")

    @property
    def radius(self) -> int:
        return self.kernel_size // 2

    def kernel_1d(self) -> np.ndarray:
        offsets = np.arange(-self.radius, self.radius + 1, dtype=np.float64)
        weights = np.exp(-(offsets**2) / (2.0 * self.sigma**2))
        return weights / weights.sum()

    def kernel_2d(self) -> np.ndarray:
        # the normalized 2-D Gaussian factors exactly into normalized 1-D ones
        k = self.kernel_1d()
        return np.outer(k, k)


def smooth(img: PlanarImage, cfg: SmoothingConfig) -> PlanarImage:
    """Gaussian-smooth every plane independently with edge replication."""
    if cfg.kernel_size > img.width or cfg.kernel_size > img.height:
        raise ImageError(
            f"{cfg.kernel_size}x{cfg.kernel_size} kernel is larger than the "
            f"{img.width}x{img.height} image"
        )
    kernel = cfg.kernel_1d()
    smooth_plane = _backend.kernels.smooth_plane
    out = np.empty_like(img.planes)
    for c in range(img.planes.shape[0]):
        out[c] = smooth_plane(img.planes[c], kernel)
    return PlanarImage._adopt(out, img.space)

