"""Homography-based matching-score evaluation of descriptor variants.

For an image pair the protocol is:

1. detect keypoints on the first image only;
2. carry them into the second image with the ground-truth homography;
3. drop keypoints too close to a border in either image;
4. extract descriptors at the original and at the mapped positions;
5. match every first-image descriptor against all second-image ones.

Query ``i`` is correct when its nearest neighbour is target ``i``, since
the two descriptor lists are index-aligned by construction. The score is
the percentage of correct queries.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__, _backend
from .descriptors import (
    DescriptorConfig,
    extract_prepared,
    prepare_image,
    required_margin,
    within_margin,
)
from .detect import DetectorConfig, detect_fast
from .imagery import ColorSpace, PlanarImage, load_image, to_gray
from .matching import match_arrays
from .patterns import (
    PairPattern,
    PatternError,
    TripletPattern,
    generate_pair_pattern,
    generate_triplet_pattern,
    pattern_digest,
    regenerate,
)

log = logging.getLogger(__name__)

REPORT_COLUMNS = (
    "label", "variant", "kind", "n_d", "patch_size",
    "n_total", "n_correct", "score", "rgb_ri", "ycbcr_ri",
)
OXFORD_IMAGE_SUFFIXES = (".ppm", ".pgm", ".png")


class EvaluationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Homography:
    matrix: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.matrix, dtype=np.float64)
        if h.shape != (3, 3) or not np.all(np.isfinite(h)):
            raise EvaluationError(f"homography must be a finite 3x3 matrix, got shape {h.shape}")
        norm = np.linalg.norm(h)
        if norm == 0 or abs(np.linalg.det(h / norm)) < 1e-9:
            raise EvaluationError("homography is singular")
        h = h.copy()
        h.flags.writeable = False
        object.__setattr__(self, "matrix", h)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def from_file(cls, path) -> "Homography":
        try:
            values = [float(v) for v in Path(path).read_text().split()]
        except (OSError, ValueError) as exc:
            raise EvaluationError(f"cannot read homography {path}: {exc}") from exc
        if len(values) != 9:
            raise EvaluationError(f"{path}: expected 9 values, got {len(values)}")
        return cls(np.array(values).reshape(3, 3))

    def save(self, path) -> None:
        Path(path).write_text("\n".join(" ".join(repr(float(v)) for v in row) for row in self.matrix) + "\n")

    def map_point(self, x: float, y: float) -> tuple[int, int]:
        u, v, w = self.matrix @ np.array([x, y, 1.0])
        if abs(w) < 1e-12:
            raise EvaluationError(f"point ({x}, {y}) maps to infinity")
        return int(math.floor(u / w + 0.5)), int(math.floor(v / w + 0.5))

    def map_points(self, xs, ys) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorised :meth:`map_point`; the third array flags points with a usable image."""
        pts = np.stack([np.asarray(xs, float), np.asarray(ys, float), np.ones(len(xs))])
        u, v, w = self.matrix @ pts
        ok = np.abs(w) >= 1e-12
        w = np.where(ok, w, 1.0)
        mx, my = u / w, v / w
        ok &= np.isfinite(mx) & np.isfinite(my) & (np.abs(mx) < 2**30) & (np.abs(my) < 2**30)
        mx = np.floor(np.where(ok, mx, 0) + 0.5).astype(np.int64)
        my = np.floor(np.where(ok, my, 0) + 0.5).astype(np.int64)
        return mx, my, ok


def relative_improvement(p_gray: float, p_color: float) -> float | None:
    """Percent gain of a color score over the gray baseline; ``None`` when gray scored 0."""
    if p_gray <= 0:
        return None
    return 100.0 * (p_color - p_gray) / p_gray


def format_ri(ri: float | None) -> str:
    """Table-style rendering: whole percent, or ``-`` when undefined."""
    if ri is None:
        return "-"
    return f"{math.floor(ri + 0.5):d}%"


@dataclass(frozen=True)
class ImagePairTask:
    label: str
    image1: Path
    image2: Path
    homography: "Path | Homography"


@dataclass
class ReportRow:
    label: str
    variant: str
    kind: str
    n_d: int
    patch_size: int
    n_total: int
    n_correct: int
    score: float
    rgb_ri: float | None = None
    ycbcr_ri: float | None = None


@dataclass
class EvaluationReport:
    rows: list[ReportRow] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in self.rows:
            values = asdict(row)
            values["score"] = f"{row.score:.4f}"
            for key in ("rgb_ri", "ycbcr_ri"):
                values[key] = "-" if values[key] is None else f"{values[key]:.4f}"
            writer.writerow([values[c] for c in REPORT_COLUMNS])
        return buf.getvalue()

    def to_json(self) -> str:
        payload = {
            "config": self.config,
            "rows": [asdict(r) for r in self.rows],
            "failures": self.failures,
        }
        return json.dumps(payload, indent=2) + "\n"

    def find(self, label: str, variant: str, kind: str = "pair", n_d: int | None = None,
             patch_size: int | None = None) -> ReportRow:
        for row in self.rows:
            if (row.label, row.variant, row.kind) == (label, variant, kind) and \
                    (n_d is None or row.n_d == n_d) and (patch_size is None or row.patch_size == patch_size):
                return row
        raise KeyError((label, variant, kind, n_d, patch_size))


def fill_relative_improvements(rows: Sequence[ReportRow]) -> None:
    """Set ``rgb_ri``/``ycbcr_ri`` on every row from the gray row of its group."""
    groups: dict[tuple, dict[str, ReportRow]] = {}
    for row in rows:
        groups.setdefault((row.label, row.kind, row.n_d, row.patch_size), {})[row.variant] = row
    for members in groups.values():
        gray = members.get(ColorSpace.GRAY.value)
        rgb = members.get(ColorSpace.RGB.value)
        ycbcr = members.get(ColorSpace.YCBCR.value)
        rgb_ri = relative_improvement(gray.score, rgb.score) if gray and rgb else None
        ycbcr_ri = relative_improvement(gray.score, ycbcr.score) if gray and ycbcr else None
        for row in members.values():
            row.rgb_ri, row.ycbcr_ri = rgb_ri, ycbcr_ri


# --- single pair ------------------------------------------------------------

def evaluate_images(img1: PlanarImage, img2: PlanarImage, homography: Homography,
                    variants: Sequence[DescriptorConfig], det: DetectorConfig = DetectorConfig(),
                    label: str = "") -> list[ReportRow]:
    """Run the matching protocol on in-memory images (no RI filled in)."""
    color_ok = img1.space is ColorSpace.RGB and img2.space is ColorSpace.RGB
    active = []
    for cfg in variants:
        if cfg.space is not ColorSpace.GRAY and not color_ok:
            log.warning("%s: skipping %s %s variant on grayscale imagery", label, cfg.space.value, cfg.kind)
            continue
        active.append(cfg)
    if not active:
        return []

    gray1 = img1 if img1.space is ColorSpace.GRAY else to_gray(img1)
    keypoints = detect_fast(gray1, det)
    xs = np.array([kp.x for kp in keypoints], dtype=np.int64)
    ys = np.array([kp.y for kp in keypoints], dtype=np.int64)
    mx, my, finite = homography.map_points(xs, ys)

    # one keypoint set for every variant keeps the comparison paired
    margin = max(required_margin(cfg) for cfg in active)
    keep = finite & within_margin(xs, ys, img1.width, img1.height, margin) \
        & within_margin(mx, my, img2.width, img2.height, margin)
    n_total = int(keep.sum())
    if n_total < 2:
        raise EvaluationError(
            f"{label}: only {n_total} of {len(keypoints)} keypoints survive the {margin}px margin"
        )
    pts1 = np.column_stack([xs[keep], ys[keep]])
    pts2 = np.column_stack([mx[keep], my[keep]])
    expected = np.arange(n_total)

    prepared: dict[tuple, tuple[PlanarImage, PlanarImage]] = {}
    rows = []
    for cfg in active:
        key = (cfg.space, cfg.smoothing)
        if key not in prepared:
            prepared[key] = (prepare_image(img1, cfg), prepare_image(img2, cfg))
        prep1, prep2 = prepared[key]
        d1 = extract_prepared(prep1, pts1, cfg)
        d2 = extract_prepared(prep2, pts2, cfg)
        best, _, _ = match_arrays(d1, d2)
        n_correct = int(np.count_nonzero(best == expected))
        rows.append(ReportRow(
            label=label,
            variant=cfg.space.value,
            kind=cfg.kind,
            n_d=cfg.n_d,
            patch_size=cfg.pattern.patch_size,
            n_total=n_total,
            n_correct=n_correct,
            score=100.0 * n_correct / n_total,
        ))
    return rows


def run_pair(task: ImagePairTask, variants: Sequence[DescriptorConfig],
             det: DetectorConfig = DetectorConfig()) -> list[ReportRow]:
    img1 = load_image(task.image1)
    img2 = load_image(task.image2)
    homography = task.homography
    if not isinstance(homography, Homography):
        homography = Homography.from_file(homography)
    rows = evaluate_images(img1, img2, homography, variants, det, task.label)
    fill_relative_improvements(rows)
    return rows


# --- suites -------------------------------------------------------------------

def expand_variants(variants: Iterable[DescriptorConfig], sweep_bits: Sequence[int] = (),
                    sweep_patch: Sequence[int] = ()) -> list[DescriptorConfig]:
    """Cross every variant with the requested bit counts and (triplet) patch sizes."""
    out: list[DescriptorConfig] = []
    seen = set()
    for cfg in variants:
        bit_counts = list(sweep_bits) or [cfg.n_d]
        patches = list(sweep_patch) if isinstance(cfg.pattern, TripletPattern) and sweep_patch else [None]
        for n_d in bit_counts:
            for patch in patches:
                if n_d == cfg.n_d and patch in (None, cfg.pattern.patch_size):
                    pattern = cfg.pattern
                else:
                    pattern = regenerate(cfg.pattern, n_d=n_d, patch_size=patch)
                key = (pattern.kind, pattern.space, pattern.n_d, pattern.patch_size, pattern_digest(pattern), cfg.smoothing)
                if key in seen:
                    continue
                seen.add(key)
                out.append(DescriptorConfig(pattern, cfg.smoothing))
    return out


def describe_variant(cfg: DescriptorConfig) -> dict:
    p = cfg.pattern
    return {
        "variant": p.space.value,
        "kind": p.kind,
        "n_d": p.n_d,
        "window": p.window,
        "patch_size": p.patch_size,
        "seed": p.seed,
        "y_fraction": p.y_fraction,
        "rng": p.rng,
        "smoothing": None if cfg.smoothing is None else asdict(cfg.smoothing),
        "pattern_sha256": pattern_digest(p),
    }


def run_suite(tasks: Sequence[ImagePairTask], variants: Sequence[DescriptorConfig],
              det: DetectorConfig = DetectorConfig(), sweep_bits: Sequence[int] = (),
              sweep_patch: Sequence[int] = (), jobs: int = 1, dataset_root=None) -> EvaluationReport:
    """Evaluate every task against every (swept) variant; task failures are recorded, not raised."""
    try:
        expanded = expand_variants(variants, sweep_bits, sweep_patch)
    except PatternError as exc:
        raise EvaluationError(str(exc)) from exc
    config = {
        "tool": "chromabin",
        "version": __version__,
        "backend": _backend.name,
        "dataset_root": None if dataset_root is None else str(dataset_root),
        "detector": asdict(det),
        "sweep_bits": list(sweep_bits),
        "sweep_patch": list(sweep_patch),
        "variants": [describe_variant(v) for v in expanded],
        "tasks": [
            {"label": t.label, "image1": str(t.image1), "image2": str(t.image2),
             "homography": str(t.homography) if not isinstance(t.homography, Homography)
             else t.homography.matrix.tolist()}
            for t in tasks
        ],
    }
    report = EvaluationReport(config=config)

    def one(task):
        try:
            return run_pair(task, expanded, det), None
        except Exception as exc:  # noqa: BLE001 - a broken pair must not stop the suite
            log.error("%s: %s", task.label, exc)
            return [], {"label": task.label, "error": f"{type(exc).__name__}: {exc}"}

    if jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, tasks))
    else:
        results = [one(t) for t in tasks]
    for rows, failure in results:
        report.rows.extend(rows)
        if failure:
            report.failures.append(failure)
    return report


# --- task discovery -----------------------------------------------------------

def _find_image(directory: Path, stem: str) -> Path | None:
    for suffix in OXFORD_IMAGE_SUFFIXES:
        candidate = directory / f"{stem}{suffix}"
        if candidate.exists():
            return candidate
    return None


def oxford_tasks(root) -> list[ImagePairTask]:
    """Tasks ``name 1|k`` (k = 2..6) for an Oxford-style set, or for each set under ``root``."""
    root = Path(root)
    if not root.is_dir():
        raise EvaluationError(f"dataset path {root} is not a directory")
    if _find_image(root, "img1") is None:
        tasks = []
        for sub in sorted(p for p in root.iterdir() if p.is_dir()):
            if _find_image(sub, "img1") is not None:
                tasks.extend(oxford_tasks(sub))
        if not tasks:
            raise EvaluationError(f"no Oxford-style image sets (img1.ppm ...) under {root}")
        return tasks
    first = _find_image(root, "img1")
    tasks = []
    for k in range(2, 7):
        second = _find_image(root, f"img{k}")
        if second is None:
            continue
        tasks.append(ImagePairTask(f"{root.name} 1|{k}", first, second, root / f"H1to{k}p"))
    return tasks


def read_manifest(path) -> list[ImagePairTask]:
    """Lines ``label image1 image2 homography``; the label may contain spaces."""
    path = Path(path)
    base = path.parent
    tasks = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 4:
            raise EvaluationError(f"{path}:{lineno}: expected 'label image1 image2 homography'")
        label = " ".join(parts[:-3])
        image1, image2, homography = (base / p for p in parts[-3:])
        tasks.append(ImagePairTask(label, image1, image2, homography))
    return tasks


def check_tasks(tasks: Sequence[ImagePairTask]) -> None:
    for task in tasks:
        for p in (task.image1, task.image2, task.homography):
            if isinstance(p, Path) and not p.exists():
                raise EvaluationError(f"{task.label}: missing file {p}")


def paired_variants(spaces: Sequence[str], kinds: Sequence[str], n_d: int = 512, window: int = 48,
                    patch_size: int = 7, seed: int = 0, y_fraction: float | None = None,
                    smoothing="default") -> list[DescriptorConfig]:
    """Variants sharing one spatial layout per kind, channels drawn per space."""
    out = []
    for kind in kinds:
        for space in spaces:
            space = ColorSpace.parse(space)
            yf = y_fraction if space is ColorSpace.YCBCR else None
            if kind == "pair":
                pattern: PairPattern | TripletPattern = generate_pair_pattern(space, n_d, window, seed, yf)
            elif kind == "triplet":
                pattern = generate_triplet_pattern(space, n_d, window, patch_size, seed, yf)
            else:
                raise ValueError(f"unknown descriptor kind {kind!r}")
            out.append(DescriptorConfig.for_pattern(pattern, smoothing))
    return out
