"""Command-line entry point: ``chromabin gen-pattern|extract|match|evaluate|sweep``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
from pathlib import Path

from . import __version__, _backend
from .descriptors import (
    DescriptorConfig,
    DescriptorError,
    extract_prepared,
    load_descriptors,
    prepare_image,
    required_margin,
    save_descriptors,
    within_margin,
)
from .detect import DetectorConfig, detect_fast, load_keypoints, save_keypoints
from .evaluation import (
    EvaluationError,
    check_tasks,
    oxford_tasks,
    paired_variants,
    read_manifest,
    run_suite,
)
from .imagery import ColorSpace, ImageError, SmoothingConfig, load_image, to_gray
from .matching import MatchError, match_nearest, save_matches
from .patterns import (
    PatternError,
    dumps_pattern,
    generate_pair_pattern,
    generate_triplet_pattern,
    load_pattern,
)

log = logging.getLogger("chromabin")

DEFAULT_SEED = 7
DATASET_ENV = "CHROMABIN_DATASET_ROOT"
SWEEP_BITS_DEFAULT = (64, 128, 256, 512, 1024, 2048)
EXIT_OK, EXIT_FAIL, EXIT_PARTIAL = 0, 1, 2


def _atomic_write(path, data: "str | bytes") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode() if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _write_via(saver, obj, path) -> None:
    """Run a ``saver(obj, path)`` into a temp file and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        saver(obj, tmp)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return values


def _name_list(choices):
    def parse(text: str) -> list[str]:
        names = [v.strip().lower() for v in text.split(",") if v.strip()]
        bad = [n for n in names if n not in choices]
        if bad or not names:
            raise argparse.ArgumentTypeError(f"choose from {','.join(choices)}; got {text!r}")
        return names
    return parse


def _add_pattern_flags(p: argparse.ArgumentParser, *, kinds_plural: bool = False) -> None:
    if kinds_plural:
        p.add_argument("--kinds", type=_name_list(("pair", "triplet")), default=["pair", "triplet"],
                       help="descriptor kinds to evaluate (default: pair,triplet)")
    else:
        p.add_argument("--kind", choices=("pair", "triplet"), default="pair")
    p.add_argument("--bits", type=_positive_int, default=512, help="number of binary tests")
    p.add_argument("--window", type=int, default=48)
    p.add_argument("--patch", type=int, default=7, help="triplet patch size (odd)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--y-fraction", type=float, default=None, help="share of luma-only tests (ycbcr)")


def _add_smoothing_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sigma", type=float, default=None, help="override smoothing sigma")
    p.add_argument("--kernel-size", type=int, default=None, help="override smoothing kernel size")
    p.add_argument("--no-smooth", action="store_true", help="disable pre-smoothing")


def _add_detector_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threshold", type=_positive_int, default=20, help="FAST intensity threshold")
    p.add_argument("--max-keypoints", type=_positive_int, default=512)
    p.add_argument("--nms-radius", type=int, default=3)


def _smoothing(args):
    if args.no_smooth:
        return None
    if args.sigma is None and args.kernel_size is None:
        return "default"
    return SmoothingConfig(args.sigma if args.sigma is not None else 2.0,
                           args.kernel_size if args.kernel_size is not None else 9)


def _detector(args) -> DetectorConfig:
    return DetectorConfig(args.threshold, args.max_keypoints, args.nms_radius)


def _generate(args, space: str, kind: str, *, strict_y: bool = False):
    y_fraction = args.y_fraction if strict_y or space == "ycbcr" else None
    if kind == "pair":
        return generate_pair_pattern(space, args.bits, args.window, args.seed, y_fraction)
    return generate_triplet_pattern(space, args.bits, args.window, args.patch, args.seed, y_fraction)


# --- subcommands --------------------------------------------------------------

def cmd_gen_pattern(args) -> int:
    pattern = _generate(args, args.space, args.kind, strict_y=True)
    _atomic_write(args.out, dumps_pattern(pattern))
    print(f"wrote {pattern.kind} pattern: space={pattern.space.value} n_d={pattern.n_d} "
          f"window={pattern.window} seed={pattern.seed} -> {args.out}")
    return EXIT_OK


def cmd_extract(args) -> int:
    img = load_image(args.image)
    if args.pattern:
        pattern = load_pattern(args.pattern)
    else:
        pattern = _generate(args, args.space, args.kind)
    cfg = DescriptorConfig.for_pattern(pattern, _smoothing(args))

    if args.keypoints:
        keypoints = load_keypoints(args.keypoints)
    else:
        gray = img if img.space is ColorSpace.GRAY else to_gray(img)
        keypoints = detect_fast(gray, _detector(args))

    if not keypoints:
        log.warning("no keypoints found in %s", args.image)
        kept = []
    else:
        margin = required_margin(cfg)
        mask = within_margin([k.x for k in keypoints], [k.y for k in keypoints], img.width, img.height, margin)
        kept = [kp for kp, ok in zip(keypoints, mask) if ok]
        if not kept:
            print(f"error: all {len(keypoints)} keypoints lie within the {margin}px border margin",
                  file=sys.stderr)
            return EXIT_FAIL
        if len(kept) < len(keypoints):
            log.warning("dropped %d of %d keypoints inside the %dpx margin",
                        len(keypoints) - len(kept), len(keypoints), margin)

    prepared = prepare_image(img, cfg)
    descriptors = extract_prepared(prepared, kept, cfg)
    _write_via(save_keypoints, kept, args.out_keypoints)
    _write_via(save_descriptors, descriptors, args.out)
    print(f"extracted {len(descriptors)} {pattern.space.value} {pattern.kind} descriptors "
          f"({pattern.n_d} bits) -> {args.out}")
    return EXIT_OK


def cmd_match(args) -> int:
    queries = load_descriptors(args.query)
    targets = load_descriptors(args.target)
    matches = match_nearest(queries, targets)
    _write_via(save_matches, matches, args.out)
    print(f"matched {len(matches)} queries against {len(targets)} targets -> {args.out}")
    return EXIT_OK


def _tasks_from_args(args):
    if args.manifest:
        tasks = read_manifest(args.manifest)
        root = Path(args.manifest).parent
    else:
        root = args.dataset or os.environ.get(DATASET_ENV)
        if not root:
            raise EvaluationError(f"give --dataset, --manifest or set {DATASET_ENV}")
        tasks = oxford_tasks(root)
    check_tasks(tasks)
    return tasks, root


def _variants_from_args(args):
    if args.pattern:
        variants = []
        for path in args.pattern:
            pattern = load_pattern(path)
            variants.append(DescriptorConfig.for_pattern(pattern, _smoothing(args)))
        return variants
    variants = []
    for kind in args.kinds:
        variants.extend(paired_variants(
            args.auto_variants, [kind], args.bits, args.window, args.patch, args.seed,
            args.y_fraction, _smoothing(args),
        ))
    return variants


def cmd_evaluate(args) -> int:
    tasks, root = _tasks_from_args(args)
    variants = _variants_from_args(args)
    report = run_suite(tasks, variants, _detector(args), args.sweep_bits or (), args.sweep_patch or (),
                       jobs=args.jobs, dataset_root=root)
    report.config["argv"] = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    csv_path = Path(args.out_csv)
    json_path = Path(args.out_json) if args.out_json else csv_path.with_suffix(".json")
    _atomic_write(csv_path, report.to_csv())
    _atomic_write(json_path, report.to_json())
    print(f"{len(report.rows)} rows over {len(tasks)} pairs -> {csv_path}, {json_path}")
    if report.failures:
        for failure in report.failures:
            print(f"failed: {failure['label']}: {failure['error']}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_sweep(args) -> int:
    if not args.sweep_bits and not args.sweep_patch:
        args.sweep_bits = list(SWEEP_BITS_DEFAULT)
    return cmd_evaluate(args)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chromabin", description=__doc__)
    parser.add_argument("--version", action="version", version=f"chromabin {__version__} ({_backend.name})")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-pattern", help="generate a seeded sampling pattern file")
    p.add_argument("--space", choices=("gray", "rgb", "ycbcr"), default="gray")
    _add_pattern_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_pattern)

    p = sub.add_parser("extract", help="detect keypoints and write packed descriptors")
    p.add_argument("--image", required=True)
    p.add_argument("--pattern", help="pattern file (otherwise generated from the flags below)")
    p.add_argument("--space", choices=("gray", "rgb", "ycbcr"), default="gray")
    _add_pattern_flags(p)
    _add_smoothing_flags(p)
    _add_detector_flags(p)
    p.add_argument("--keypoints", help="import 'x y [response]' keypoints instead of detecting")
    p.add_argument("--out", required=True, help="descriptor dump")
    p.add_argument("--out-keypoints", required=True, help="keypoint list actually described")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("match", help="nearest-neighbour match two descriptor dumps")
    p.add_argument("--query", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True, help="CSV of matches")
    p.set_defaults(func=cmd_match)

    for name, func, help_text in (
        ("evaluate", cmd_evaluate, "run the matching-score protocol on image pairs"),
        ("sweep", cmd_sweep, "evaluate over a range of bit counts and/or patch sizes"),
    ):
        p = sub.add_parser(name, help=help_text)
        src = p.add_mutually_exclusive_group()
        src.add_argument("--dataset", help=f"Oxford-style set or parent directory (env {DATASET_ENV})")
        src.add_argument("--manifest", help="text file of 'label image1 image2 homography' lines")
        var = p.add_mutually_exclusive_group()
        var.add_argument("--pattern", action="append", help="pattern file; repeatable")
        var.add_argument("--auto-variants", type=_name_list(("gray", "rgb", "ycbcr")),
                         default=["gray", "rgb", "ycbcr"],
                         help="spaces generated from one seed with a shared spatial layout")
        _add_pattern_flags(p, kinds_plural=True)
        _add_smoothing_flags(p)
        _add_detector_flags(p)
        p.add_argument("--sweep-bits", type=_int_list, default=None)
        p.add_argument("--sweep-patch", type=_int_list, default=None)
        p.add_argument("--jobs", type=_positive_int, default=1, help="parallel image pairs")
        p.add_argument("--out-csv", default="report.csv")
        p.add_argument("--out-json", default=None, help="defaults to the CSV path with .json")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.captureWarnings(True)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s: %(message)s",
    )
    try:
        return args.func(args)
    except (PatternError, ImageError, DescriptorError, MatchError, EvaluationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
