"""Hamming distance and brute-force nearest-neighbour matching."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _backend
from .descriptors import Descriptor, DescriptorSet


class MatchError(ValueError):
    pass


@dataclass(frozen=True)
class MatchResult:
    query_index: int
    best_index: int
    distance: int
    second_distance: int


def hamming(a: Descriptor, b: Descriptor) -> int:
    if a.n_d != b.n_d:
        raise MatchError(f"descriptor lengths differ: {a.n_d} vs {b.n_d}")
    return int(np.bitwise_count(a.bits.view(np.uint64) ^ b.bits.view(np.uint64)).sum())


def _as_set(descriptors) -> DescriptorSet:
    if isinstance(descriptors, DescriptorSet):
        return descriptors
    return DescriptorSet.from_descriptors(descriptors)


def match_arrays(queries: DescriptorSet, targets: DescriptorSet):
    """``(best_index, distance, second_distance)`` arrays, one entry per query."""
    if len(targets) == 0:
        raise MatchError("cannot match against an empty target set")
    if queries.n_d != targets.n_d:
        raise MatchError(f"descriptor lengths differ: {queries.n_d} vs {targets.n_d}")
    if len(queries) == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty.copy(), empty.copy()
    return _backend.kernels.match_nearest(queries.words(), targets.words())


def match_nearest(queries, targets) -> list[MatchResult]:
    """Nearest target for every query; ties go to the lowest target index."""
    queries, targets = _as_set(queries), _as_set(targets)
    best, dist, second = match_arrays(queries, targets)
    return [
        MatchResult(i, int(b), int(d), int(s))
        for i, (b, d, s) in enumerate(zip(best.tolist(), dist.tolist(), second.tolist()))
    ]


def save_matches(matches, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["query_index", "best_index", "distance", "second_distance"])
        for m in matches:
            writer.writerow([m.query_index, m.best_index, m.distance, m.second_distance])


def load_matches(path) -> list[MatchResult]:
    with open(Path(path), newline="") as fh:
        return [
            MatchResult(int(r["query_index"]), int(r["best_index"]), int(r["distance"]), int(r["second_distance"]))
            for r in csv.DictReader(fh)
        ]
