"""Inverted index over vertical runs of set bits, ranked by Weighted Hamming.

Every maximal run of consecutive set bits within an image column is a key;
its list holds every image containing that exact run.  A query gathers all
lists whose run overlaps a set bit of the needle.  The structure exists to
measure how large that candidate set gets; for dense needles it approaches
the whole corpus.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels
from .descriptor import DescriptorSet, Provenance, QuicciImage, weighted_reference_length


class ColumnRun(NamedTuple):
    column: int
    start_row: int
    length: int


def _column_runs(bits: np.ndarray) -> list[ColumnRun]:
    """Maximal vertical runs of a (H, W) boolean array, ordered (column, start)."""
    h, w = bits.shape
    cols = bits.T.astype(np.int8)
    padded = np.zeros((w, h + 2), dtype=np.int8)
    padded[:, 1:-1] = cols
    diff = np.diff(padded, axis=1)
    sc, sr = np.nonzero(diff == 1)
    ec, er = np.nonzero(diff == -1)
    # both nonzero() results are row-major, so starts and ends pair up
    return [ColumnRun(c, s, e - s) for c, s, e in zip(sc.tolist(), sr.tolist(), er.tolist())]


def extract_runs(image: QuicciImage) -> list[ColumnRun]:
    return _column_runs(image.to_bits())


def render_runs(runs, width: int, height: int) -> QuicciImage:
    bits = np.zeros((height, width), dtype=bool)
    for c, s, n in runs:
        bits[s:s + n, c] = True
    return QuicciImage.from_bits(bits)


def possible_runs(height: int) -> int:
    """Distinct runs that fit in one column of the given height."""
    return height * (height + 1) // 2


class RunSearchResult(NamedTuple):
    image: QuicciImage
    provenance: Provenance
    distance: float


@dataclass
class RunQueryStats:
    lists_scanned: int = 0
    list_entries: int = 0
    candidates: int = 0
    corpus_size: int = 0

    @property
    def candidate_fraction(self) -> float:
        return self.candidates / self.corpus_size if self.corpus_size else 0.0


@dataclass
class RunInvertedIndex:
    width: int
    height: int
    words: np.ndarray
    provenance: np.ndarray
    set_counts: np.ndarray
    # run -> list of (image id, total set bits of that image)
    lists: dict[ColumnRun, list[tuple[int, int]]] = field(default_factory=dict)
    # column -> runs present in the index for that column
    by_column: dict[int, list[ColumnRun]] = field(default_factory=dict)

    def __len__(self):
        return self.words.shape[0]

    @property
    def entry_count(self) -> int:
        return sum(len(v) for v in self.lists.values())


def build_run_index(dset: DescriptorSet) -> RunInvertedIndex:
    n = len(dset)
    counts = np.empty(n, dtype=np.int64)
    _kernels.popcount_rows(dset.words, counts)
    prov = dset.provenance if dset.provenance is not None else np.column_stack(
        [np.zeros(n, dtype=np.uint32), np.arange(n, dtype=np.uint32)])
    lists: dict[ColumnRun, list] = defaultdict(list)
    for i in range(n):
        bits = QuicciImage(dset.width, dset.height, dset.words[i]).to_bits()
        total = int(counts[i])
        for run in _column_runs(bits):
            lists[run].append((i, total))
    by_column: dict[int, list[ColumnRun]] = defaultdict(list)
    for run in sorted(lists):
        by_column[run.column].append(run)
    return RunInvertedIndex(dset.width, dset.height, dset.words, np.asarray(prov, dtype=np.uint32),
                            counts, dict(lists), dict(by_column))


def _overlapping_lists(index: RunInvertedIndex, needle_bits: np.ndarray):
    for c in range(index.width):
        rows = np.nonzero(needle_bits[:, c])[0]
        if not len(rows):
            continue
        for run in index.by_column.get(c, ()):
            lo = np.searchsorted(rows, run.start_row)
            if lo < len(rows) and rows[lo] < run.start_row + run.length:
                yield index.lists[run]


def candidate_set(index: RunInvertedIndex, needle: QuicciImage, stats: RunQueryStats | None = None) -> np.ndarray:
    """Ids of images sharing at least one run overlap with the needle's set bits."""
    seen = np.zeros(len(index), dtype=bool)
    for entries in _overlapping_lists(index, needle.to_bits()):
        if stats is not None:
            stats.lists_scanned += 1
            stats.list_entries += len(entries)
        for image_id, _ in entries:
            seen[image_id] = True
    return np.nonzero(seen)[0]


def query_run_index(index: RunInvertedIndex, needle: QuicciImage, k: int = 32,
                    complete: bool = True) -> tuple[list[RunSearchResult], RunQueryStats]:
    """Top-k by Weighted Hamming among images reachable through the run lists.

    Images outside the candidate set miss every needle bit, so their distance
    is ``1 + set_bits / (T - S)`` and depends only on the stored totals.  With
    ``complete`` such images are merged in by total, which makes the result
    identical to a linear scan whenever the needle has a set bit.  An all-zero
    needle reaches no list and yields no results.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if needle.shape != (index.height, index.width):
        raise ValueError("needle size does not match the index")
    stats = RunQueryStats(corpus_size=len(index))
    cand = candidate_set(index, needle, stats)
    stats.candidates = len(cand)
    total_bits = weighted_reference_length(index.width * index.height)
    dist = np.empty(len(cand), dtype=np.float64)
    _kernels.weighted_one_to_subset(needle.words, index.words, cand.astype(np.int64), total_bits, dist)
    ids = cand
    s = needle.popcount()
    if complete and s > 0 and len(cand) < len(index):
        mask = np.ones(len(index), dtype=bool)
        mask[cand] = False
        rest = np.nonzero(mask)[0]
        order = np.lexsort((rest, index.provenance[rest, 1], index.provenance[rest, 0], index.set_counts[rest]))
        rest = rest[order[:k]]
        rest_dist = 1.0 + index.set_counts[rest] / max(total_bits - s, 1)
        ids = np.concatenate([ids, rest])
        dist = np.concatenate([dist, rest_dist])
    prov = index.provenance[ids]
    order = np.lexsort((ids, prov[:, 1], prov[:, 0], dist))[:k]
    results = [
        RunSearchResult(QuicciImage(index.width, index.height, index.words[i]),
                        Provenance(int(index.provenance[i, 0]), int(index.provenance[i, 1])), float(dist[j]))
        for j, i in zip(order.tolist(), ids[order].tolist())
    ]
    return results, stats
