"""Cost profile of the column-run inverted index against a linear scan."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .. import _kernels
from ..descriptor import DescriptorSet, QuicciImage, weighted_reference_length
from ..runindex import build_run_index, possible_runs, query_run_index


def images_with_density(count: int, width: int, height: int, set_bits: int, rng: np.random.Generator) -> np.ndarray:
    """Packed images with exactly ``set_bits`` bits set at random positions."""
    total = width * height
    bits = np.zeros((count, total), dtype=bool)
    for i in range(count):
        bits[i, rng.choice(total, size=set_bits, replace=False)] = True
    padded = np.zeros((count, -(-total // 64) * 64), dtype=bool)
    padded[:, :total] = bits
    return np.packbits(padded, axis=1, bitorder="little").view("<u8").astype(np.uint64)


def mixed_corpus(count: int, width: int, height: int, rng: np.random.Generator) -> DescriptorSet:
    """Images with a spread of densities from very sparse to about half set."""
    total = width * height
    parts = []
    sparse = max(1, min(32, total // 8))
    medium = max(sparse, min(256, total // 4))
    for lo, hi in ((1, sparse), (sparse, medium), (medium, max(medium, total // 2))):
        n = count // 3 + (1 if len(parts) < count % 3 else 0)
        for s in rng.integers(lo, hi + 1, size=n):
            parts.append(images_with_density(1, width, height, int(s), rng))
    words = np.vstack(parts) if parts else np.zeros((0, -(-total // 64)), dtype=np.uint64)
    prov = np.column_stack([np.zeros(len(words), np.uint32), np.arange(len(words), dtype=np.uint32)])
    return DescriptorSet(width, height, words, prov)


def weighted_linear_scan(dset: DescriptorSet, needle: QuicciImage, k: int) -> list[tuple[float, int, int]]:
    dist = np.empty(len(dset), dtype=np.float64)
    _kernels.weighted_one_to_many(needle.words, dset.words, weighted_reference_length(needle.total_bits), dist)
    prov = dset.provenance
    order = np.lexsort((np.arange(len(dset)), prov[:, 1], prov[:, 0], dist))[:k]
    return [(float(dist[i]), int(prov[i, 0]), int(prov[i, 1])) for i in order]


@dataclass
class RunIndexStudyRow:
    needle_bits: int
    queries: int
    mean_candidate_fraction: float
    mean_index_seconds: float
    mean_linear_seconds: float
    exact_matches: int


def run_runindex_study(dset: DescriptorSet, densities, needles_per_density: int, k: int,
                       rng: np.random.Generator) -> tuple[list[RunIndexStudyRow], dict]:
    start = time.perf_counter()
    index = build_run_index(dset)
    build_seconds = time.perf_counter() - start
    rows = []
    for s in densities:
        needles = images_with_density(needles_per_density, dset.width, dset.height, int(s), rng)
        fractions, t_index, t_linear, exact = [], [], [], 0
        for w in needles:
            needle = QuicciImage(dset.width, dset.height, w)
            t0 = time.perf_counter()
            results, stats = query_run_index(index, needle, k)
            t1 = time.perf_counter()
            oracle = weighted_linear_scan(dset, needle, k)
            t2 = time.perf_counter()
            got = [(r.distance, r.provenance.object_id, r.provenance.vertex_index) for r in results]
            exact += got == oracle
            fractions.append(stats.candidate_fraction)
            t_index.append(t1 - t0)
            t_linear.append(t2 - t1)
        rows.append(RunIndexStudyRow(int(s), len(needles), float(np.mean(fractions)), float(np.mean(t_index)),
                                     float(np.mean(t_linear)), exact))
    summary = {
        "corpus_size": len(dset),
        "list_count": len(index.lists),
        "list_entries": index.entry_count,
        "possible_runs": possible_runs(dset.height) * dset.width,
        "build_seconds": build_seconds,
    }
    return rows, summary


def write_runindex_study(rows: list[RunIndexStudyRow], summary: dict, out) -> None:
    out.write_csv("runindex_costs.csv",
                  ["needle_bits", "queries", "mean_candidate_fraction", "mean_index_seconds",
                   "mean_linear_seconds", "exact_matches"],
                  [[r.needle_bits, r.queries, f"{r.mean_candidate_fraction:.6f}", f"{r.mean_index_seconds:.6g}",
                    f"{r.mean_linear_seconds:.6g}", r.exact_matches] for r in rows])
    out.write_csv("runindex_summary.csv", ["key", "value"], [[k, v] for k, v in summary.items()])
