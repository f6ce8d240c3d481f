"""Throughput benchmarks: descriptor comparisons and descriptor generation."""

from __future__ import annotations

import time

import numpy as np

from .. import _kernels
from ..descriptor import DISTANCE_FUNCTIONS, quicci_from_counts, weighted_reference_length
from ..intersection import DescriptorConfig, TriangleLocator, compute_intersection_counts
from ..mesh import Mesh, icosphere, unique_vertex_indices, vertex_normals


def random_images(count: int, total_bits: int, rng: np.random.Generator, density: float = 0.15) -> np.ndarray:
    """Packed random bit strings with the given expected density."""
    nwords = -(-total_bits // 64)
    out = np.empty((count, nwords), dtype=np.uint64)
    # blocks keep the temporary float and bool arrays small
    block = max(1, (1 << 24) // max(total_bits, 1))
    for s in range(0, count, block):
        n = min(block, count - s)
        padded = np.zeros((n, nwords * 64), dtype=bool)
        padded[:, :total_bits] = rng.random((n, total_bits), dtype=np.float32) < density
        out[s:s + n] = np.packbits(padded, axis=1, bitorder="little").view("<u8")
    return out


def _one_to_many(function: str, total_bits: int):
    if function == "hamming":
        return lambda needle, hay, out: _kernels.hamming_one_to_many(needle, hay, out)
    if function == "clutter":
        return lambda needle, hay, out: _kernels.missing_one_to_many(needle, hay, out)
    if function == "weighted":
        ref = weighted_reference_length(total_bits)
        return lambda needle, hay, out: _kernels.weighted_one_to_many(needle, hay, ref, out)
    raise ValueError(f"unknown distance function {function!r}; expected one of {DISTANCE_FUNCTIONS}")


def bench_comparison_rate(images: np.ndarray, function: str = "hamming", duration: float = 1.0,
                          total_bits: int | None = None) -> float:
    """Pairwise comparisons per second of one needle against the whole set,
    repeated with rotating needles until ``duration`` seconds have passed."""
    images = np.ascontiguousarray(images, dtype=np.uint64)
    if len(images) == 0:
        raise ValueError("need at least one image")
    total_bits = total_bits or images.shape[1] * 64
    kernel = _one_to_many(function, total_bits)
    out = np.empty(len(images), dtype=np.float64 if function == "weighted" else np.int64)
    kernel(images[0], images, out)  # compile and warm caches
    pairs = 0
    i = 0
    start = time.perf_counter()
    while True:
        kernel(images[i % len(images)], images, out)
        pairs += len(images)
        i += 1
        elapsed = time.perf_counter() - start
        if elapsed >= duration:
            return pairs / elapsed


def sphere_scene(subdivisions: int) -> Mesh:
    v, t = icosphere(subdivisions)
    return Mesh(v, vertex_normals(v, t), t)


def bench_generation_rate(scenes, config: DescriptorConfig | None = None, repeats: int = 1) -> list[dict]:
    """(triangle count, descriptors, seconds, rate) for each scene, describing
    every unique vertex.  Reports the best of ``repeats`` timings."""
    config = config or DescriptorConfig()
    rows = []
    warm = sphere_scene(0)
    compute_intersection_counts(warm, warm.vertices[:1], warm.normals[:1], config)
    for scene in scenes:
        idx = unique_vertex_indices(scene)
        best = float("inf")
        words = None
        for _ in range(max(repeats, 1)):
            start = time.perf_counter()
            if len(idx):
                locator = TriangleLocator(scene)
                counts = compute_intersection_counts(scene, scene.vertices[idx], scene.normals[idx], config, locator)
                words = quicci_from_counts(counts)
            best = min(best, time.perf_counter() - start)
        rate = len(idx) / best if len(idx) and best > 0 else 0.0
        rows.append({"triangles": scene.triangle_count, "descriptors": int(len(idx)), "seconds": best,
                     "rate": rate, "words": words})
    return rows
