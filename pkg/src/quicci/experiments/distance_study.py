"""Distance-function response study.

Two parts:

* nominal: random pairs of distinct objects, comparing descriptors of
  vertices with the same index;
* perturbation: small spheres are dropped onto an object's surface in steps,
  and each original vertex descriptor is compared against its own
  descriptor in the perturbed scene.

Intersection counts are additive over triangles, so the perturbed counts at
each step are the previous step's counts plus the counts contributed by the
newly added spheres alone.  This avoids recomputing the whole object at
every step and gives bit-identical results (checked in the tests).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .. import _kernels
from ..descriptor import quicci_from_counts, weighted_reference_length
from ..intersection import DescriptorConfig, compute_intersection_counts
from ..mesh import Mesh, add_spheres, fit_unit_sphere, load_mesh, sample_surface, unique_vertex_indices

FUNCTIONS = ("hamming", "clutter", "weighted")
WEIGHTED_BINS = 200
WEIGHTED_BIN_WIDTH = 0.01


@dataclass
class DistanceStudyConfig:
    width: int = 64
    height: int = 64
    support_radius: float = 0.3
    sphere_radius: float = 0.05
    sphere_step: int = 10
    sphere_max: int = 500
    object_count: int = 100
    pair_count: int = 100
    seed: int = 0
    sphere_subdivisions: int = 2
    dataset: list = field(default_factory=list)

    def __post_init__(self):
        if self.sphere_step < 1 or self.sphere_max < 0 or self.sphere_max % self.sphere_step:
            raise ValueError("sphere_max must be a non-negative multiple of sphere_step")

    @property
    def descriptor(self) -> DescriptorConfig:
        return DescriptorConfig.for_image(self.width, self.height, self.support_radius)

    @property
    def sphere_counts(self) -> list[int]:
        return list(range(0, self.sphere_max + 1, self.sphere_step))

    def echo(self) -> dict:
        d = asdict(self)
        d["dataset"] = [str(p) if not isinstance(p, Mesh) else f"<mesh {i}>" for i, p in enumerate(self.dataset)]
        d["bins"] = {"hamming": "integer", "clutter": "integer",
                     "weighted": f"{WEIGHTED_BINS} x {WEIGHTED_BIN_WIDTH} on [0, 2]"}
        return d


class DistanceHistogram:
    """Histogram of one distance function's values plus a running sum."""

    def __init__(self, function: str, total_bits: int):
        self.function = function
        size = WEIGHTED_BINS if function == "weighted" else total_bits + 1
        self.counts = np.zeros(size, dtype=np.int64)
        self.total = 0.0
        self.n = 0

    def add(self, values: np.ndarray) -> None:
        values = np.asarray(values)
        if not len(values):
            return
        if self.function == "weighted":
            bins = np.minimum((values / WEIGHTED_BIN_WIDTH).astype(np.int64), WEIGHTED_BINS - 1)
        else:
            bins = values.astype(np.int64)
        self.counts += np.bincount(bins, minlength=len(self.counts))
        self.total += float(values.sum())
        self.n += len(values)

    @property
    def mean(self) -> float:
        return self.total / self.n if self.n else 0.0

    def bin_label(self, b: int):
        return f"{b * WEIGHTED_BIN_WIDTH:.2f}" if self.function == "weighted" else b


@dataclass
class DistanceHistogramSeries:
    sphere_counts: list[int]
    histograms: dict[tuple[str, int], DistanceHistogram]

    def mean(self, function: str, spheres: int) -> float:
        return self.histograms[(function, spheres)].mean

    def means(self, function: str) -> list[float]:
        return [self.mean(function, s) for s in self.sphere_counts]


@dataclass
class DistanceStudyResult:
    config: DistanceStudyConfig
    nominal: dict[str, DistanceHistogram]
    series: DistanceHistogramSeries
    objects_used: int


def pair_distances(needles: np.ndarray, haystacks: np.ndarray, total_bits: int) -> dict[str, np.ndarray]:
    """Element-wise distances between two equally long word arrays."""
    counts = np.empty((len(needles), 2), dtype=np.int64)
    _kernels.pairwise_counts(np.ascontiguousarray(needles), np.ascontiguousarray(haystacks), counts)
    missing, extra = counts[:, 0], counts[:, 1]
    s = _kernels_popcount(needles)
    ref = weighted_reference_length(total_bits)
    weighted = missing / np.maximum(s, 1) + extra / np.maximum(ref - s, 1)
    return {"hamming": missing + extra, "clutter": missing, "weighted": weighted}


def _kernels_popcount(words: np.ndarray) -> np.ndarray:
    out = np.empty(len(words), dtype=np.int64)
    _kernels.popcount_rows(np.ascontiguousarray(words), out)
    return out


def _load(item) -> Mesh:
    return item if isinstance(item, Mesh) else load_mesh(item)


def perturbation_series(mesh: Mesh, config: DistanceStudyConfig, rng: np.random.Generator,
                        sink: dict[tuple[str, int], DistanceHistogram]) -> None:
    """Feed one object's before/after distances at every sphere count into ``sink``."""
    desc = config.descriptor
    total_bits = desc.width * desc.height
    idx = unique_vertex_indices(mesh)
    pos, nrm = mesh.vertices[idx], mesh.normals[idx]
    counts = compute_intersection_counts(mesh, pos, nrm, desc)
    base = quicci_from_counts(counts)
    sample_pos, sample_nrm = sample_surface(mesh, config.sphere_max, rng) if config.sphere_max else (
        np.zeros((0, 3)), np.zeros((0, 3)))
    prev = 0
    for spheres in config.sphere_counts:
        if spheres > prev:
            new = add_spheres(Mesh.empty(), (sample_pos[prev:spheres], sample_nrm[prev:spheres]),
                              config.sphere_radius, config.sphere_subdivisions)
            counts = counts + compute_intersection_counts(new, pos, nrm, desc)
            prev = spheres
        words = quicci_from_counts(counts) if spheres else base
        for name, values in pair_distances(base, words, total_bits).items():
            sink[(name, spheres)].add(values)


def perturbed_descriptors(mesh: Mesh, config: DistanceStudyConfig, sphere_points, spheres: int) -> np.ndarray:
    """Direct (non-incremental) descriptors of the original unique vertices
    after adding the first ``spheres`` sphere points; used to validate the
    incremental path."""
    desc = config.descriptor
    idx = unique_vertex_indices(mesh)
    pos, nrm = sphere_points
    scene = add_spheres(mesh, (pos[:spheres], nrm[:spheres]), config.sphere_radius,
                        config.sphere_subdivisions)
    return quicci_from_counts(compute_intersection_counts(scene, mesh.vertices[idx], mesh.normals[idx], desc))


def run_distance_study(config: DistanceStudyConfig, meshes: list | None = None, progress=None) -> DistanceStudyResult:
    dataset = meshes if meshes is not None else config.dataset
    if not dataset:
        raise ValueError("distance study needs a non-empty dataset")
    desc = config.descriptor
    total_bits = desc.width * desc.height
    seeds = np.random.SeedSequence(config.seed).spawn(2)
    pair_rng = np.random.default_rng(seeds[0])
    sphere_rng = np.random.default_rng(seeds[1])
    cache: dict[int, np.ndarray] = {}

    def fitted(i):
        m = _load(dataset[i])
        return fit_unit_sphere(m) if m.vertex_count else m

    def descriptors(i):
        if i not in cache:
            m = fitted(i)
            if m.vertex_count == 0:
                cache[i] = np.zeros((0, (total_bits + 63) // 64), dtype=np.uint64)
            else:
                idx = unique_vertex_indices(m)
                cache[i] = quicci_from_counts(compute_intersection_counts(m, m.vertices[idx], m.normals[idx], desc))
        return cache[i]

    nominal = {f: DistanceHistogram(f, total_bits) for f in FUNCTIONS}
    n = len(dataset)
    for _ in range(config.pair_count):
        if n >= 2:
            a, b = (int(x) for x in pair_rng.choice(n, size=2, replace=False))
        else:
            a = b = 0
        da, db = descriptors(a), descriptors(b)
        m = min(len(da), len(db))
        if m == 0:
            continue
        for name, values in pair_distances(da[:m], db[:m], total_bits).items():
            nominal[name].add(values)

    series = {(f, s): DistanceHistogram(f, total_bits) for f in FUNCTIONS for s in config.sphere_counts}
    order = sphere_rng.permutation(n)[: config.object_count] if config.object_count < n else np.arange(n)
    used = 0
    for count, i in enumerate(order, start=1):
        mesh = fitted(int(i))
        obj_rng = np.random.default_rng(sphere_rng.integers(2 ** 63))
        if mesh.vertex_count == 0 or mesh.triangle_count == 0:
            continue
        perturbation_series(mesh, config, obj_rng, series)
        used += 1
        if progress:
            progress(count, len(order))
    return DistanceStudyResult(config, nominal, DistanceHistogramSeries(config.sphere_counts, series), used)


def smoothed_monotone_fraction(means: list[float], window: int = 5) -> float:
    """Share of adjacent steps where the moving average does not decrease."""
    m = np.asarray(means, dtype=np.float64)
    if len(m) < window + 1:
        window = 1
    smooth = np.convolve(m, np.ones(window) / window, mode="valid")
    steps = np.diff(smooth)
    if not len(steps):
        return 1.0
    return float(np.mean(steps >= -1e-12))


def write_distance_study(result: DistanceStudyResult, out) -> None:
    rows = []
    for name in FUNCTIONS:
        h = result.nominal[name]
        rows += [[name, h.bin_label(b), int(c)] for b, c in enumerate(h.counts) if c]
    out.write_csv("nominal_histograms.csv", ["function", "bin", "count"], rows)
    rows = []
    for name in FUNCTIONS:
        for s in result.series.sphere_counts:
            h = result.series.histograms[(name, s)]
            rows += [[name, s, h.bin_label(b), int(c)] for b, c in enumerate(h.counts) if c]
    out.write_csv("distance_histograms.csv", ["function", "sphere_count", "bin", "count"], rows)
    rows = [[s] + [f"{result.series.mean(f, s):.6f}" for f in FUNCTIONS] for s in result.series.sphere_counts]
    out.write_csv("distance_means.csv", ["sphere_count"] + [f"mean_{f}" for f in FUNCTIONS], rows)
