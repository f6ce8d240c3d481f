"""The clutterbox experiment and clutter-fraction heatmaps.

One run draws ``max(object_counts)`` objects, fits each into the unit sphere,
picks a reference object and describes its unique vertices.  Objects are then
placed one at a time (reference first) inside a cube; whenever the scene
holds one of the requested object counts, every unique scene vertex is
described and each reference descriptor's true counterpart is ranked among
them with the clutter-resistant distance.

The rank of the true counterpart is the number of scene descriptors with a
strictly lower distance, so ties never count against the correct match.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .. import _kernels
from ..generate import describe_points
from ..intersection import DescriptorConfig
from ..mesh import (
    Mesh,
    OrientedPoint,
    concatenate_scene,
    fit_unit_sphere,
    load_mesh,
    place_in_cube,
    unique_vertex_map,
)

HEATMAP_RANKS = 256


@dataclass
class ClutterboxRunConfig:
    cube_edge: float = 3.0
    object_counts: tuple[int, ...] = (1, 5, 10)
    support_radius: float = 0.3
    width: int = 63
    height: int = 64
    seed: int = 0
    dataset: list = field(default_factory=list)
    runs: int = 30
    rank_cap: int = 4096
    identity_placement: bool = False
    heatmap_count: int | None = None
    heatmap_fraction_bins: int = 20
    clutter_samples: int = 10_000
    threads: int = 1

    def __post_init__(self):
        counts = tuple(int(c) for c in self.object_counts)
        if not counts or any(c < 1 for c in counts):
            raise ValueError("object counts must be >= 1")
        if list(counts) != sorted(set(counts)):
            raise ValueError("object counts must be strictly ascending")
        self.object_counts = counts
        if self.cube_edge < 2:
            raise ValueError("cube edge must be at least 2")

    @property
    def descriptor(self) -> DescriptorConfig:
        return DescriptorConfig.for_image(self.width, self.height, self.support_radius)

    def echo(self) -> dict:
        d = asdict(self)
        d["dataset"] = [str(p) if not isinstance(p, Mesh) else f"<mesh {i}>" for i, p in enumerate(self.dataset)]
        return d


@dataclass
class RankHistogram:
    object_count: int
    cap: int
    bins: dict[int, int] = field(default_factory=dict)
    total_queries: int = 0
    rank_sum: int = 0

    def add(self, ranks: np.ndarray) -> None:
        ranks = np.asarray(ranks)
        ranks = ranks[ranks >= 0]
        self.total_queries += len(ranks)
        self.rank_sum += int(ranks.sum())
        kept = ranks[ranks < self.cap]
        for r, c in zip(*np.unique(kept, return_counts=True)):
            self.bins[int(r)] = self.bins.get(int(r), 0) + int(c)

    def merge(self, other: RankHistogram) -> None:
        for r, c in other.bins.items():
            self.bins[r] = self.bins.get(r, 0) + c
        self.total_queries += other.total_queries
        self.rank_sum += other.rank_sum

    @property
    def mean_rank(self) -> float:
        return self.rank_sum / self.total_queries if self.total_queries else 0.0

    @property
    def top_fraction(self) -> float:
        return self.bins.get(0, 0) / self.total_queries if self.total_queries else 0.0


@dataclass
class ClutterHeatmap:
    fraction_bins: int = 20
    rank_bins: int = HEATMAP_RANKS
    counts: np.ndarray | None = None

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.zeros((self.fraction_bins, self.rank_bins), dtype=np.int64)

    def add(self, fractions: np.ndarray, ranks: np.ndarray) -> None:
        fractions = np.asarray(fractions, dtype=np.float64)
        ranks = np.asarray(ranks)
        keep = (ranks >= 0) & (ranks < self.rank_bins)
        fb = np.minimum((fractions[keep] * self.fraction_bins).astype(np.int64), self.fraction_bins - 1)
        np.add.at(self.counts, (fb, ranks[keep]), 1)

    def merge(self, other: ClutterHeatmap) -> None:
        self.counts += other.counts


@dataclass
class RunRecord:
    run: int
    seed: int
    objects: list[int]
    reference: int
    reference_descriptors: int
    ranks: dict[int, np.ndarray]


@dataclass
class ClutterboxResult:
    config: ClutterboxRunConfig
    histograms: list[RankHistogram]
    heatmap: ClutterHeatmap
    runs: list[RunRecord]

    def histogram(self, object_count: int) -> RankHistogram:
        for h in self.histograms:
            if h.object_count == object_count:
                return h
        raise KeyError(object_count)


def clutter_fractions(scene: Mesh, positions: np.ndarray, reference_object_id: int, support_radius: float,
                      sample_count: int, rng: np.random.Generator) -> np.ndarray:
    """Monte-Carlo share of surface within ``support_radius`` of each position
    that does not belong to the reference object."""
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    out = np.zeros(len(positions))
    if scene.triangle_count == 0 or len(positions) == 0:
        return out
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    p = scene.vertices[scene.triangles]
    centroids = p.mean(axis=1)
    extent = float(np.linalg.norm(p - centroids[:, None, :], axis=2).max())
    areas = scene.triangle_areas()
    if scene.object_ids is None:
        owner = np.zeros(scene.triangle_count, dtype=np.int64)
    else:
        owner = scene.object_ids[scene.triangles[:, 0]]
    tree = cKDTree(centroids)
    hits = tree.query_ball_point(positions, support_radius + extent)
    for i, cand in enumerate(hits):
        cand = np.asarray(cand, dtype=np.int64)
        if not len(cand):
            continue
        cand.sort()
        a = areas[cand]
        total = a.sum()
        if total <= 0:
            continue
        pick = cand[rng.choice(len(cand), size=sample_count, p=a / total)]
        u = rng.random(sample_count)
        v = rng.random(sample_count)
        flip = u + v > 1
        u[flip], v[flip] = 1 - u[flip], 1 - v[flip]
        tri = p[pick]
        pts = tri[:, 0] + u[:, None] * (tri[:, 1] - tri[:, 0]) + v[:, None] * (tri[:, 2] - tri[:, 0])
        inside = np.einsum("ij,ij->i", pts - positions[i], pts - positions[i]) <= support_radius ** 2
        kept = int(inside.sum())
        if kept:
            out[i] = np.count_nonzero(owner[pick[inside]] != reference_object_id) / kept
    return out


def clutter_fraction(scene: Mesh, point: OrientedPoint, reference_object_id: int, support_radius: float,
                     sample_count: int = 10_000, rng: np.random.Generator | None = None) -> float:
    rng = rng if rng is not None else np.random.default_rng(0)
    return float(clutter_fractions(scene, np.asarray(point.position)[None, :], reference_object_id,
                                   support_radius, sample_count, rng)[0])


def run_seeds(master_seed: int, runs: int) -> list[int]:
    """Independent per-run seeds derived from the master seed."""
    children = np.random.SeedSequence(master_seed).spawn(runs)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def _load(item) -> Mesh:
    return item if isinstance(item, Mesh) else load_mesh(item)


def clutterbox_run(config: ClutterboxRunConfig, run: int, seed: int, meshes: list | None = None,
                   heatmap: ClutterHeatmap | None = None) -> RunRecord:
    dataset = meshes if meshes is not None else config.dataset
    n = config.object_counts[-1]
    if len(dataset) < n:
        raise ValueError(f"dataset has {len(dataset)} meshes, run needs {n}")
    rng = np.random.default_rng(seed)
    desc_cfg = config.descriptor
    chosen = rng.choice(len(dataset), size=n, replace=False).tolist()
    objects = [fit_unit_sphere(_load(dataset[i])) for i in chosen]
    ref_slot = int(rng.integers(n))
    reference = objects[ref_slot]

    ref_unique, _ = unique_vertex_map(reference)
    rd = describe_points(reference, reference.vertices[ref_unique], reference.normals[ref_unique], desc_cfg)

    others = [i for i in range(n) if i != ref_slot]
    order = [ref_slot] + [others[i] for i in rng.permutation(len(others))]
    placed: list[Mesh] = []
    ranks: dict[int, np.ndarray] = {}
    for k, slot in enumerate(order, start=1):
        if config.identity_placement:
            mesh = objects[slot]
        else:
            mesh, _ = place_in_cube(objects[slot], config.cube_edge, rng)
        placed.append(mesh)
        if k not in config.object_counts:
            continue
        scene = concatenate_scene(placed)
        scene_unique, scene_inverse = unique_vertex_map(scene)
        cd = describe_points(scene, scene.vertices[scene_unique], scene.normals[scene_unique], desc_cfg)
        # the reference is the first block of the scene, so its vertex ids
        # are unchanged
        true_idx = scene_inverse[ref_unique]
        r = np.empty(len(rd), dtype=np.int64)
        _kernels.clutter_ranks(rd, cd, true_idx.astype(np.int64), r)
        ranks[k] = r
        if heatmap is not None and k == (config.heatmap_count or config.object_counts[-1]):
            fractions = clutter_fractions(scene, scene.vertices[ref_unique], 0, config.support_radius,
                                          config.clutter_samples, rng)
            heatmap.add(fractions, r)
    return RunRecord(run, seed, chosen, chosen[ref_slot], len(rd), ranks)


def run_clutterbox(config: ClutterboxRunConfig, meshes: list | None = None, heatmap: bool = True,
                   progress=None) -> ClutterboxResult:
    dataset = meshes if meshes is not None else config.dataset
    if len(dataset) < config.object_counts[-1]:
        raise ValueError(f"dataset has {len(dataset)} meshes, need at least {config.object_counts[-1]}")
    seeds = run_seeds(config.seed, config.runs)

    def one(run: int):
        hm = ClutterHeatmap(config.heatmap_fraction_bins) if heatmap else None
        return clutterbox_run(config, run, seeds[run], dataset, hm), hm

    if config.threads > 1:
        with concurrent.futures.ThreadPoolExecutor(config.threads) as pool:
            outcomes = list(pool.map(one, range(config.runs)))
    else:
        outcomes = []
        for run in range(config.runs):
            outcomes.append(one(run))
            if progress:
                progress(run + 1, config.runs)

    histograms = [RankHistogram(c, config.rank_cap) for c in config.object_counts]
    merged = ClutterHeatmap(config.heatmap_fraction_bins)
    records = []
    # merge in run order; merging is commutative so threading cannot change it
    for record, hm in outcomes:
        records.append(record)
        for h in histograms:
            h.add(record.ranks[h.object_count])
        if hm is not None:
            merged.merge(hm)
    return ClutterboxResult(config, histograms, merged, records)


def write_clutterbox(result: ClutterboxResult, out) -> None:
    counts = [h.object_count for h in result.histograms]
    max_rank = max((max(h.bins) for h in result.histograms if h.bins), default=-1)
    rows = [[r] + [h.bins.get(r, 0) for h in result.histograms] for r in range(max_rank + 1)]
    out.write_csv("rank_histograms.csv", ["rank"] + [f"count_n{c}" for c in counts], rows)
    summary = [[h.object_count, h.total_queries, h.bins.get(0, 0), f"{h.top_fraction:.6f}", f"{h.mean_rank:.6f}", h.cap]
               for h in result.histograms]
    out.write_csv("rank_summary.csv", ["object_count", "queries", "rank0", "rank0_fraction", "mean_rank", "rank_cap"],
                  summary)
    hm = result.heatmap
    rows = [[fb, rb, int(hm.counts[fb, rb])] for fb in range(hm.fraction_bins) for rb in range(hm.rank_bins)
            if hm.counts[fb, rb]]
    out.write_csv("clutter_heatmap.csv", ["fraction_bin", "rank_bin", "count"], rows)
    runs = []
    for rec in result.runs:
        for c in counts:
            r = rec.ranks[c]
            runs.append([rec.run, rec.seed, rec.reference, c, len(r), int((r == 0).sum()), f"{r.mean():.6f}" if len(r) else ""])
    out.write_csv("runs.csv", ["run", "seed", "reference_object", "object_count", "queries", "rank0", "mean_rank"], runs)
