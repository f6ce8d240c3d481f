"""Acceptance criteria 1-10.

Each test prints one ``criterion N: PASS|FAIL`` line (also collected into the
terminal summary) and then asserts.  Run on its own with

    pytest -v tests/test_acceptance.py
"""

import time

import numpy as np
import pytest
from numba import njit, prange
from oracles import oracle_grid, random_soup
from scipy.spatial.transform import Rotation

from quicci.descriptor import (
    DescriptorSet,
    QuicciImage,
    bit_count_profile,
    clutter_resistant_distance,
    distances_to_many,
    hamming_distance,
    load_descriptor_set,
    mismatch_counts,
    save_descriptor_set,
    weighted_hamming_distance,
)
from quicci.experiments.bench import bench_comparison_rate, random_images
from quicci.experiments.clutterbox import ClutterboxRunConfig, run_clutterbox
from quicci.experiments.corpus import blob, make_toy_corpus, torus
from quicci.experiments.distance_study import FUNCTIONS, DistanceStudyConfig, run_distance_study, smoothed_monotone_fraction
from quicci.experiments.runindex_study import images_with_density, mixed_corpus
from quicci.hamming_tree import HammingTree, TreeConfig, load_tree, save_tree, subtree_min_distance, tree_stats
from quicci.intersection import DescriptorConfig, compute_intersection_grid
from quicci.mesh import OrientedPoint, RigidPlacement, fit_unit_sphere, random_rotation
from quicci.runindex import build_run_index, query_run_index

pytestmark = pytest.mark.slow

BIG_N = 1_000_000
BIG_BITS = 4096


# -- independent brute-force kernels -------------------------------------------------

@njit(cache=True)
def _pop(x):
    # SWAR popcount, deliberately not shared with the library kernels
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return (x * np.uint64(0x0101010101010101)) >> np.uint64(56)


@njit(cache=True)
def _hamming_all(words, needle, out):
    for i in range(words.shape[0]):
        d = 0
        for j in range(words.shape[1]):
            d += _pop(words[i, j] ^ needle[j])
        out[i] = d


@njit(cache=True, parallel=True)
def _exhaustive_top8(n):
    # stored string i carries provenance key i, so ties resolve by index
    ids = np.empty((n, 8), dtype=np.int64)
    dists = np.empty((n, 8), dtype=np.int64)
    for q in prange(n):
        hist = np.zeros(17, dtype=np.int64)
        for i in range(n):
            hist[_pop(np.uint64(q ^ i))] += 1
        # entries strictly below the cut all make it; the rest fill up from the cut
        cut, below = 0, 0
        while below + hist[cut] < 8:
            below += hist[cut]
            cut += 1
        slots = np.zeros(17, dtype=np.int64)
        acc = 0
        for d in range(cut + 1):
            slots[d] = acc
            acc += hist[d]
        room = 8 - below
        for i in range(n):
            d = _pop(np.uint64(q ^ i))
            if d < cut:
                ids[q, slots[d]] = i
                dists[q, slots[d]] = d
                slots[d] += 1
            elif d == cut and room > 0:
                ids[q, slots[d]] = i
                dists[q, slots[d]] = d
                slots[d] += 1
                room -= 1
    return ids, dists


@njit(cache=True, parallel=True)
def _bound_violations(classes, bound_max):
    n = classes.shape[0]
    bad = np.zeros(n, dtype=np.int64)
    for q in prange(n):
        cq = classes[q]
        for s in range(n):
            if bound_max[cq, classes[s]] > _pop(np.uint64(q ^ s)):
                bad[q] += 1
    return bad.sum()


def oracle_topk(words, needle, k, limit=None):
    dist = np.empty(len(words), dtype=np.int64)
    _hamming_all(words, needle, dist)
    ids = np.arange(len(words))
    if limit is not None:
        ids = ids[dist <= limit]
    # provenance key equals the entry index here
    order = np.lexsort((ids, dist[ids]))[:k]
    return [(int(dist[i]), int(i)) for i in ids[order]]


def tree_topk(results):
    return [(r.distance, r.provenance.vertex_index) for r in results]


def mixed_density_words(count, total_bits, rng, block=50_000):
    words = np.empty((count, total_bits // 64), dtype=np.uint64)
    for s in range(0, count, block):
        n = min(block, count - s)
        p = rng.uniform(0.005, 0.5, size=(n, 1)).astype(np.float32)
        bits = rng.random((n, total_bits), dtype=np.float32) < p
        words[s:s + n] = np.packbits(bits, axis=1, bitorder="little").view("<u8")
    return words


def flip_bits(word_row, count, rng):
    w = word_row.copy()
    for pos in rng.choice(BIG_BITS, size=count, replace=False):
        w[pos // 64] ^= np.uint64(1) << np.uint64(pos % 64)
    return w


@pytest.fixture(scope="module")
def big_tree():
    rng = np.random.default_rng(2024)
    words = mixed_density_words(BIG_N, BIG_BITS, rng)
    tree = HammingTree(TreeConfig(BIG_BITS, 128, 256), (64, 64))
    prov = np.column_stack([np.zeros(BIG_N, np.uint64), np.arange(BIG_N, dtype=np.uint64)])
    tree.insert_many(words, prov)
    near = [flip_bits(words[i], int(rng.integers(0, 9)), rng) for i in rng.integers(0, BIG_N, 100)]
    fresh = list(mixed_density_words(100, BIG_BITS, rng))
    return tree, words, near, fresh


# -- 1 ----------------------------------------------------------------------------

def test_criterion_01_exhaustive_tree(acceptance_report):
    start = time.perf_counter()
    n = 1 << 16
    tree = HammingTree(TreeConfig(16, 4, 256), (16, 1))
    all_words = np.arange(n, dtype=np.uint64)[:, None]
    tree.insert_many(all_words, np.column_stack([np.zeros(n, np.uint64), np.arange(n, dtype=np.uint64)]))
    ids, dists = _exhaustive_top8(n)
    mismatches = 0
    for q in range(n):
        got = tree.query(all_words[q], k=8)
        if [(r.distance, r.provenance.vertex_index) for r in got] != list(zip(dists[q].tolist(), ids[q].tolist())):
            mismatches += 1
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 300
    acceptance_report(1, ok, f"{n} needles, top-8, {mismatches} mismatches, {elapsed:.0f}s")
    assert ok


# -- 2 ----------------------------------------------------------------------------

def test_criterion_02_random_tree(big_tree, acceptance_report):
    tree, words, near, fresh = big_tree
    start = time.perf_counter()
    mismatches = 0
    for needle in near + fresh:
        if tree_topk(tree.query(needle, k=32)) != oracle_topk(words, needle, 32):
            mismatches += 1
    touched, touched_unlimited = [], []
    for needle in near:
        results, stats = tree.search(needle, k=32, distance_limit=8)
        if tree_topk(results) != oracle_topk(words, needle, 32, limit=8):
            mismatches += 1
        touched.append(stats.entries_scanned / BIG_N)
    for needle in near[:10]:
        touched_unlimited.append(tree.search(needle, k=32)[1].entries_scanned / BIG_N)
    elapsed = time.perf_counter() - start
    frac = float(np.mean(touched))
    ok = mismatches == 0 and frac < 0.2 and elapsed < 600
    acceptance_report(2, ok, f"1M x 4096-bit, 200 needles k=32, {mismatches} mismatches; near-duplicate touched "
                             f"fraction {frac:.4f} at limit 8 ({np.mean(touched_unlimited):.3f} unlimited), "
                             f"{elapsed:.0f}s")
    assert ok


# -- 3 ----------------------------------------------------------------------------

def test_criterion_03_lower_bound(acceptance_report):
    chunk, total = 4, 16
    n = 1 << total
    profiles = [bit_count_profile(QuicciImage(16, 1, np.array([s], np.uint64)), chunk).suffix_counts
                for s in range(n)]
    depth = len(profiles[0])
    # strings with equal chunk counts share both their profile and every path
    class_of: dict[tuple, int] = {}
    classes = np.array([class_of.setdefault(p, len(class_of)) for p in profiles], dtype=np.int64)
    reps = list(class_of)
    bound_max = np.zeros((len(reps), len(reps)), dtype=np.int64)
    for a, pa in enumerate(reps):
        for b, pb in enumerate(reps):
            bound_max[a, b] = max(subtree_min_distance(list(pa), pb[:d]) for d in range(depth + 1))
    violations = int(_bound_violations(classes, bound_max))
    ok = violations == 0
    acceptance_report(3, ok, f"{n * n} pairs x {depth + 1} depths over {len(reps)} profile classes, "
                             f"{violations} violations")
    assert ok


# -- 4 ----------------------------------------------------------------------------

def test_criterion_04_distance_identities(acceptance_report):
    rng = np.random.default_rng(4)
    a = mixed_density_words(100_000, BIG_BITS, rng)
    b = mixed_density_words(100_000, BIG_BITS, rng)
    failures = 0
    for x, y in zip(a, b):
        ia, ib = QuicciImage(64, 64, x), QuicciImage(64, 64, y)
        h = hamming_distance(ia, ib)
        missing, extra = mismatch_counts(ia, ib)
        w = weighted_hamming_distance(ia, ib)
        if (h != clutter_resistant_distance(ia, ib) + clutter_resistant_distance(ib, ia)
                or missing + extra != h or not 0.0 <= w <= 2.0):
            failures += 1
    hay = mixed_density_words(2000, BIG_BITS, rng)
    order_failures = 0
    for needle in mixed_density_words(100, BIG_BITS, rng):
        img = QuicciImage(64, 64, needle)
        clutter = distances_to_many(img, hay, "clutter")
        first_term = clutter / max(img.popcount(), 1)
        if not np.array_equal(np.argsort(first_term, kind="stable"), np.argsort(clutter, kind="stable")):
            order_failures += 1
    ok = failures == 0 and order_failures == 0
    acceptance_report(4, ok, f"1e5 pairs, {failures} identity failures; 100 needles, {order_failures} order failures")
    assert ok


# -- 5 ----------------------------------------------------------------------------

def _axis_rotation(origin: OrientedPoint, angle: float) -> RigidPlacement:
    r = Rotation.from_rotvec(np.asarray(origin.normal) * angle).as_matrix()
    p = np.asarray(origin.position)
    return RigidPlacement(r, p - r @ p)


def test_criterion_05_descriptor_geometry(acceptance_report):
    rng = np.random.default_rng(5)
    small = DescriptorConfig(17, 16, 0.3)
    agree = rigid = axial = cells = 0
    for _ in range(100):
        soup = random_soup(rng, 50)
        origin = OrientedPoint(rng.normal(scale=0.02, size=3), random_rotation(rng)[:, 2])
        grid = compute_intersection_grid(soup, origin, small).counts
        agree += int((grid == oracle_grid(soup, origin, small)).sum())
        place = RigidPlacement(random_rotation(rng), rng.normal(size=3))
        moved = compute_intersection_grid(place.apply(soup), place.apply_point(origin), small).counts
        rigid += int((moved == grid).sum())
        spin = _axis_rotation(origin, rng.uniform(0, 2 * np.pi))
        spun = compute_intersection_grid(spin.apply(soup), spin.apply_point(origin), small).counts
        axial += int((spun == grid).sum())
        cells += grid.size

    full = DescriptorConfig(64, 64, 0.3)
    odd = closed_cells = 0
    for i in range(20):
        mesh = fit_unit_sphere(blob(rng, 3) if i % 2 else torus(rng))
        for _ in range(3):
            origin = OrientedPoint(rng.uniform(-0.5, 0.5, 3), random_rotation(rng)[:, 2])
            counts = compute_intersection_grid(mesh, origin, full).counts
            odd += int((counts % 2).sum())
            closed_cells += counts.size
    rates = [agree / cells, rigid / cells, axial / cells]
    ok = min(rates) >= 0.999 and odd == 0
    acceptance_report(5, ok, f"100 soups x {small.width}x{small.height}: oracle {rates[0]:.5f}, rigid {rates[1]:.5f}, "
                             f"normal-rotation {rates[2]:.5f}; watertight {closed_cells} cells, {odd} odd")
    assert ok


# -- 6 ----------------------------------------------------------------------------

def test_criterion_06_clutterbox(acceptance_report):
    start = time.perf_counter()
    corpus = make_toy_corpus(50, seed=6)
    ident = run_clutterbox(ClutterboxRunConfig(object_counts=(1,), runs=5, seed=6, identity_placement=True),
                           corpus, heatmap=False)
    identity_ok = ident.histogram(1).top_fraction == 1.0
    cfg = ClutterboxRunConfig(object_counts=(1, 3, 5), runs=30, seed=6, clutter_samples=2000)
    first = run_clutterbox(cfg, corpus)
    again = run_clutterbox(ClutterboxRunConfig(object_counts=(1, 3, 5), runs=3, seed=6, clutter_samples=2000), corpus)
    repeat_ok = all(np.array_equal(a.ranks[c], b.ranks[c]) for a, b in zip(first.runs[:3], again.runs)
                    for c in (1, 3, 5))
    means = [first.histogram(c).mean_rank for c in (1, 3, 5)]
    elapsed = time.perf_counter() - start
    ok = identity_ok and repeat_ok and means[0] <= means[1] <= means[2] and elapsed < 1800
    acceptance_report(6, ok, f"identity rank0 {identity_ok}, reruns identical {repeat_ok}, mean rank n=1/3/5 "
                             f"{means[0]:.2f}/{means[1]:.2f}/{means[2]:.2f}, {elapsed:.0f}s")
    assert ok


# -- 7 ----------------------------------------------------------------------------

def test_criterion_07_distance_trend(acceptance_report):
    corpus = make_toy_corpus(100, seed=7)
    cfg = DistanceStudyConfig(object_count=100, pair_count=100, seed=7)
    result = run_distance_study(cfg, corpus)
    fractions = {f: smoothed_monotone_fraction(result.series.means(f)[1:], window=5) for f in FUNCTIONS}
    ok = result.objects_used == 100 and all(v >= 0.9 for v in fractions.values())
    acceptance_report(7, ok, f"{result.objects_used} objects, 10..500 spheres, smoothed monotone fraction "
                      + ", ".join(f"{f} {v:.2f}" for f, v in fractions.items()))
    assert ok


# -- 8 ----------------------------------------------------------------------------

def _weighted_oracle(bits, needle_bits, k):
    total = bits.shape[1]
    s = int(needle_bits.sum())
    missing = (~bits & needle_bits).sum(axis=1)
    extra = (bits & ~needle_bits).sum(axis=1)
    dist = missing / max(s, 1) + extra / max(total - s, 1)
    ids = np.arange(len(bits))
    order = np.lexsort((ids, dist))[:k]
    return [(float(dist[i]), int(i)) for i in order]


def test_criterion_08_run_index(acceptance_report):
    rng = np.random.default_rng(8)
    dset = mixed_corpus(10_000, 64, 64, rng)
    bits = np.unpackbits(dset.words.view(np.uint8), axis=1, bitorder="little")[:, :4096].astype(bool)
    index = build_run_index(dset)
    mismatches = sparse_queries = 0
    sparse_frac = []
    for set_bits in (1, 2, 4, 8, 16, 32):
        for w in images_with_density(10, 64, 64, set_bits, rng):
            needle = QuicciImage(64, 64, w)
            results, stats = query_run_index(index, needle, k=32)
            expected = _weighted_oracle(bits, needle.to_bits().ravel(), 32)
            got = [(r.distance, r.provenance.vertex_index) for r in results]
            same = [g[1] for g in got] == [e[1] for e in expected] and np.allclose(
                [g[0] for g in got], [e[0] for e in expected], rtol=0, atol=1e-12)
            mismatches += not same
            sparse_queries += 1
            sparse_frac.append(stats.candidate_fraction)
    dense_frac = [query_run_index(index, QuicciImage(64, 64, w), k=32)[1].candidate_fraction
                  for w in images_with_density(20, 64, 64, 1024, rng)]
    ok = mismatches == 0 and np.mean(dense_frac) >= 0.5
    acceptance_report(8, ok, f"{sparse_queries} sparse needles on 10k images, {mismatches} mismatches; "
                             f"candidate fraction sparse {np.mean(sparse_frac):.3f}, dense {np.mean(dense_frac):.3f}")
    assert ok


# -- 9 ----------------------------------------------------------------------------

def _leaf_contents(tree):
    """Per leaf: its path plus the stored strings and provenance in leaf order."""
    out = []
    for path, leaf in tree.iter_leaves():
        ids = leaf.array()
        out.append((path, tree._words[ids].tobytes(), tree._prov[ids].tobytes()))
    return out


def test_criterion_09_persistence(big_tree, tmp_path, acceptance_report):
    tree, _, near, fresh = big_tree
    save_tree(tree, tmp_path / "tree", codec="zlib")
    loaded = load_tree(tmp_path / "tree")
    needles = near[:50] + fresh[:50]
    same_results = all(tree_topk(tree.query(n, k=32)) == tree_topk(loaded.query(n, k=32)) for n in needles)
    same_stats = tree_stats(tree) == tree_stats(loaded)
    same_leaves = _leaf_contents(tree) == _leaf_contents(loaded)
    rng = np.random.default_rng(9)
    dset = DescriptorSet(63, 64, random_images(5000, 63 * 64, rng),
                         np.column_stack([rng.integers(0, 50, 5000), np.arange(5000)]).astype(np.uint32))
    save_descriptor_set(tmp_path / "d.qdf", dset)
    back = load_descriptor_set(tmp_path / "d.qdf")
    save_descriptor_set(tmp_path / "e.qdf", back)
    qdf_ok = back == dset and (tmp_path / "d.qdf").read_bytes() == (tmp_path / "e.qdf").read_bytes()
    ok = same_results and same_stats and same_leaves and qdf_ok
    acceptance_report(9, ok, f"1M-entry tree: results {same_results}, stats {same_stats}, leaves {same_leaves}; "
                             f".qdf round trip {qdf_ok}")
    assert ok


# -- 10 ---------------------------------------------------------------------------

def test_criterion_10_throughput(acceptance_report):
    images = random_images(100_000, BIG_BITS, np.random.default_rng(10))
    rate = bench_comparison_rate(images, "hamming", duration=2.0)
    ok = rate >= 10e6
    acceptance_report(10, ok, f"single-threaded Hamming on 4096-bit images: {rate / 1e6:.1f}M pairs/s")
    assert ok
