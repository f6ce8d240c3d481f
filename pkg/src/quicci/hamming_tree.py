"""Hamming Tree: a k-nearest-neighbour index over fixed-length bit strings.

Strings are routed by the set-bit count of what remains after cutting a fixed
number of bits (a chunk) off the front, one chunk per level.  Leaves hold
lists of strings and are replaced by internal nodes once they grow past a
threshold.  Queries run best-first over a priority queue ordered by a lower
bound on the Hamming distance to anything stored below a node.
"""

from __future__ import annotations

import heapq
import itertools
import lzma
import math
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import _kernels
from .descriptor import (
    BitCountProfile,
    DescriptorSet,
    FormatError,
    Provenance,
    QuicciImage,
    deserialize_descriptor_set,
    serialize_descriptor_set,
    words_for,
)


@dataclass(frozen=True)
class TreeConfig:
    string_bits: int = 4096
    chunk_bits: int = 128
    leaf_split_threshold: int = 256

    def __post_init__(self):
        if self.string_bits < 1:
            raise ValueError("string_bits must be positive")
        if self.string_bits > 0xFFFF:
            raise ValueError("string_bits must fit in 16 bits")
        if self.chunk_bits < 1:
            raise ValueError("chunk_bits must be positive")
        if self.leaf_split_threshold < 1:
            raise ValueError("leaf_split_threshold must be >= 1")

    @property
    def max_depth(self) -> int:
        return -(-self.string_bits // self.chunk_bits)

    @property
    def n_words(self) -> int:
        return words_for(self.string_bits)


class LeafNode:
    __slots__ = ("path_length", "ids", "_array")

    def __init__(self, path_length: int):
        self.path_length = path_length
        self.ids: list[int] = []
        self._array = None

    def append(self, entry_id: int) -> None:
        self.ids.append(entry_id)
        self._array = None

    def array(self) -> np.ndarray:
        if self._array is None:
            self._array = np.asarray(self.ids, dtype=np.int64)
        return self._array


class InternalNode:
    __slots__ = ("depth", "children")

    def __init__(self, depth: int):
        self.depth = depth
        self.children: dict[int, InternalNode | LeafNode] = {}


class SearchResult(NamedTuple):
    image: QuicciImage
    provenance: Provenance
    distance: int


@dataclass
class QueryStats:
    nodes_visited: int = 0
    leaves_scanned: int = 0
    entries_scanned: int = 0
    queue_peak: int = 0


def subtree_min_distance(needle_profile: BitCountProfile | list[int], path_counts) -> int:
    """Lower bound on the Hamming distance from a needle to any string below a node.

    ``path_counts`` are the branch keys b_0..b_{d-1} leading to the node.  Each
    fully determined chunk contributes the gap between its set-bit count and
    the needle's; the undetermined suffix contributes its count gap.
    """
    beta = needle_profile.suffix_counts if isinstance(needle_profile, BitCountProfile) else needle_profile
    b = list(path_counts)
    d = len(b)
    if d == 0:
        return 0
    total = 0
    for level in range(d - 1):
        total += abs((b[level] - b[level + 1]) - (beta[level] - beta[level + 1]))
    return total + abs(b[d - 1] - beta[d - 1])


class HammingTree:
    def __init__(self, config: TreeConfig | None = None, image_shape: tuple[int, int] | None = None):
        self.config = config or TreeConfig()
        if image_shape is None:
            image_shape = (self.config.string_bits, 1)
        w, h = image_shape
        if w * h != self.config.string_bits:
            raise ValueError("image shape does not match string_bits")
        self.image_shape = (w, h)
        self.root = InternalNode(0)
        nw = self.config.n_words
        self._words = np.zeros((16, nw), dtype=np.uint64)
        self._prov = np.zeros(16, dtype=np.uint64)
        self._count = 0

    def __len__(self):
        return self._count

    # ------------------------------------------------------------------
    # storage

    def _reserve(self, extra: int) -> None:
        need = self._count + extra
        cap = self._words.shape[0]
        if need <= cap:
            return
        new_cap = max(need, 2 * cap)
        words = np.zeros((new_cap, self._words.shape[1]), dtype=np.uint64)
        words[: self._count] = self._words[: self._count]
        prov = np.zeros(new_cap, dtype=np.uint64)
        prov[: self._count] = self._prov[: self._count]
        self._words, self._prov = words, prov

    @property
    def words(self) -> np.ndarray:
        """Stored strings in insertion order (read-only view)."""
        v = self._words[: self._count]
        v.flags.writeable = False
        return v

    def provenance_of(self, entry_id: int) -> Provenance:
        key = int(self._prov[entry_id])
        return Provenance(key >> 32, key & 0xFFFFFFFF)

    def image_of(self, entry_id: int) -> QuicciImage:
        w, h = self.image_shape
        return QuicciImage(w, h, self._words[entry_id])

    def _coerce(self, image) -> np.ndarray:
        if isinstance(image, QuicciImage):
            if image.total_bits != self.config.string_bits:
                raise ValueError(f"image has {image.total_bits} bits, tree expects {self.config.string_bits}")
            return image.words
        words = np.asarray(image, dtype=np.uint64).reshape(-1)
        if words.shape[0] != self.config.n_words:
            raise ValueError("bit string has the wrong length")
        return words

    # ------------------------------------------------------------------
    # insertion

    def insert(self, image, provenance=(0, 0)) -> None:
        words = self._coerce(image)
        self.insert_many(words[None, :], np.asarray([provenance], dtype=np.uint64))

    def insert_many(self, words: np.ndarray, provenance: np.ndarray | None = None, batch: int = 65536) -> None:
        """Insert rows of packed strings in order; ``provenance`` is (n, 2)."""
        words = np.ascontiguousarray(words, dtype=np.uint64)
        if words.ndim != 2 or words.shape[1] != self.config.n_words:
            raise ValueError("bit strings have the wrong length")
        n = words.shape[0]
        if provenance is None:
            provenance = np.zeros((n, 2), dtype=np.uint64)
        provenance = np.asarray(provenance, dtype=np.uint64).reshape(n, 2)
        pad = self.config.n_words * 64 - self.config.string_bits
        if pad and n and np.any(words[:, -1] >> np.uint64(64 - pad)):
            raise ValueError("bits set beyond string_bits")
        self._reserve(n)
        start = self._count
        self._words[start:start + n] = words
        self._prov[start:start + n] = (provenance[:, 0] << np.uint64(32)) | provenance[:, 1]
        cfg = self.config
        for lo in range(0, n, batch):
            chunk = words[lo:lo + batch]
            profiles = _kernels.suffix_profiles(chunk, cfg.string_bits, cfg.chunk_bits).tolist()
            for offset, prof in enumerate(profiles):
                self._count += 1
                self._insert_id(start + lo + offset, prof)

    def _insert_id(self, entry_id: int, prof: list[int]) -> None:
        node = self.root
        while True:
            key = prof[node.depth]
            child = node.children.get(key)
            if child is None:
                child = LeafNode(node.depth + 1)
                node.children[key] = child
            if isinstance(child, InternalNode):
                node = child
                continue
            child.append(entry_id)
            if len(child.ids) > self.config.leaf_split_threshold and child.path_length < self.config.max_depth:
                self._split(node, key, child)
            return

    def _split(self, parent: InternalNode, key: int, leaf: LeafNode) -> None:
        cfg = self.config
        node = InternalNode(leaf.path_length)
        ids = leaf.array()
        prof = _kernels.suffix_profiles(self._words[ids], cfg.string_bits, cfg.chunk_bits)[:, node.depth]
        for entry_id, k in zip(ids.tolist(), prof.tolist()):
            child = node.children.get(k)
            if child is None:
                child = node.children[k] = LeafNode(node.depth + 1)
            child.append(entry_id)
        parent.children[key] = node
        for k, child in list(node.children.items()):
            if len(child.ids) > cfg.leaf_split_threshold and child.path_length < cfg.max_depth:
                self._split(node, k, child)

    # ------------------------------------------------------------------
    # querying

    def search(self, needle, k: int = 32, distance_limit: int | None = None) -> tuple[list[SearchResult], QueryStats]:
        if k < 1:
            raise ValueError("k must be >= 1")
        needle_words = self._coerce(needle)
        cfg = self.config
        beta = _kernels.suffix_profiles(needle_words, cfg.string_bits, cfg.chunk_bits)[0].tolist()
        limit = math.inf if distance_limit is None else distance_limit
        stats = QueryStats()
        # max-heap of the k best (distance, provenance, id) via negation
        best: list[tuple[int, int, int]] = []
        prov = self._prov
        words = self._words
        counter = itertools.count()
        queue: list = [(0, next(counter), self.root, 0, 0)]

        def threshold() -> float:
            if len(best) < k:
                return limit
            return min(limit, -best[0][0])

        while queue:
            bound, _, node, fixed, last = heapq.heappop(queue)
            thr = threshold()
            # ties at the threshold may still win on provenance
            if bound > thr:
                break
            if isinstance(node, LeafNode):
                ids = node.array()
                dist = np.empty(len(ids), dtype=np.int64)
                _kernels.hamming_one_to_subset(needle_words, words, ids, dist)
                stats.leaves_scanned += 1
                stats.entries_scanned += len(ids)
                for pos in np.nonzero(dist <= thr)[0].tolist():
                    d = int(dist[pos])
                    eid = int(ids[pos])
                    item = (-d, -int(prov[eid]), -eid)
                    if len(best) < k:
                        heapq.heappush(best, item)
                    elif item > best[0]:
                        heapq.heapreplace(best, item)
                continue
            stats.nodes_visited += 1
            depth = node.depth
            for key, child in node.children.items():
                if depth == 0:
                    child_fixed = 0
                else:
                    child_fixed = fixed + abs((last - key) - (beta[depth - 1] - beta[depth]))
                child_bound = child_fixed + abs(key - beta[depth])
                if child_bound > threshold():
                    continue
                heapq.heappush(queue, (child_bound, next(counter), child, child_fixed, key))
            stats.queue_peak = max(stats.queue_peak, len(queue))

        ordered = sorted((-d, -p, -e) for d, p, e in best)
        results = [SearchResult(self.image_of(e), self.provenance_of(e), d) for d, _, e in ordered]
        return results, stats

    def query(self, needle, k: int = 32, distance_limit: int | None = None) -> list[SearchResult]:
        return self.search(needle, k, distance_limit)[0]

    def linear_search(self, needle, k: int = 32, distance_limit: int | None = None) -> list[SearchResult]:
        """Exhaustive scan with the same ordering contract as :meth:`query`."""
        needle_words = self._coerce(needle)
        dist = np.empty(self._count, dtype=np.int64)
        _kernels.hamming_one_to_many(needle_words, self._words[: self._count], dist)
        ids = np.arange(self._count)
        if distance_limit is not None:
            ids = ids[dist <= distance_limit]
        order = np.lexsort((ids, self._prov[ids], dist[ids]))[:k]
        return [SearchResult(self.image_of(e), self.provenance_of(e), int(dist[e])) for e in ids[order].tolist()]

    # ------------------------------------------------------------------
    # inspection

    def iter_leaves(self):
        """Yield (path keys, leaf) depth-first in ascending key order."""
        stack = [((), self.root)]
        while stack:
            path, node = stack.pop()
            if isinstance(node, LeafNode):
                yield path, node
                continue
            for key in sorted(node.children, reverse=True):
                stack.append((path + (key,), node.children[key]))

    def stats(self) -> dict:
        return tree_stats(self)


def tree_stats(tree: HammingTree) -> dict:
    internal = 0
    leaves = 0
    depth_histogram: dict[int, int] = {}
    stack = [tree.root]
    while stack:
        node = stack.pop()
        if isinstance(node, LeafNode):
            leaves += 1
            depth_histogram[node.path_length] = depth_histogram.get(node.path_length, 0) + 1
        else:
            internal += 1
            stack.extend(node.children.values())
    n = len(tree)
    mean_set = 0.0
    if n:
        counts = np.empty(n, dtype=np.int64)
        _kernels.popcount_rows(tree._words[:n], counts)
        mean_set = float(counts.mean())
    # an empty tree reports zero nodes even though the root object exists
    return {
        "entry_count": n,
        "node_count": (internal + leaves) if n else 0,
        "leaf_count": leaves,
        "depth_histogram": dict(sorted(depth_histogram.items())),
        "mean_set_bits": mean_set,
    }


# ----------------------------------------------------------------------
# persistence

META_MAGIC = b"QIHT"
META_VERSION = 1
_META_HEADER = struct.Struct("<4sIHHIIQ")
_NODE = struct.Struct("<HB")
KIND_INTERNAL, KIND_LEAF, KIND_END = 0, 1, 2

LEAF_MAGIC = b"QILF"
_LEAF_HEADER = struct.Struct("<4sIIQ")

CODECS = {"none": 0, "zlib": 1, "lzma": 2}
_CODEC_NAMES = {v: k for k, v in CODECS.items()}


def _compress(codec: int, data: bytes) -> bytes:
    if codec == 0:
        return data
    if codec == 1:
        return zlib.compress(data, 6)
    if codec == 2:
        return lzma.compress(data, format=lzma.FORMAT_XZ)
    raise FormatError(f"unknown codec id {codec}")


def _decompress(codec: int, data: bytes) -> bytes:
    try:
        if codec == 0:
            return data
        if codec == 1:
            return zlib.decompress(data)
        if codec == 2:
            return lzma.decompress(data, format=lzma.FORMAT_XZ)
    except (zlib.error, lzma.LZMAError) as exc:
        raise FormatError(f"codec failure: {exc}") from exc
    raise FormatError(f"unknown codec id {codec}")


def _leaf_name(path: tuple[int, ...]) -> str:
    return "leaf_" + "_".join(str(k) for k in path) + ".bin"


def save_tree(tree: HammingTree, directory, codec: str = "zlib") -> None:
    if codec not in CODECS:
        raise ValueError(f"unknown codec {codec!r}; choose from {sorted(CODECS)}")
    codec_id = CODECS[codec]
    directory = Path(directory)
    leaf_dir = directory / "leaves"
    leaf_dir.mkdir(parents=True, exist_ok=True)
    for stale in leaf_dir.glob("leaf_*.bin"):
        stale.unlink()
    cfg = tree.config
    w, h = tree.image_shape
    stream = bytearray()

    def emit(path, node):
        if isinstance(node, LeafNode):
            stream.extend(_NODE.pack(path[-1], KIND_LEAF))
            ids = node.array()
            prov = tree._prov[ids]
            dset = DescriptorSet(w, h, tree._words[ids],
                                 np.column_stack([prov >> np.uint64(32), prov & np.uint64(0xFFFFFFFF)]))
            raw = serialize_descriptor_set(dset)
            body = _compress(codec_id, raw)
            header = _LEAF_HEADER.pack(LEAF_MAGIC, codec_id, zlib.crc32(body), len(raw))
            (leaf_dir / _leaf_name(path)).write_bytes(header + body)
            return
        stream.extend(_NODE.pack(path[-1] if path else 0, KIND_INTERNAL))
        for key in sorted(node.children):
            emit(path + (key,), node.children[key])
        stream.extend(_NODE.pack(0, KIND_END))

    emit((), tree.root)
    header = _META_HEADER.pack(META_MAGIC, META_VERSION, cfg.string_bits, cfg.chunk_bits,
                               cfg.leaf_split_threshold, codec_id, len(tree))
    (directory / "tree.meta").write_bytes(header + bytes(stream))


def _read_leaf(path: Path, codec_id: int) -> DescriptorSet:
    data = path.read_bytes()
    if len(data) < _LEAF_HEADER.size:
        raise FormatError(f"{path.name}: truncated leaf header")
    magic, codec, crc, raw_len = _LEAF_HEADER.unpack_from(data)
    if magic != LEAF_MAGIC:
        raise FormatError(f"{path.name}: bad leaf magic")
    if codec != codec_id:
        raise FormatError(f"{path.name}: codec {codec} differs from index codec {codec_id}")
    body = data[_LEAF_HEADER.size:]
    if zlib.crc32(body) != crc:
        raise FormatError(f"{path.name}: checksum mismatch")
    raw = _decompress(codec, body)
    if len(raw) != raw_len:
        raise FormatError(f"{path.name}: decompressed length mismatch")
    return deserialize_descriptor_set(raw)


def load_tree(directory, expected: TreeConfig | None = None) -> HammingTree:
    directory = Path(directory)
    try:
        meta = (directory / "tree.meta").read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read index: {exc}") from exc
    if len(meta) < _META_HEADER.size:
        raise FormatError("truncated tree.meta")
    magic, version, bits, chunk, threshold, codec_id, count = _META_HEADER.unpack_from(meta)
    if magic != META_MAGIC:
        raise FormatError("bad tree.meta magic")
    if version != META_VERSION:
        raise FormatError(f"unsupported index version {version}")
    if codec_id not in _CODEC_NAMES:
        raise FormatError(f"unknown codec id {codec_id}")
    try:
        config = TreeConfig(bits, chunk, threshold)
    except ValueError as exc:
        raise FormatError(f"corrupt header: {exc}") from exc
    if expected is not None and expected != config:
        raise FormatError(f"index config {config} does not match expected {expected}")

    records = meta[_META_HEADER.size:]
    if len(records) % _NODE.size:
        raise FormatError("truncated node stream")
    nodes = [_NODE.unpack_from(records, off) for off in range(0, len(records), _NODE.size)]
    leaf_sets: list[tuple[tuple[int, ...], DescriptorSet]] = []
    pos = 0

    def parse(path, depth):
        nonlocal pos
        if pos >= len(nodes):
            raise FormatError("unexpected end of node stream")
        key, kind = nodes[pos]
        pos += 1
        if kind == KIND_LEAF:
            if not path:
                raise FormatError("root cannot be a leaf")
            leaf = LeafNode(len(path))
            leaf_sets.append((path, _read_leaf(directory / "leaves" / _leaf_name(path), codec_id)))
            return leaf, key
        if kind != KIND_INTERNAL:
            raise FormatError(f"unexpected node kind {kind}")
        node = InternalNode(depth)
        while True:
            if pos >= len(nodes):
                raise FormatError("unterminated internal node")
            ckey, ckind = nodes[pos]
            if ckind == KIND_END:
                pos += 1
                return node, key
            child, ckey = parse(path + (ckey,), depth + 1)
            node.children[ckey] = child

    root, _ = parse((), 0)
    if pos != len(nodes):
        raise FormatError("trailing node records")

    shape = (config.string_bits, 1)
    if leaf_sets:
        first = leaf_sets[0][1]
        shape = (first.width, first.height)
    tree = HammingTree(config, shape)
    tree.root = root
    total = sum(len(ds) for _, ds in leaf_sets)
    if total != count:
        raise FormatError(f"entry count {total} does not match header {count}")
    tree._reserve(total)
    nw = config.n_words
    leaf_lookup = {path: leaf for path, leaf in _walk_leaves(root)}
    offset = 0
    for path, ds in leaf_sets:
        if (ds.width, ds.height) != shape or ds.words.shape[1] != nw:
            raise FormatError("leaf image dimensions disagree")
        n = len(ds)
        tree._words[offset:offset + n] = ds.words
        p = ds.provenance.astype(np.uint64)
        tree._prov[offset:offset + n] = (p[:, 0] << np.uint64(32)) | p[:, 1]
        leaf_lookup[path].ids = list(range(offset, offset + n))
        offset += n
    tree._count = total
    return tree


def _walk_leaves(root):
    stack = [((), root)]
    while stack:
        path, node = stack.pop()
        if isinstance(node, LeafNode):
            yield path, node
        else:
            for key, child in node.children.items():
                stack.append((path + (key,), child))
