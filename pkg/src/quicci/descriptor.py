"""QUICCI bit images, their distance functions and the ``.qdf`` container.

An image of width W and height H is stored as a flat row-major bit string:
bit (r, c) lives at flat index ``r * W + c``, packed LSB-first into
little-endian 64-bit words.  Bits past ``W * H`` in the last word are zero.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels

MAX_BITS = 1 << 16

QDF_MAGIC = b"QIDS"
QDF_VERSION = 1
_QDF_HEADER = struct.Struct("<4sIHHQI")
FLAG_PROVENANCE = 1


class FormatError(ValueError):
    """Raised for malformed descriptor or index files."""


class Provenance(NamedTuple):
    object_id: int
    vertex_index: int


def words_for(nbits: int) -> int:
    return -(-nbits // 64)


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack boolean images of shape (..., H, W) into (..., n_words) uint64."""
    bits = np.asarray(bits, dtype=bool)
    lead = bits.shape[:-2]
    nbits = bits.shape[-2] * bits.shape[-1]
    nwords = words_for(nbits)
    flat = bits.reshape(lead + (nbits,))
    pad = nwords * 64 - nbits
    if pad:
        flat = np.concatenate([flat, np.zeros(lead + (pad,), dtype=bool)], axis=-1)
    packed = np.packbits(flat, axis=-1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64, copy=False)


def unpack_bits(words: np.ndarray, width: int, height: int) -> np.ndarray:
    words = np.ascontiguousarray(words, dtype="<u8")
    lead = words.shape[:-1]
    flat = np.unpackbits(words.view(np.uint8), axis=-1, bitorder="little")
    return flat[..., : width * height].reshape(lead + (height, width)).astype(bool)


def _padding_mask(nbits: int) -> np.uint64:
    rem = nbits % 64
    if rem == 0:
        return np.uint64(0)
    return ~np.uint64((1 << rem) - 1)


class QuicciImage:
    """A packed W x H binary image.  Immutable."""

    __slots__ = ("width", "height", "words")

    def __init__(self, width: int, height: int, words: np.ndarray | None = None):
        if width < 1 or height < 1:
            raise ValueError("image dimensions must be positive")
        if width * height > MAX_BITS:
            raise ValueError(f"image has {width * height} bits, limit is {MAX_BITS}")
        nwords = words_for(width * height)
        if words is None:
            words = np.zeros(nwords, dtype=np.uint64)
        else:
            words = np.array(words, dtype=np.uint64).reshape(-1)
            if words.shape[0] != nwords:
                raise ValueError(f"expected {nwords} words, got {words.shape[0]}")
            if words[-1] & _padding_mask(width * height):
                raise FormatError("padding bits must be zero")
        words.flags.writeable = False
        object.__setattr__(self, "width", width)
        object.__setattr__(self, "height", height)
        object.__setattr__(self, "words", words)

    def __setattr__(self, name, value):
        raise AttributeError("QuicciImage is immutable")

    @classmethod
    def from_bits(cls, bits) -> QuicciImage:
        """Build from a boolean array of shape (H, W)."""
        bits = np.asarray(bits, dtype=bool)
        if bits.ndim != 2:
            raise ValueError("expected a 2D (height, width) array")
        h, w = bits.shape
        return cls(w, h, pack_bits(bits))

    @classmethod
    def from_rows(cls, rows: list[str]) -> QuicciImage:
        """Build from strings such as ``["0100", "1011"]``."""
        return cls.from_bits([[ch == "1" for ch in row] for row in rows])

    @property
    def total_bits(self) -> int:
        return self.width * self.height

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    def to_bits(self) -> np.ndarray:
        return unpack_bits(self.words, self.width, self.height)

    def bit(self, row: int, col: int) -> bool:
        if not (0 <= row < self.height and 0 <= col < self.width):
            raise IndexError((row, col))
        i = row * self.width + col
        return bool((int(self.words[i >> 6]) >> (i & 63)) & 1)

    def popcount(self) -> int:
        return int(np.bitwise_count(self.words).sum())

    def transpose(self) -> QuicciImage:
        """Column-major view of the same image as a new (H x W) image."""
        return QuicciImage.from_bits(self.to_bits().T)

    def __eq__(self, other):
        if not isinstance(other, QuicciImage):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.words, other.words))

    __hash__ = None

    def __repr__(self):
        return f"QuicciImage({self.width}x{self.height}, set={self.popcount()})"


def quicci_from_counts(counts: np.ndarray) -> np.ndarray:
    """Packed QUICCI words from intersection counts of shape (..., H, C)."""
    counts = np.asarray(counts)
    changes = counts[..., 1:] != counts[..., :-1]
    return pack_bits(changes)


def quicci_from_grid(grid) -> QuicciImage:
    counts = np.asarray(grid.counts)
    h, c = counts.shape
    return QuicciImage(c - 1, h, quicci_from_counts(counts))


def _check_pair(a: QuicciImage, b: QuicciImage) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def mismatch_counts(needle: QuicciImage, haystack: QuicciImage) -> tuple[int, int]:
    """(missing, extra): bits set only in the needle, bits set only in the haystack."""
    _check_pair(needle, haystack)
    n, h = needle.words, haystack.words
    missing = int(np.bitwise_count(n & ~h).sum())
    extra = int(np.bitwise_count(~n & h).sum())
    return missing, extra


def hamming_distance(a: QuicciImage, b: QuicciImage) -> int:
    _check_pair(a, b)
    return int(np.bitwise_count(a.words ^ b.words).sum())


def clutter_resistant_distance(needle: QuicciImage, haystack: QuicciImage) -> int:
    """Number of needle bits that the haystack fails to reproduce."""
    return mismatch_counts(needle, haystack)[0]


def weighted_reference_length(total_bits: int) -> int:
    # Length the unset-bit term is normalised against; the image's total bit
    # count (not its width) so that the denominator stays positive.
    return total_bits


def weighted_hamming_distance(needle: QuicciImage, haystack: QuicciImage) -> float:
    missing, extra = mismatch_counts(needle, haystack)
    s = needle.popcount()
    t = weighted_reference_length(needle.total_bits)
    return missing / max(s, 1) + extra / max(t - s, 1)


DISTANCE_FUNCTIONS = ("hamming", "clutter", "weighted")


def distances_to_many(needle: QuicciImage, haystack: np.ndarray, function: str = "hamming") -> np.ndarray:
    """Distance from ``needle`` to each row of a packed (n, n_words) array."""
    hay = np.ascontiguousarray(haystack, dtype=np.uint64)
    if hay.ndim != 2 or hay.shape[1] != needle.words.shape[0]:
        raise ValueError("haystack rows do not match the needle's word count")
    if function == "hamming":
        out = np.empty(hay.shape[0], dtype=np.int64)
        _kernels.hamming_one_to_many(needle.words, hay, out)
    elif function == "clutter":
        out = np.empty(hay.shape[0], dtype=np.int64)
        _kernels.missing_one_to_many(needle.words, hay, out)
    elif function == "weighted":
        out = np.empty(hay.shape[0], dtype=np.float64)
        _kernels.weighted_one_to_many(needle.words, hay, weighted_reference_length(needle.total_bits), out)
    else:
        raise ValueError(f"unknown distance function {function!r}")
    return out


@dataclass(frozen=True)
class BitCountProfile:
    suffix_counts: tuple[int, ...]
    chunk_bits: int


def bit_count_profile(image: QuicciImage, chunk_bits: int) -> BitCountProfile:
    """Set bits remaining after removing the first l chunks, for every l."""
    if chunk_bits < 1:
        raise ValueError("chunk_bits must be >= 1")
    prof = _kernels.suffix_profiles(image.words, image.total_bits, chunk_bits)[0]
    return BitCountProfile(tuple(int(x) for x in prof), chunk_bits)


class DescriptorSet:
    """A batch of equally sized images with optional provenance."""

    def __init__(self, width: int, height: int, words: np.ndarray, provenance: np.ndarray | None = None):
        nwords = words_for(width * height)
        words = np.ascontiguousarray(words, dtype=np.uint64).reshape(-1, nwords)
        if provenance is not None:
            provenance = np.ascontiguousarray(provenance, dtype=np.uint32).reshape(-1, 2)
            if provenance.shape[0] != words.shape[0]:
                raise ValueError("provenance count does not match image count")
        self.width = width
        self.height = height
        self.words = words
        self.provenance = provenance

    def __len__(self):
        return self.words.shape[0]

    def __getitem__(self, i: int) -> QuicciImage:
        return QuicciImage(self.width, self.height, self.words[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @classmethod
    def from_images(cls, images, provenance=None) -> DescriptorSet:
        images = list(images)
        if not images:
            raise ValueError("cannot infer dimensions from an empty image list")
        w, h = images[0].width, images[0].height
        if any(im.shape != (h, w) for im in images):
            raise ValueError("images differ in size")
        words = np.stack([im.words for im in images])
        return cls(w, h, words, None if provenance is None else np.asarray(provenance))

    def provenance_of(self, i: int) -> Provenance | None:
        if self.provenance is None:
            return None
        o, v = self.provenance[i]
        return Provenance(int(o), int(v))

    def __eq__(self, other):
        if not isinstance(other, DescriptorSet):
            return NotImplemented
        if (self.width, self.height) != (other.width, other.height):
            return False
        if not np.array_equal(self.words, other.words):
            return False
        if (self.provenance is None) != (other.provenance is None):
            return False
        return self.provenance is None or bool(np.array_equal(self.provenance, other.provenance))

    __hash__ = None


def serialize_descriptor_set(dset: DescriptorSet) -> bytes:
    flags = FLAG_PROVENANCE if dset.provenance is not None else 0
    parts = [
        _QDF_HEADER.pack(QDF_MAGIC, QDF_VERSION, dset.width, dset.height, len(dset), flags),
        dset.words.astype("<u8", copy=False).tobytes(),
    ]
    if dset.provenance is not None:
        parts.append(dset.provenance.astype("<u4", copy=False).tobytes())
    return b"".join(parts)


def deserialize_descriptor_set(data: bytes) -> DescriptorSet:
    if len(data) < _QDF_HEADER.size:
        raise FormatError("truncated header")
    magic, version, width, height, count, flags = _QDF_HEADER.unpack_from(data, 0)
    if magic != QDF_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != QDF_VERSION:
        raise FormatError(f"unsupported version {version}")
    if width < 1 or height < 1:
        raise FormatError("zero image dimension")
    nwords = words_for(width * height)
    body = count * nwords * 8
    prov_bytes = count * 8 if flags & FLAG_PROVENANCE else 0
    expected = _QDF_HEADER.size + body + prov_bytes
    if len(data) < expected:
        raise FormatError(f"truncated: need {expected} bytes, have {len(data)}")
    if len(data) > expected:
        raise FormatError("trailing bytes after descriptor records")
    off = _QDF_HEADER.size
    words = np.frombuffer(data, dtype="<u8", count=count * nwords, offset=off).reshape(count, nwords)
    if count and np.any(words[:, -1] & _padding_mask(width * height)):
        raise FormatError("nonzero padding bits")
    provenance = None
    if flags & FLAG_PROVENANCE:
        provenance = np.frombuffer(data, dtype="<u4", count=count * 2, offset=off + body).reshape(count, 2)
    return DescriptorSet(width, height, words.astype(np.uint64), None if provenance is None else provenance.astype(np.uint32))


def save_descriptor_set(path, dset: DescriptorSet) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_descriptor_set(dset))


def load_descriptor_set(path) -> DescriptorSet:
    with open(path, "rb") as fh:
        return deserialize_descriptor_set(fh.read())
