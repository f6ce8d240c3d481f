"""Compiled bit-counting kernels shared by the descriptor, index and benchmarks.

All image arrays are C-contiguous ``uint64`` with one row per bit string.
"""

import llvmlite.ir as ir
import numpy as np
from numba import njit, types
from numba.extending import intrinsic


@intrinsic
def popcount64(typingctx, x):
    sig = types.uint64(types.uint64)

    def codegen(context, builder, signature, args):
        fn = builder.module.declare_intrinsic("llvm.ctpop", [ir.IntType(64)])
        return builder.call(fn, args)

    return sig, codegen


@njit(nogil=True, cache=True)
def popcount_rows(images, out):
    n, w = images.shape
    for i in range(n):
        s = 0
        for j in range(w):
            s += popcount64(images[i, j])
        out[i] = s


@njit(nogil=True, cache=True)
def hamming_one_to_many(needle, hay, out):
    n, w = hay.shape
    for i in range(n):
        s = 0
        for j in range(w):
            s += popcount64(needle[j] ^ hay[i, j])
        out[i] = s


@njit(nogil=True, cache=True)
def hamming_one_to_subset(needle, hay, idx, out):
    w = hay.shape[1]
    for k in range(idx.shape[0]):
        i = idx[k]
        s = 0
        for j in range(w):
            s += popcount64(needle[j] ^ hay[i, j])
        out[k] = s


@njit(nogil=True, cache=True)
def missing_one_to_many(needle, hay, out):
    # bits set in needle but not in haystack
    n, w = hay.shape
    for i in range(n):
        s = 0
        for j in range(w):
            s += popcount64(needle[j] & ~hay[i, j])
        out[i] = s


@njit(nogil=True, cache=True)
def weighted_one_to_many(needle, hay, total_bits, out):
    n, w = hay.shape
    needle_set = 0
    for j in range(w):
        needle_set += popcount64(needle[j])
    d_missing = max(needle_set, 1)
    d_extra = max(total_bits - needle_set, 1)
    for i in range(n):
        missing = 0
        extra = 0
        for j in range(w):
            missing += popcount64(needle[j] & ~hay[i, j])
            extra += popcount64(~needle[j] & hay[i, j])
        out[i] = missing / d_missing + extra / d_extra


@njit(nogil=True, cache=True)
def weighted_one_to_subset(needle, hay, idx, total_bits, out):
    w = hay.shape[1]
    needle_set = 0
    for j in range(w):
        needle_set += popcount64(needle[j])
    d_missing = max(needle_set, 1)
    d_extra = max(total_bits - needle_set, 1)
    for k in range(idx.shape[0]):
        i = idx[k]
        missing = 0
        extra = 0
        for j in range(w):
            missing += popcount64(needle[j] & ~hay[i, j])
            extra += popcount64(~needle[j] & hay[i, j])
        out[k] = missing / d_missing + extra / d_extra


@njit(nogil=True, cache=True)
def pairwise_counts(a, b, out):
    """Row-paired (missing, extra) counts of ``a[i]`` against ``b[i]``."""
    n, w = a.shape
    for i in range(n):
        missing = 0
        extra = 0
        for j in range(w):
            missing += popcount64(a[i, j] & ~b[i, j])
            extra += popcount64(~a[i, j] & b[i, j])
        out[i, 0] = missing
        out[i, 1] = extra


@njit(nogil=True, cache=True)
def clutter_ranks(needles, hay, true_idx, out):
    """Rank of ``hay[true_idx[r]]`` among all haystacks for needle ``r``.

    Rank counts haystacks with a strictly lower clutter-resistant distance;
    a negative ``true_idx`` yields -1.
    """
    n, w = needles.shape
    m = hay.shape[0]
    for r in range(n):
        t = true_idx[r]
        if t < 0:
            out[r] = -1
            continue
        ref = 0
        for j in range(w):
            ref += popcount64(needles[r, j] & ~hay[t, j])
        rank = 0
        if ref > 0:
            for i in range(m):
                s = 0
                for j in range(w):
                    s += popcount64(needles[r, j] & ~hay[i, j])
                if s < ref:
                    rank += 1
        out[r] = rank


@njit(nogil=True, cache=True)
def chunk_counts(images, total_bits, chunk_bits, out):
    """Set-bit count of each ``chunk_bits`` slice of every row.

    ``out`` has shape (n, ceil(total_bits / chunk_bits)).
    """
    n = images.shape[0]
    nchunks = out.shape[1]
    for i in range(n):
        for c in range(nchunks):
            lo = c * chunk_bits
            hi = min(lo + chunk_bits, total_bits)
            s = 0
            b = lo
            while b < hi:
                word = b >> 6
                off = b & 63
                take = min(64 - off, hi - b)
                v = images[i, word] >> np.uint64(off)
                if take < 64:
                    v &= (np.uint64(1) << np.uint64(take)) - np.uint64(1)
                s += popcount64(v)
                b += take
            out[i, c] = s


def suffix_profiles(images: np.ndarray, total_bits: int, chunk_bits: int) -> np.ndarray:
    """Suffix set-bit counts, shape (n, nchunks + 1); last column is zero."""
    images = np.ascontiguousarray(images, dtype=np.uint64)
    if images.ndim == 1:
        images = images[None, :]
    nchunks = -(-total_bits // chunk_bits)
    counts = np.empty((images.shape[0], nchunks), dtype=np.int64)
    chunk_counts(images, total_bits, chunk_bits, counts)
    out = np.zeros((images.shape[0], nchunks + 1), dtype=np.int64)
    out[:, :nchunks] = np.cumsum(counts[:, ::-1], axis=1)[:, ::-1]
    return out
