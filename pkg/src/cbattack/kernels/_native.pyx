# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Same surface and conventions as the numpy fallback in ``py.py``; see that
module for the contract.  Built by setup.py, selected at import time by
``cbattack.kernels``.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil

BACKEND = "native"


def popcount(cnp.uint64_t[::1] words not None):
    cdef Py_ssize_t i
    cdef long long total = 0
    with nogil:
        for i in range(words.shape[0]):
            total += __builtin_popcountll(words[i])
    return int(total)


def xor_popcount(cnp.uint64_t[::1] a not None, cnp.uint64_t[::1] b not None):
    if a.shape[0] != b.shape[0]:
        raise ValueError("word arrays differ in length")
    cdef Py_ssize_t i
    cdef long long total = 0
    with nogil:
        for i in range(a.shape[0]):
            total += __builtin_popcountll(a[i] ^ b[i])
    return int(total)


def hamming_rows(cnp.uint64_t[:, ::1] rows not None, cnp.uint64_t[::1] target not None):
    if rows.shape[1] != target.shape[0]:
        raise ValueError("row width does not match target")
    cdef Py_ssize_t n = rows.shape[0]
    cdef Py_ssize_t w = rows.shape[1]
    out = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] out_v = out
    cdef Py_ssize_t i, j
    cdef long long total
    with nogil:
        for i in range(n):
            total = 0
            for j in range(w):
                total += __builtin_popcountll(rows[i, j] ^ target[j])
            out_v[i] = total
    return out


def bloom_fill(cnp.int64_t[:, ::1] codewords not None, int omega):
    cdef Py_ssize_t k = codewords.shape[0]
    cdef Py_ssize_t lb = codewords.shape[1]
    cdef Py_ssize_t size = 1 << omega
    filters = np.zeros((k, size), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] f_v = filters
    cdef Py_ssize_t i, j
    cdef cnp.int64_t v
    with nogil:
        for i in range(k):
            for j in range(lb):
                v = codewords[i, j]
                f_v[i, v] = 1
    return filters


def bloom_distance_batch(
    cnp.int64_t[:, :, ::1] codewords not None,
    cnp.uint8_t[:, ::1] target_filters not None,
    bint plain=False,
):
    cdef Py_ssize_t n = codewords.shape[0]
    cdef Py_ssize_t k = codewords.shape[1]
    cdef Py_ssize_t lb = codewords.shape[2]
    cdef Py_ssize_t size = target_filters.shape[1]
    if codewords.shape[1] != target_filters.shape[0]:
        raise ValueError("block count does not match target filters")

    out = np.empty(n, dtype=np.float64)
    cdef cnp.float64_t[::1] out_v = out

    target_pop = np.asarray(target_filters).sum(axis=1).astype(np.int64)
    cdef cnp.int64_t[::1] tpop_v = target_pop

    # Versioned scratch table: marking a codeword as seen is one store, no
    # per-block clearing of the 2**omega slots.
    stamp = np.zeros(size, dtype=np.int64)
    cdef cnp.int64_t[::1] stamp_v = stamp
    cdef cnp.int64_t version = 0

    cdef Py_ssize_t i, b, j
    cdef cnp.int64_t v, cand_pop, inter, xor_bits, denom
    cdef double acc
    with nogil:
        for i in range(n):
            acc = 0.0
            for b in range(k):
                version += 1
                cand_pop = 0
                inter = 0
                for j in range(lb):
                    v = codewords[i, b, j]
                    if stamp_v[v] != version:
                        stamp_v[v] = version
                        cand_pop += 1
                        if target_filters[b, v]:
                            inter += 1
                xor_bits = cand_pop + tpop_v[b] - 2 * inter
                if plain:
                    acc += xor_bits / (<double> size)
                else:
                    denom = cand_pop + tpop_v[b]
                    if denom > 0:
                        acc += xor_bits / (<double> denom)
            out_v[i] = acc / k
    return out
