# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: windowed median and the PCG32 bit stream.

Both functions mirror ``redactbench._fallback`` exactly; the test suite runs
every kernel test against both backends.
"""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport int32_t, uint8_t, uint32_t, uint64_t
from libc.string cimport memset
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef uint64_t PCG_MULT = 6364136223846793005ULL


cdef inline uint32_t _pcg32_next(uint64_t* state, uint64_t inc) nogil:
    cdef uint64_t old = state[0]
    state[0] = old * PCG_MULT + inc
    cdef uint32_t xorshifted = <uint32_t>(((old >> 18) ^ old) >> 27)
    cdef uint32_t rot = <uint32_t>(old >> 59)
    return (xorshifted >> rot) | (xorshifted << ((-rot) & 31))


def pcg32_words(uint64_t seed, uint64_t stream, Py_ssize_t n):
    """First ``n`` 32-bit outputs of pcg32 seeded with (seed, stream)."""
    cdef uint64_t inc = (stream << 1) | 1
    cdef uint64_t state = 0
    _pcg32_next(&state, inc)
    state += seed
    _pcg32_next(&state, inc)
    out = np.empty(n, dtype=np.uint32)
    cdef uint32_t[::1] view = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            view[i] = _pcg32_next(&state, inc)
    return out


def pcg32_bits(uint64_t seed, uint64_t stream, Py_ssize_t n):
    """``n`` bits from pcg32, 32 per output word, least significant bit first."""
    cdef uint64_t inc = (stream << 1) | 1
    cdef uint64_t state = 0
    _pcg32_next(&state, inc)
    state += seed
    _pcg32_next(&state, inc)
    out = np.empty(n, dtype=np.uint8)
    cdef uint8_t[::1] view = out
    cdef Py_ssize_t i = 0
    cdef int b
    cdef uint32_t word
    with nogil:
        while i < n:
            word = _pcg32_next(&state, inc)
            b = 0
            while b < 32 and i < n:
                view[i] = (word >> b) & 1
                b += 1
                i += 1
    return out


cdef void _median_ranks(const int32_t[:, ::1] padded, int w, Py_ssize_t nlevels,
                        int32_t[:, ::1] out) noexcept nogil:
    # Huang-style sliding histogram with a two-level (coarse/fine) count table.
    cdef Py_ssize_t H = out.shape[0], W = out.shape[1]
    cdef int shift = 0
    while (1 << (2 * shift)) < nlevels:
        shift += 1
    cdef Py_ssize_t ncoarse = (nlevels >> shift) + 1
    cdef int32_t* fine = <int32_t*> malloc(nlevels * sizeof(int32_t))
    cdef int32_t* coarse = <int32_t*> malloc(ncoarse * sizeof(int32_t))
    cdef Py_ssize_t y, x, k, c, f
    cdef int32_t v, cum
    cdef int32_t target = (w * w) // 2
    for y in range(H):
        memset(fine, 0, nlevels * sizeof(int32_t))
        memset(coarse, 0, ncoarse * sizeof(int32_t))
        for k in range(w):
            for x in range(w):
                v = padded[y + k, x]
                fine[v] += 1
                coarse[v >> shift] += 1
        for x in range(W):
            if x > 0:
                for k in range(w):
                    v = padded[y + k, x - 1]
                    fine[v] -= 1
                    coarse[v >> shift] -= 1
                    v = padded[y + k, x + w - 1]
                    fine[v] += 1
                    coarse[v >> shift] += 1
            cum = 0
            c = 0
            while cum + coarse[c] <= target:
                cum += coarse[c]
                c += 1
            f = c << shift
            while cum + fine[f] <= target:
                cum += fine[f]
                f += 1
            out[y, x] = <int32_t>f
    free(fine)
    free(coarse)


def median_filter(plane, int w):
    """Median over w x w neighbourhoods with edge-replicated borders.

    Samples are replaced by their rank among the plane's distinct values, so
    the histogram has one bin per distinct value and the result is an exact
    input sample (w is odd, so the median is a single element).
    """
    plane = np.ascontiguousarray(plane, dtype=np.float64)
    if w == 1:
        return plane.copy()
    r = w // 2
    levels, inverse = np.unique(plane, return_inverse=True)
    ranks = inverse.reshape(plane.shape).astype(np.int32)
    padded = np.ascontiguousarray(np.pad(ranks, r, mode="edge"))
    out = np.empty(plane.shape, dtype=np.int32)
    _median_ranks(padded, w, levels.shape[0], out)
    return levels[out]
