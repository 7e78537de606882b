"""Pure-Python/NumPy versions of the compiled kernels in ``_kernels.pyx``.

Selected automatically when the extension is not built. Results are
identical to the compiled backend, only slower.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_MASK64 = (1 << 64) - 1
_PCG_MULT = 6364136223846793005


def _pcg32_stream(seed, stream):
    inc = ((stream << 1) | 1) & _MASK64
    state = 0
    state = (state * _PCG_MULT + inc) & _MASK64
    state = (state + seed) & _MASK64
    state = (state * _PCG_MULT + inc) & _MASK64
    while True:
        old = state
        state = (old * _PCG_MULT + inc) & _MASK64
        xorshifted = (((old >> 18) ^ old) >> 27) & 0xFFFFFFFF
        rot = old >> 59
        yield ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & 0xFFFFFFFF


def pcg32_words(seed, stream, n):
    gen = _pcg32_stream(seed, stream)
    return np.fromiter((next(gen) for _ in range(n)), dtype=np.uint32, count=n)


def pcg32_bits(seed, stream, n):
    words = pcg32_words(seed, stream, (n + 31) // 32)
    bits = (words[:, None] >> np.arange(32, dtype=np.uint32)) & 1
    return bits.astype(np.uint8).ravel()[:n]


def median_filter(plane, w, rows_per_chunk=16):
    plane = np.ascontiguousarray(plane, dtype=np.float64)
    if w == 1:
        return plane.copy()
    r = w // 2
    padded = np.pad(plane, r, mode="edge")
    out = np.empty_like(plane)
    kth = (w * w) // 2
    for y0 in range(0, plane.shape[0], rows_per_chunk):
        y1 = min(y0 + rows_per_chunk, plane.shape[0])
        win = sliding_window_view(padded[y0:y1 + 2 * r], (w, w))
        flat = win.reshape(win.shape[0], win.shape[1], w * w)
        out[y0:y1] = np.partition(flat, kth, axis=-1)[..., kth]
    return out
