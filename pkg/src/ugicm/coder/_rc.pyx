# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled range coder backend.

Same masked 64-bit carry-less algorithm as ``_rc_py``; output must stay
byte-identical with it (covered by the randomized equivalence suite).
"""

from libc.stdint cimport uint8_t, uint64_t, int32_t

import numpy as np

from ..errors import CorruptStreamError

cdef uint64_t MASK = <uint64_t> 0xFFFFFFFFFFFFFFFF
cdef uint64_t TOP = (<uint64_t> 1) << 56
cdef uint64_t BOT = (<uint64_t> 1) << 48
cdef int PRECISION_BITS = 16
cdef uint64_t TOTAL = (<uint64_t> 1) << 16


def range_encode(symbols, cdfs, index):
    cdef const int32_t[::1] syms = np.ascontiguousarray(symbols, dtype=np.int32)
    cdef const int32_t[:, ::1] tables = np.ascontiguousarray(cdfs, dtype=np.int32)
    cdef const int32_t[::1] idx = np.ascontiguousarray(index, dtype=np.int32)
    cdef Py_ssize_t n = syms.shape[0]
    if n == 0:
        return b""
    out = bytearray()
    cdef uint64_t low = 0
    cdef uint64_t rng = MASK
    cdef uint64_t r, c_lo, c_hi, hi
    cdef Py_ssize_t pos
    cdef int32_t s, row
    for pos in range(n):
        row = idx[pos]
        s = syms[pos]
        c_lo = <uint64_t> tables[row, s]
        c_hi = <uint64_t> tables[row, s + 1]
        r = rng >> PRECISION_BITS
        low = low + r * c_lo
        rng = r * (c_hi - c_lo)
        while True:
            hi = low + rng
            if (low ^ hi) < TOP:
                pass
            elif rng < BOT:
                rng = (-low) & (BOT - 1)
            else:
                break
            out.append(<uint8_t> (low >> 56))
            low = low << 8
            rng = rng << 8
    cdef int k
    for k in range(8):
        out.append(<uint8_t> (low >> 56))
        low = low << 8
    return bytes(out)


def range_decode(data, cdfs, index, count):
    cdef Py_ssize_t cnt = count
    if cnt == 0:
        return np.zeros(0, dtype=np.int32)
    cdef const uint8_t[::1] buf = data
    cdef const int32_t[:, ::1] tables = np.ascontiguousarray(cdfs, dtype=np.int32)
    cdef const int32_t[::1] idx = np.ascontiguousarray(index, dtype=np.int32)
    symbols = np.zeros(cnt, dtype=np.int32)
    cdef int32_t[::1] syms = symbols
    cdef Py_ssize_t n = buf.shape[0]
    cdef Py_ssize_t pos = 0
    cdef uint64_t code = 0
    cdef int k
    for k in range(8):
        if pos >= n:
            raise CorruptStreamError("payload shorter than coder state")
        code = (code << 8) | buf[pos]
        pos += 1
    cdef uint64_t low = 0
    cdef uint64_t rng = MASK
    cdef uint64_t r, cum, c_lo, c_hi, hi
    cdef Py_ssize_t i
    cdef int32_t row, lo_s, hi_s, mid
    for i in range(cnt):
        row = idx[i]
        r = rng >> PRECISION_BITS
        cum = (code - low) // r
        if cum >= TOTAL:
            raise CorruptStreamError("decoded cumulative frequency out of range")
        # binary search: largest s with tables[row, s] <= cum
        lo_s = 0
        hi_s = tables.shape[1] - 1
        while hi_s - lo_s > 1:
            mid = (lo_s + hi_s) >> 1
            if <uint64_t> tables[row, mid] <= cum:
                lo_s = mid
            else:
                hi_s = mid
        c_lo = <uint64_t> tables[row, lo_s]
        c_hi = <uint64_t> tables[row, lo_s + 1]
        syms[i] = lo_s
        low = low + r * c_lo
        rng = r * (c_hi - c_lo)
        while True:
            hi = low + rng
            if (low ^ hi) < TOP:
                pass
            elif rng < BOT:
                rng = (-low) & (BOT - 1)
            else:
                break
            if pos >= n:
                raise CorruptStreamError("truncated payload")
            code = (code << 8) | buf[pos]
            pos += 1
            low = low << 8
            rng = rng << 8
    return symbols
