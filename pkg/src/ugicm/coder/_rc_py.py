"""Pure-Python range coder backend.

Carry-less byte-oriented range coder: 64-bit state, 16-bit frequency
precision. When the interval straddles a top-byte boundary and gets too
small, the range is clamped to the boundary instead of propagating a carry,
so emitted bytes are final. The compiled backend (``_rc``) and the native
coder implement the exact same masked arithmetic and are byte-identical.
"""

from bisect import bisect_right

import numpy as np

from ..errors import CorruptStreamError
from .cdf import PRECISION_BITS, TOTAL

MASK = (1 << 64) - 1
TOP = 1 << 56
BOT = 1 << 48


def range_encode(symbols: np.ndarray, cdfs: np.ndarray, index: np.ndarray) -> bytes:
    if len(symbols) == 0:
        return b""
    rows = [cdf.tolist() for cdf in cdfs]
    syms = np.asarray(symbols).tolist()
    idx = np.asarray(index).tolist()
    out = bytearray()
    low = 0
    rng = MASK
    for pos in range(len(syms)):
        row = rows[idx[pos]]
        s = syms[pos]
        c_lo = row[s]
        c_hi = row[s + 1]
        r = rng >> PRECISION_BITS
        low = (low + r * c_lo) & MASK
        rng = r * (c_hi - c_lo)
        while True:
            if ((low ^ ((low + rng) & MASK)) & MASK) < TOP:
                pass
            elif rng < BOT:
                rng = (-low) & (BOT - 1)
            else:
                break
            out.append(low >> 56)
            low = (low << 8) & MASK
            rng = (rng << 8) & MASK
    for _ in range(8):
        out.append(low >> 56)
        low = (low << 8) & MASK
    return bytes(out)


def range_decode(data: bytes, cdfs: np.ndarray, index: np.ndarray, count: int) -> np.ndarray:
    if count == 0:
        return np.zeros(0, dtype=np.int32)
    rows = [cdf.tolist() for cdf in cdfs]
    idx = np.asarray(index).tolist()
    symbols = np.zeros(count, dtype=np.int32)
    n = len(data)
    pos = 0
    code = 0
    for _ in range(8):
        if pos >= n:
            raise CorruptStreamError("payload shorter than coder state")
        code = (code << 8) | data[pos]
        pos += 1
    low = 0
    rng = MASK
    for i in range(count):
        row = rows[idx[i]]
        r = rng >> PRECISION_BITS
        cum = ((code - low) & MASK) // r
        if cum >= TOTAL:
            raise CorruptStreamError("decoded cumulative frequency out of range")
        s = bisect_right(row, cum) - 1
        c_lo = row[s]
        c_hi = row[s + 1]
        symbols[i] = s
        low = (low + r * c_lo) & MASK
        rng = r * (c_hi - c_lo)
        while True:
            if ((low ^ ((low + rng) & MASK)) & MASK) < TOP:
                pass
            elif rng < BOT:
                rng = (-low) & (BOT - 1)
            else:
                break
            if pos >= n:
                raise CorruptStreamError("truncated payload")
            code = ((code << 8) | data[pos]) & MASK
            pos += 1
            low = (low << 8) & MASK
            rng = (rng << 8) & MASK
    return symbols
