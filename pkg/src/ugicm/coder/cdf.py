"""Quantized cumulative-frequency tables for the range coder.

A table is a row vector of ``alphabet_size + 1`` integers: monotone,
starting at 0 and ending at ``TOTAL = 2**16``, with every symbol given
frequency >= 1 so each symbol stays decodable.
"""

import numpy as np

from ..errors import SymbolOutOfRangeError

PRECISION_BITS = 16
TOTAL = 1 << PRECISION_BITS


def validate_cdfs(cdfs: np.ndarray) -> np.ndarray:
    """Check table invariants and return the array as C-contiguous int32."""
    cdfs = np.ascontiguousarray(cdfs, dtype=np.int32)
    if cdfs.ndim == 1:
        cdfs = cdfs[None, :]
    if cdfs.ndim != 2 or cdfs.shape[1] < 2:
        raise ValueError("cdfs must be (n_tables, alphabet_size + 1) with alphabet_size >= 1")
    if np.any(cdfs[:, 0] != 0):
        raise ValueError("every cdf must start at 0")
    if np.any(cdfs[:, -1] != TOTAL):
        raise ValueError(f"every cdf must end at {TOTAL}")
    if np.any(np.diff(cdfs, axis=1) < 1):
        raise ValueError("every symbol must have frequency >= 1")
    return cdfs


def check_symbols(symbols: np.ndarray, index: np.ndarray, alphabet_size: int) -> None:
    if symbols.size and (symbols.min() < 0 or symbols.max() >= alphabet_size):
        raise SymbolOutOfRangeError(
            f"symbols must lie in [0, {alphabet_size}); got range "
            f"[{symbols.min()}, {symbols.max()}]"
        )
    del index  # index bounds are checked by the caller


def quantize_pmf(pmf: np.ndarray) -> np.ndarray:
    """Turn float pmf rows into quantized cdf tables.

    Frequencies are floored at 1 and the rounding residue is absorbed by the
    most probable symbol of each row, so the result is deterministic.
    """
    pmf = np.asarray(pmf, dtype=np.float64)
    if pmf.ndim == 1:
        pmf = pmf[None, :]
    if np.any(~np.isfinite(pmf)) or np.any(pmf < 0):
        raise ValueError("pmf must be finite and non-negative")
    n, size = pmf.shape
    scale = pmf / np.maximum(pmf.sum(axis=1, keepdims=True), np.finfo(np.float64).tiny)
    freq = np.floor(scale * TOTAL).astype(np.int64)
    freq = np.maximum(freq, 1)
    # Push each row's residue onto its largest entry (first one on ties).
    residue = TOTAL - freq.sum(axis=1)
    top = np.argmax(freq, axis=1)
    freq[np.arange(n), top] += residue
    if np.any(freq < 1):
        # A row where the residue was so negative that the top symbol went
        # under 1; redistribute by shaving other symbols above 1.
        for i in np.nonzero(freq.min(axis=1) < 1)[0]:
            row = freq[i]
            row[top[i]] -= residue[i]  # undo
            deficit = row.sum() - TOTAL
            order = np.argsort(-row, kind="stable")
            for j in order:
                if deficit <= 0:
                    break
                take = min(deficit, row[j] - 1)
                row[j] -= take
                deficit -= take
            if deficit > 0:
                raise ValueError(f"cannot quantize pmf row {i}: alphabet too large for {TOTAL}")
    out = np.zeros((n, size + 1), dtype=np.int32)
    out[:, 1:] = np.cumsum(freq, axis=1)
    return out
