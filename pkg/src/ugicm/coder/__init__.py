"""Range coder with a compiled core and a pure-Python fallback.

The compiled extension is preferred; set ``UGICM_PURE_PY=1`` (or fail to
build the extension) to get the fallback. Both produce byte-identical
streams.
"""

import os

import numpy as np

from ..errors import CorruptStreamError, SymbolOutOfRangeError
from . import _rc_py
from .cdf import TOTAL, check_symbols, quantize_pmf, validate_cdfs

if os.environ.get("UGICM_PURE_PY"):
    _backend = _rc_py
else:
    try:
        from . import _rc as _backend  # type: ignore[no-redef]
    except ImportError:
        _backend = _rc_py

BACKEND = "python" if _backend is _rc_py else "compiled"


def _prepare(symbols, cdfs, index):
    cdfs = validate_cdfs(cdfs)
    symbols = np.ascontiguousarray(symbols, dtype=np.int32)
    if symbols.ndim != 1:
        raise ValueError("symbols must be a flat sequence")
    if index is None:
        index = np.zeros(symbols.shape[0], dtype=np.int32)
        if cdfs.shape[0] != 1:
            raise ValueError("index is required when more than one cdf table is supplied")
    else:
        index = np.ascontiguousarray(index, dtype=np.int32)
    if index.shape != symbols.shape:
        raise ValueError("index must align with symbols")
    if index.size and (index.min() < 0 or index.max() >= cdfs.shape[0]):
        raise ValueError("index selects a nonexistent cdf table")
    check_symbols(symbols, index, cdfs.shape[1] - 1)
    return symbols, cdfs, index


def range_encode(symbols, cdfs, index=None) -> bytes:
    """Entropy-code ``symbols``; ``index[i]`` selects the cdf row for symbol i."""
    symbols, cdfs, index = _prepare(symbols, cdfs, index)
    return _backend.range_encode(symbols, cdfs, index)


def range_decode(data: bytes, cdfs, index=None, count: int | None = None) -> np.ndarray:
    """Exact inverse of :func:`range_encode` for the same tables and count."""
    if count is None:
        raise ValueError("count is required")
    cdfs = validate_cdfs(cdfs)
    if index is None:
        index = np.zeros(count, dtype=np.int32)
        if cdfs.shape[0] != 1:
            raise ValueError("index is required when more than one cdf table is supplied")
    else:
        index = np.ascontiguousarray(index, dtype=np.int32)
    if index.shape != (count,):
        raise ValueError("index must have `count` entries")
    if index.size and (index.min() < 0 or index.max() >= cdfs.shape[0]):
        raise ValueError("index selects a nonexistent cdf table")
    return _backend.range_decode(bytes(data), cdfs, index, count)


__all__ = [
    "BACKEND",
    "TOTAL",
    "CorruptStreamError",
    "SymbolOutOfRangeError",
    "quantize_pmf",
    "range_decode",
    "range_encode",
    "validate_cdfs",
]
