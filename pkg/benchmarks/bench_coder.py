"""Throughput comparison: compiled range-coder extension vs pure-Python fallback.

Run from the repository root:

    python3 benchmarks/bench_coder.py [--symbols 200000] [--repeats 3]

Both backends are called through the same validated entry points; the
compiled module is imported directly so one process can time both.
"""

import argparse
import time

import numpy as np

from ugicm.coder import BACKEND, quantize_pmf
from ugicm.coder import _rc_py

try:
    from ugicm.coder import _rc
except ImportError:
    _rc = None


def make_workload(n_symbols: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    n_tables = 64
    alphabet = 33
    cdfs = quantize_pmf(rng.random((n_tables, alphabet)) ** 3 + 1e-9)
    index = rng.integers(0, n_tables, size=n_symbols).astype(np.int32)
    freqs = np.diff(cdfs, axis=1).astype(np.float64)
    probs = freqs / freqs.sum(axis=1, keepdims=True)
    symbols = np.empty(n_symbols, dtype=np.int32)
    for t in range(n_tables):
        mask = index == t
        symbols[mask] = rng.choice(alphabet, size=int(mask.sum()), p=probs[t])
    return symbols, cdfs, index


def bench(module, name, symbols, cdfs, index, repeats):
    enc_times, dec_times = [], []
    payload = b""
    for _ in range(repeats):
        t0 = time.perf_counter()
        payload = module.range_encode(symbols, cdfs, index)
        enc_times.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        decoded = module.range_decode(payload, cdfs, index, len(symbols))
        dec_times.append(time.perf_counter() - t0)
        assert np.array_equal(decoded, symbols)
    n = len(symbols)
    enc = min(enc_times)
    dec = min(dec_times)
    print(
        f"{name:>10}: encode {n / enc / 1e6:7.2f} Msym/s ({enc * 1e3:8.1f} ms)  "
        f"decode {n / dec / 1e6:7.2f} Msym/s ({dec * 1e3:8.1f} ms)  "
        f"payload {len(payload)} bytes"
    )
    return enc, dec, payload


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--symbols", type=int, default=200_000)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    symbols, cdfs, index = make_workload(args.symbols, args.seed)
    print(f"workload: {args.symbols} symbols, 64 tables, 32-symbol alphabet")
    print(f"active package backend: {BACKEND}")

    _, _, py_payload = bench(_rc_py, "python", symbols, cdfs, index, args.repeats)
    if _rc is None:
        print("  compiled: extension not built (pip install -e . rebuilds it)")
        return
    enc_c, dec_c, c_payload = bench(_rc, "compiled", symbols, cdfs, index, args.repeats)
    assert py_payload == c_payload, "backends diverged; this is a bug"
    print("payloads byte-identical across backends")


if __name__ == "__main__":
    main()
