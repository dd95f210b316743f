"""Compare the compiled quantizer kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 20]
"""

import argparse
import timeit

import numpy as np

from vflsim._kernels import _fallback

try:
    from vflsim._kernels import _ckernels
except ImportError:
    _ckernels = None

# forward blocks of one guest: batch 256 x cut width 16/32/64, plus a large block
SIZES = (256 * 16, 256 * 32, 256 * 64, 1_000_000)
BUCKETS = (2, 16, 64)


def bench(mod, v, n, repeat):
    lo, hi = float(v.min()), float(v.max())
    w = (hi - lo) / n
    bits = (n - 1).bit_length()
    codes, _, _ = mod.bucketize(v, lo, w, n)
    buf = mod.pack_codes(codes, bits)
    t = {
        "bucketize": min(timeit.repeat(lambda: mod.bucketize(v, lo, w, n), number=1, repeat=repeat)),
        "pack": min(timeit.repeat(lambda: mod.pack_codes(codes, bits), number=1, repeat=repeat)),
        "unpack": min(timeit.repeat(lambda: mod.unpack_codes(buf, v.size, bits), number=1, repeat=repeat)),
    }
    return t


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled kernels not built; only the fallback is timed")
    rng = np.random.default_rng(0)
    print(f"{'values':>9} {'N':>3} {'op':>9} {'numpy us':>10} {'cython us':>10} {'speedup':>8}")
    for size in SIZES:
        v = np.maximum(rng.normal(size=size), 0).astype(np.float32).astype(np.float64)
        for n in BUCKETS:
            py = bench(_fallback, v, n, args.repeat)
            cy = bench(_ckernels, v, n, args.repeat) if _ckernels else None
            for op in py:
                c = f"{cy[op] * 1e6:10.1f} {py[op] / cy[op]:7.1f}x" if cy else f"{'-':>10} {'-':>8}"
                print(f"{size:9d} {n:3d} {op:>9} {py[op] * 1e6:10.1f} {c}")


if __name__ == "__main__":
    main()
