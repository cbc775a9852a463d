"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--L 256] [--D 64]

Prints one line per kernel with the best-of-N wall time of each backend and
checks that both return identical results.
"""
import argparse
import timeit

import numpy as np

from svf import _fallback
from svf.tensor import SpikeTensor

try:
    from svf import _core
except ImportError:
    _core = None


def cases(L, D, rng):
    k = (rng.random((L, D)) < 0.3).astype(np.uint8)
    v = (rng.random((L, D)) < 0.3).astype(np.uint8)
    q = (rng.random((L, D)) < 0.3).astype(np.uint8)
    m = rng.integers(-L, L, (D, D))
    s = rng.integers(-D, D, (L, L))
    w = rng.standard_normal((D, D))
    x = rng.standard_normal((16, L * D))
    qw = SpikeTensor.from_bits(q).words
    kw = SpikeTensor.from_bits(k).words
    return {
        "popcount_signed_matmul": lambda b: b.popcount_signed_matmul(qw, kw, D, 1),
        "signed_binary_t_matmul": lambda b: b.signed_binary_t_matmul(k, v),
        "signed_int_matmul": lambda b: b.signed_int_matmul(q, m),
        "int_binary_matmul": lambda b: b.int_binary_matmul(s, v),
        "binary_real_matmul": lambda b: b.binary_real_matmul(q, w),
        "lif_sequence": lambda b: b.lif_sequence(x, 0.5, 1.0),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--L", type=int, default=256)
    ap.add_argument("--D", type=int, default=64)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"L={args.L} D={args.D}; best of {args.repeat}")
    print(f"{'kernel':<26}{'fallback ms':>13}{'compiled ms':>13}{'speedup':>9}  equal")
    for name, fn in cases(args.L, args.D, rng).items():
        t_py = min(timeit.repeat(lambda: fn(_fallback), number=1, repeat=args.repeat)) * 1e3
        if _core is None:
            print(f"{name:<26}{t_py:>13.3f}{'n/a':>13}")
            continue
        t_c = min(timeit.repeat(lambda: fn(_core), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<26}{t_py:>13.3f}{t_c:>13.3f}{t_py / t_c:>8.1f}x  {same(fn(_fallback), fn(_core))}")


if __name__ == "__main__":
    main()
