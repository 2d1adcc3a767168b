"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N]

Outputs of the two backends are compared before timing.
"""
import argparse
import timeit

import numpy as np

from vsekit.kernels import MH, _numba, _numpy


def cases(rng):
    n, p = 128, 128
    pos = rng.uniform(-1, 1, n)
    s_cap = rng.uniform(-1, 1, (n, p))
    s_img = rng.uniform(-1, 1, (n, p))
    excl = np.arange(n, dtype=np.int64)
    f = rng.normal(size=(256, 256))
    g = rng.normal(size=(256, 256))
    grad = rng.normal(size=(256, 256))
    scores = rng.normal(size=(1000, 5000))
    return {
        "hinge_terms mh 128x128": lambda m: m.hinge_terms(pos, s_cap, s_img, excl, 0.2, MH, 1.0),
        "order_similarity 256x256x256": lambda m: m.order_similarity(f, g),
        "order_similarity_backward 256": lambda m: m.order_similarity_backward(f, g, grad),
        "retrieval_ranks 1000x5000": lambda m: m.retrieval_ranks(scores, 5),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-10, atol=1e-12)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, fn in cases(rng).items():
        if not same(fn(_numpy), fn(_numba)):  # also triggers compilation
            raise SystemExit(f"{name}: backends disagree")
        t_np = min(timeit.repeat(lambda: fn(_numpy), number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: fn(_numba), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:34s} {t_np:10.2f} {t_nb:10.2f} {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
