"""Benchmark the compiled kernel backend against the numpy fallback.

Times the individual kernels across sizes plus a composite embedding-net
forward/backward workload, and prints the speedup of the compiled extension.

    python3 benchmarks/bench_kernels.py [--repeats 30]
"""

import argparse
import time

import numpy as np

from xmodal.kernels import _numpy_backend

try:
    from xmodal.kernels import _fast
except ImportError:
    _fast = None


def timeit(fn, repeats):
    fn()  # warm up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_cases(rng):
    cases = []
    for n, k, m in [(64, 48, 256), (256, 228, 256), (512, 1664, 256)]:
        x = rng.standard_normal((n, k))
        w = rng.standard_normal((k, m))
        b = rng.standard_normal(m)
        g = rng.standard_normal((n, m))
        cases.append((f"affine_forward {n}x{k}->{m}",
                      lambda impl, x=x, w=w, b=b: impl.affine_forward(x, w, b)))
        cases.append((f"affine_backward {n}x{k}->{m}",
                      lambda impl, x=x, w=w, g=g: impl.affine_backward(x, w, g)))
    for n, m in [(300, 300), (1000, 500)]:
        a = rng.standard_normal((n, 64)) + 0.1
        c = rng.standard_normal((m, 64)) + 0.1
        cases.append((f"pairwise_cosine {n}x{m}",
                      lambda impl, a=a, c=c: impl.pairwise_cosine(a, c)))
    z = rng.standard_normal((512, 256))
    gz = rng.standard_normal((512, 256))
    cases.append(("relu fwd+bwd 512x256",
                  lambda impl, z=z, gz=gz: impl.relu_backward(gz, impl.relu_forward(z))))
    x = rng.standard_normal((512, 256))
    gx = rng.standard_normal((512, 256))

    def norm_roundtrip(impl, x=x, gx=gx):
        y, norms, skipped = impl.l2norm_rows(x)
        impl.l2norm_rows_backward(gx, y, norms, skipped)

    cases.append(("l2norm fwd+bwd 512x256", norm_roundtrip))
    acc = np.zeros((300, 256))
    idx = rng.integers(0, 300, size=2048).astype(np.int64)
    rows = rng.standard_normal((2048, 256))
    cases.append(("add_rows 2048->300x256",
                  lambda impl, acc=acc, idx=idx, rows=rows: impl.add_rows(acc, idx, rows)))
    dp = rng.random(4096)
    dn = rng.random(4096)
    cases.append(("hinge 4096",
                  lambda impl, dp=dp, dn=dn: impl.hinge_forward(dp, dn, 0.1)))
    return cases


def composite_case(rng):
    """Forward + backward through a 48 -> 228 -> 256 net over 360 rows."""
    x = rng.standard_normal((360, 48))
    w1 = rng.standard_normal((48, 228)) * 0.1
    b1 = np.zeros(228)
    w2 = rng.standard_normal((228, 256)) * 0.1
    b2 = np.zeros(256)
    g = rng.standard_normal((360, 256))

    def run(impl):
        a1 = impl.relu_forward(impl.affine_forward(x, w1, b1))
        z2 = impl.affine_forward(a1, w2, b2)
        y, norms, skipped = impl.l2norm_rows(z2)
        gz2 = impl.l2norm_rows_backward(g, y, norms, skipped)
        ga1, gw2, gb2 = impl.affine_backward(a1, w2, gz2)
        gz1 = impl.relu_backward(ga1, a1)
        impl.affine_backward(x, w1, gz1)

    return "embedding net fwd+bwd 360x(48-228-256)", run


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=30)
    args = parser.parse_args()
    if _fast is None:
        print("compiled backend not built (pip install -e . with Cython); nothing to compare")
        return
    rng = np.random.default_rng(0)
    cases = kernel_cases(rng)
    cases.append(composite_case(rng))
    print(f"{'case':<42} {'numpy':>10} {'fast':>10} {'speedup':>8}")
    print("-" * 74)
    for name, fn in cases:
        t_py = timeit(lambda: fn(_numpy_backend), args.repeats)
        t_fast = timeit(lambda: fn(_fast), args.repeats)
        print(f"{name:<42} {t_py * 1e6:>8.0f}us {t_fast * 1e6:>8.0f}us "
              f"{t_py / t_fast:>7.2f}x")


if __name__ == "__main__":
    main()
