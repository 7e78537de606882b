"""Compare the compiled kernels with the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each row reports the best of N timings and checks both backends agree.
"""
import argparse
import timeit

import numpy as np

from redactbench.kernels import available_backends


def cases():
    plane = np.random.default_rng(0).random((128, 128))
    for w in (5, 15, 35):
        yield f"median {w}x{w} on 128x128", lambda impl, w=w: impl.median_filter(plane, w)
    for n in (16_384, 1_048_576):
        yield f"pcg32 {n} bits", lambda impl, n=n: impl.pcg32_bits(42, 54, n)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = available_backends()
    if "cython" not in backends:
        print("compiled kernels are not built; only the fallback is available")
    names = sorted(backends)
    print(f"{'case':<26}" + "".join(f"{n:>12}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, fn in cases():
        outputs, best = {}, {}
        for name in names:
            impl = backends[name]
            outputs[name] = fn(impl)
            best[name] = min(timeit.repeat(lambda: fn(impl), number=1, repeat=args.repeat))
        ref = outputs[names[0]]
        assert all(np.array_equal(ref, out) for out in outputs.values()), f"backends disagree on {label}"
        row = f"{label:<26}" + "".join(f"{best[n] * 1e3:>10.2f}ms" for n in names)
        if len(names) > 1:
            row += f"{best['python'] / best['cython']:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
