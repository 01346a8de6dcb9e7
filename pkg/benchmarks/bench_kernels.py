"""Time the compiled kernels against the numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat N]

Sizes follow a long untrimmed video: T=750 segments, K=50 neighbours.
"""

import argparse
import timeit

import numpy as np

from acgnet import kernels
from acgnet.graph import build_similarity_graph, build_temporal_graph, combine_graphs


def cases(rng):
    t, d = 750, 64
    f = rng.standard_normal((t, d))
    f[:, :4] += 3.0  # shared direction so many pairs clear the threshold
    comb = combine_graphs(build_similarity_graph(f), build_temporal_graph(t, 10), 1.0)
    sparse = kernels.BACKENDS["python"].sparsify_rows(comb, 0.5, 50)
    enhanced = f + 0.1 * rng.standard_normal((t, d))
    weights = rng.random(t)
    ious = np.round(rng.random((2000, 300)), 2)
    return {
        "sparsify_rows (750x750, K=50)": ("sparsify_rows", (comb, 0.5, 50)),
        "epm_term (T=750, D=64)": ("epm_term", (enhanced, f, sparse, weights)),
        "greedy_match (2000x300)": ("greedy_match", (ious, 0.5)),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    names = sorted(kernels.BACKENDS)
    print(f"backends: {', '.join(names)} (active: {kernels.BACKEND})")
    print(f"{'kernel':32s}" + "".join(f"{n:>12s}" for n in names) + "     speedup")
    for label, (fn, fargs) in cases(rng).items():
        best = {}
        for n in names:
            impl = getattr(kernels.BACKENDS[n], fn)
            best[n] = min(timeit.repeat(lambda: impl(*fargs), number=1, repeat=args.repeat))
        speed = f"{best['python'] / best['cython']:8.1f}x" if "cython" in best else "       -"
        print(f"{label:32s}" + "".join(f"{best[n] * 1e3:10.2f}ms" for n in names) + speed)


if __name__ == "__main__":
    main()
