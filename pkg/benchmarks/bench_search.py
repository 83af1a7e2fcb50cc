"""Compare the numba and numpy row-scoring kernels behind the flat index.

    python3 benchmarks/bench_search.py --rows 500 5000 50000 --queries 200
"""

import argparse
import time

import numpy as np

from ananke.vindex import _kernels

METRICS = {"cosine": _kernels.COSINE, "ip": _kernels.INNER_PRODUCT, "euclid": _kernels.EUCLIDEAN}


def time_path(matrix, norms, queries, metric, use_numba):
    _kernels.score_rows(matrix, norms, queries[0], metric, use_numba=use_numba)  # warm-up / JIT
    t0 = time.perf_counter()
    for q in queries:
        _kernels.score_rows(matrix, norms, q, metric, use_numba=use_numba)
    return (time.perf_counter() - t0) / len(queries)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, nargs="+", default=[500, 5000, 50000])
    ap.add_argument("--dim", type=int, default=256)
    ap.add_argument("--queries", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    paths = [False] + ([True] if _kernels.HAVE_NUMBA else [])
    print(f"{'rows':>7} {'metric':>7} " + " ".join(f"{_kernels.backend_name(p):>12}" for p in paths)
          + ("  speedup" if len(paths) == 2 else ""))
    for n in args.rows:
        matrix = rng.normal(size=(n, args.dim))
        norms = _kernels.row_norms(matrix, use_numba=False)
        queries = rng.normal(size=(args.queries, args.dim))
        for name, metric in METRICS.items():
            per_query = [time_path(matrix, norms, queries, metric, p) for p in paths]
            cells = " ".join(f"{1e6 * t:10.1f}us" for t in per_query)
            extra = f"  {per_query[0] / per_query[1]:6.2f}x" if len(paths) == 2 else ""
            print(f"{n:>7} {name:>7} {cells}{extra}")
            a = _kernels.score_rows(matrix, norms, queries[0], metric, use_numba=paths[0])
            b = _kernels.score_rows(matrix, norms, queries[0], metric, use_numba=paths[-1])
            assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


if __name__ == "__main__":
    main()
