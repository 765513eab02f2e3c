"""Compare the compiled skip-gram kernel against the pure-Python fallback.

    python benchmarks/bench_sgns.py [--sentences N] [--epochs E] [--dim D]
"""

import argparse

from dialectid.bench import run_benchmark

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--sentences", type=int, default=400)
    ap.add_argument("--epochs", type=int, default=1)
    ap.add_argument("--dim", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    run_benchmark(a.sentences, a.epochs, a.dim, a.seed)
