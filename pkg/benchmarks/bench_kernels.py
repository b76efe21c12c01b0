"""Compare the compiled and pure-numpy path kernels on Markov chain path spaces.

Usage: python3 benchmarks/bench_kernels.py [--m 8] [--L 8] [--repeat 5]

Prints the best wall time of each kernel under both backends and checks that
the outputs are bit-identical, then times a small sweep end to end with the
backend chosen by the DECODING_LAB_NUMBA environment flag.
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from decoding_lab import _kernels
from decoding_lab.distributions import sample_dirichlet_chain


def best_time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--m", type=int, default=8)
    parser.add_argument("--L", type=int, default=8)
    parser.add_argument("--N", type=int, default=2)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    chain = sample_dirichlet_chain(np.random.default_rng(0), args.m, 0.5, args.L)
    P = np.ascontiguousarray(chain.transitions)
    start = np.ascontiguousarray(chain.initial)
    tables = np.stack([chain.gram_table(t, args.N) for t in range(args.L - args.N + 1)])

    cases = {
        "continuation_scores": (lambda: _kernels.np_continuation_scores(start, P, args.L),
                                lambda: _kernels.nb_continuation_scores(start, P, args.L)),
        "ngram_scores": (lambda: _kernels.np_ngram_scores(tables, args.m, args.L, args.N),
                         lambda: _kernels.nb_ngram_scores(tables, args.m, args.L, args.N)),
    }
    g = _kernels.np_ngram_scores(tables, args.m, args.L, args.N)
    cases["max_ngram_score"] = (lambda: _kernels.np_max_ngram_score(tables, args.m, args.L, args.N),
                                lambda: _kernels.nb_max_ngram_score(tables, args.m, args.L, args.N))
    cases["round_scores"] = (lambda: _kernels.np_round_scores(g, 15),
                             lambda: _kernels.nb_round_scores(g, 15))
    cases["first_within"] = (lambda: _kernels.np_first_within(g, 1e-12),
                             lambda: _kernels.nb_first_within(g, 1e-12))

    print(f"m={args.m} L={args.L} N={args.N} paths={args.m ** args.L}")
    print(f"{'kernel':<22}{'numpy s':>12}{'numba s':>12}{'speedup':>10}  identical")
    for name, (np_fn, nb_fn) in cases.items():
        nb_fn()  # compile outside the timed region
        t_np, out_np = best_time(np_fn, args.repeat)
        t_nb, out_nb = best_time(nb_fn, args.repeat)
        same = np.array_equal(np.asarray(out_np), np.asarray(out_nb))
        print(f"{name:<22}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.2f}  {same}")
    sweep_comparison()


SWEEP_SNIPPET = """
import hashlib, time
from decoding_lab import _kernels
from decoding_lab.experiments.sweep import SweepConfig, run_sweep
run_sweep(SweepConfig(trials=1, node_counts=(2,), lengths=(2,)))
t0 = time.perf_counter()
csv = run_sweep(SweepConfig.ci_scale()).to_csv()
print(_kernels.backend(), time.perf_counter() - t0, hashlib.sha256(csv.encode()).hexdigest())
"""


def sweep_comparison():
    results = {}
    for flag in ("0", "1"):
        env = dict(os.environ, DECODING_LAB_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", SWEEP_SNIPPET], env=env, check=True,
                             capture_output=True, text=True).stdout.split()
        results[out[0]] = (float(out[1]), out[2])
    (t_np, h_np), (t_nb, h_nb) = results["numpy"], results["numba"]
    print(f"{'ci-scale sweep':<22}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.2f}  {h_np == h_nb}")


if __name__ == "__main__":
    main()
