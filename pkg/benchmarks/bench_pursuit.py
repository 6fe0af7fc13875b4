"""Benchmark the compiled sparse-pursuit core against the pure-Python twin.

Runs the shared Gram-domain pursuit on random well-conditioned problems at
several (n_atoms, max_atoms) sizes, checks both backends agree, and prints
a timing table with the speedup. Usage: python3 benchmarks/bench_pursuit.py
"""

import time

import numpy as np

from slrfr._pursuit_cy import gram_pursuit_impl as compiled
from slrfr._pursuit_py import gram_pursuit_impl as pure

SIZES = [(32, 3), (64, 5), (128, 8), (256, 10), (512, 16)]
REPEATS = 200
TOL = 1e-9


def make_problem(rng, n_atoms, dim_factor=2):
    dim = dim_factor * n_atoms
    D = rng.standard_normal((dim, n_atoms))
    D /= np.linalg.norm(D, axis=0)
    y = rng.standard_normal(dim)
    return D.T @ y, D.T @ D, float(y @ y)


def run(backend, problems, max_atoms):
    start = time.perf_counter()
    out = [backend(g0, G, e0, max_atoms, 1e-12, 1e-8) for g0, G, e0 in problems]
    return time.perf_counter() - start, out


def main():
    rng = np.random.default_rng(0)
    print(f"{'atoms':>6} {'select':>6} {'python':>10} {'compiled':>10} {'speedup':>8}")
    for n_atoms, max_atoms in SIZES:
        problems = [make_problem(rng, n_atoms) for _ in range(REPEATS)]
        t_py, out_py = run(pure, problems, max_atoms)
        t_cy, out_cy = run(compiled, problems, max_atoms)
        for (o1, c1, e1, _), (o2, c2, e2, _) in zip(out_py, out_cy):
            assert np.array_equal(o1, o2), "support mismatch between backends"
            assert np.allclose(c1, c2, atol=TOL), "coefficient mismatch"
            assert np.allclose(e1, e2, atol=TOL), "energy-path mismatch"
        per_py = t_py / REPEATS * 1e6
        per_cy = t_cy / REPEATS * 1e6
        print(f"{n_atoms:>6} {max_atoms:>6} {per_py:>9.1f}u {per_cy:>9.1f}u {t_py / t_cy:>7.2f}x")
    print("backends agree on all problems")


if __name__ == "__main__":
    main()
