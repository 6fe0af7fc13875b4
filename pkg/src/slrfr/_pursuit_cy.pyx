# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled twin of _pursuit_py: the Gram-domain greedy pursuit inner loop.

Semantics must stay in lockstep with _pursuit_py.gram_pursuit_impl; the test
suite asserts parity between the two on random instances. The solver ladder
is the same: dposv, dposv with a trace-scaled ridge, then dgesv.
"""

import numpy as np

from libc.math cimport fabs

from scipy.linalg.cython_blas cimport daxpy, dcopy, ddot
from scipy.linalg.cython_lapack cimport dgesv, dposv

from .errors import NumericalError


def gram_pursuit_impl(double[::1] g0, double[:, ::1] G, double e0,
                      int max_atoms, double energy_tol, double ridge_scale):
    """See _pursuit_py.gram_pursuit_impl for the contract."""
    cdef int n_atoms = g0.shape[0]
    cdef int cap = max_atoms

    order_np = np.empty(cap, dtype=np.int64)
    gamma_np = np.empty(cap, dtype=np.float64)
    b_np = np.empty(cap, dtype=np.float64)
    energies_np = np.empty(cap + 1, dtype=np.float64)
    corr_np = np.empty(n_atoms, dtype=np.float64)
    s_np = np.empty((cap, cap), dtype=np.float64)
    fact_np = np.empty((cap, cap), dtype=np.float64)
    ipiv_np = np.empty(cap, dtype=np.int32)

    cdef long long[::1] order = order_np
    cdef double[::1] gamma = gamma_np
    cdef double[::1] bvec = b_np
    cdef double[::1] energies = energies_np
    cdef double[::1] corr = corr_np
    cdef double[:, ::1] smat = s_np
    cdef double[:, ::1] fact = fact_np
    cdef int[::1] ipiv = ipiv_np

    cdef bint ridged = 0
    cdef double energy = e0
    cdef int k = 0
    cdef int i, t, a, c
    cdef int bestj
    cdef double best, av, alpha, lam, trace, lin, quad
    cdef int one = 1
    cdef int n, info
    cdef int nrhs = 1
    cdef int lda = cap
    cdef char uplo = b'L'

    energies[0] = e0

    while k < cap:
        if energy < energy_tol:
            break

        # residual correlations: g0 - G[:, order[:k]] @ gamma, selected zeroed
        dcopy(&n_atoms, &g0[0], &one, &corr[0], &one)
        for t in range(k):
            alpha = -gamma[t]
            # column order[t] of row-major G is a stride-n_atoms vector
            daxpy(&n_atoms, &alpha, &G[0, order[t]], &n_atoms, &corr[0], &one)
        for t in range(k):
            corr[order[t]] = 0.0

        bestj = 0
        best = -1.0
        for i in range(n_atoms):
            av = fabs(corr[i])
            if av > best:
                best = av
                bestj = i
        if best == 0.0:
            break

        order[k] = bestj
        k += 1
        n = k

        # assemble the support Gram block and right-hand side
        for a in range(n):
            bvec[a] = g0[order[a]]
            for c in range(n):
                smat[a, c] = G[order[a], order[c]]

        # dposv on a copy; smat is symmetric so the row/column-major views agree
        for a in range(n):
            for c in range(n):
                fact[a, c] = smat[a, c]
            gamma[a] = bvec[a]
        dposv(&uplo, &n, &nrhs, &fact[0, 0], &lda, &gamma[0], &n, &info)
        if info != 0:
            ridged = 1
            trace = 0.0
            for a in range(n):
                trace += smat[a, a]
            lam = ridge_scale * trace / n
            for a in range(n):
                for c in range(n):
                    fact[a, c] = smat[a, c]
                fact[a, a] += lam
                gamma[a] = bvec[a]
            dposv(&uplo, &n, &nrhs, &fact[0, 0], &lda, &gamma[0], &n, &info)
            if info != 0:
                for a in range(n):
                    for c in range(n):
                        fact[a, c] = smat[a, c]
                    fact[a, a] += lam
                    gamma[a] = bvec[a]
                dgesv(&n, &nrhs, &fact[0, 0], &lda, &ipiv[0], &gamma[0], &n, &info)
                if info != 0:
                    raise NumericalError(
                        "pursuit refit system singular beyond ridge repair")

        lin = ddot(&n, &gamma[0], &one, &bvec[0], &one)
        quad = 0.0
        for a in range(n):
            av = 0.0
            for c in range(n):
                av += smat[a, c] * gamma[c]
            quad += gamma[a] * av
        energy = e0 - 2.0 * lin + quad
        if energy < 0.0:
            energy = 0.0
        energies[k] = energy

    return (
        order_np[:k].copy(),
        gamma_np[:k].copy(),
        energies_np[:k + 1].copy(),
        bool(ridged),
    )
