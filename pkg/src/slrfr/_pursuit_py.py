"""Pure NumPy implementation of the Gram-domain greedy pursuit loop.

This is the reference twin of the compiled module _pursuit_cy. The two must
stay in lockstep operation for operation: same selection rule, same solver
ladder, same stop conditions. test_pursuit asserts parity on random
instances; change both together or neither.

The loop works entirely in Gram coordinates, so callers can drive it with
either explicit atoms (g0 = D^T y, G = D^T D, e0 = ||y||^2) or kernel
evaluations (g0 = K(z,X)A, G = A^T K A, e0 = K(z,z)).
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import NumericalError


def _refit(S, b, ridge_scale):
    """Solve S gamma = b for symmetric positive definite S, with a ridge
    ladder for the degenerate case: plain Cholesky, then Cholesky with
    lambda = ridge_scale*trace(S)/k added to the diagonal, then a general LU
    solve. Returns (gamma, used_ridge)."""
    try:
        factor = cho_factor(S, lower=True, check_finite=False)
        return cho_solve(factor, b, check_finite=False), False
    except np.linalg.LinAlgError:
        pass
    lam = ridge_scale * float(np.trace(S)) / S.shape[0]
    ridged = S + lam * np.eye(S.shape[0])
    try:
        factor = cho_factor(ridged, lower=True, check_finite=False)
        return cho_solve(factor, b, check_finite=False), True
    except np.linalg.LinAlgError:
        pass
    try:
        return np.linalg.solve(ridged, b), True
    except np.linalg.LinAlgError:
        raise NumericalError("pursuit refit system singular beyond ridge repair") from None


def gram_pursuit_impl(g0, G, e0, max_atoms, energy_tol, ridge_scale):
    """Greedy pursuit over Gram coordinates.

    Per step: residual correlations c = g0 - G[:, selected] @ gamma with
    already-selected entries zeroed, pick argmax |c| (first index on ties),
    stop if the maximum is exactly zero, refit gamma on the grown support,
    then update the residual energy e0 - 2 gamma.b + gamma.S.gamma (floored
    at 0). Stops early when the energy drops below energy_tol.

    Returns (order, coeffs, energies, ridged): atoms in selection order, the
    final coefficients aligned with them, the energy path of length
    len(order)+1 starting at e0, and whether any refit needed the ridge.
    """
    order: list[int] = []
    gamma = np.empty(0, dtype=np.float64)
    energies = [float(e0)]
    ridged = False
    energy = float(e0)
    for _ in range(max_atoms):
        if energy < energy_tol:
            break
        if order:
            corr = g0 - G[:, order] @ gamma
            corr[order] = 0.0
        else:
            corr = g0.copy()
        j = int(np.argmax(np.abs(corr)))
        if abs(corr[j]) == 0.0:
            break
        order.append(j)
        S = G[np.ix_(order, order)]
        b = g0[order]
        gamma, used_ridge = _refit(S, b, ridge_scale)
        ridged = ridged or used_ridge
        energy = float(e0 - 2.0 * (gamma @ b) + gamma @ S @ gamma)
        energy = max(energy, 0.0)
        energies.append(energy)
    return (
        np.asarray(order, dtype=np.int64),
        np.asarray(gamma, dtype=np.float64).copy(),
        np.asarray(energies, dtype=np.float64),
        ridged,
    )
