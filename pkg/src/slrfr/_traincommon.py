"""Seeded initialization/replication and the degenerate-atom policy shared by
the dictionary trainers.

The explicit-atom trainer (lineardict) and the Gram-domain trainers
(kerneldict, jointdict) are intentionally independent implementations of the
same alternation. What they share here is exactly the parts that must behave
identically on both sides for the linear-kernel reduction to hold: the order
in which the RNG is consumed, input coercion, and the policy for replacing
unused or mutually coherent atoms.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError

# perturbation applied to replicated columns when a class has fewer samples
# than atoms
REPLICATION_NOISE_SCALE = 1e-4
# squared-norm threshold below which a column/atom counts as zero
ZERO_NORM_SQ = 1e-24
# absolute normalized inner product above which two atoms count as duplicates
COHERENCE_TOL = 0.99
# relative slack for accepting a freshly recoded column over its carried code
CODE_KEEP_SLACK = 1e-9


def coerce_samples(data, what: str = "sample matrix") -> np.ndarray:
    X = np.ascontiguousarray(data, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise InvalidArgumentError(f"{what} must be a non-empty 2-D array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidArgumentError(f"{what} contains NaN or infinity")
    return X


def coerce_vector(v, dim: int | None = None, what: str = "signal") -> np.ndarray:
    y = np.ascontiguousarray(v, dtype=np.float64)
    if y.ndim != 1:
        raise InvalidArgumentError(f"{what} must be 1-D, got shape {y.shape}")
    if dim is not None and y.shape[0] != dim:
        raise InvalidArgumentError(f"{what} has length {y.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(y)):
        raise InvalidArgumentError(f"{what} contains NaN or infinity")
    return y


def validate_train_sizes(n_atoms: int, sparsity: int, n_iters: int) -> None:
    if not isinstance(n_atoms, (int, np.integer)) or n_atoms < 1:
        raise InvalidArgumentError(f"n_atoms must be a positive integer, got {n_atoms!r}")
    if not isinstance(sparsity, (int, np.integer)) or not (1 <= sparsity <= n_atoms):
        raise InvalidArgumentError(
            f"sparsity must be an integer in [1, {n_atoms}], got {sparsity!r}"
        )
    if not isinstance(n_iters, (int, np.integer)) or n_iters < 1:
        raise InvalidArgumentError(f"n_iters must be a positive integer, got {n_iters!r}")


def replicate_columns(X: np.ndarray, target: int, rng: np.random.Generator) -> np.ndarray:
    """Pad X with randomly chosen replicated columns plus a tiny seeded
    Gaussian perturbation until it has `target` columns."""
    m = X.shape[1]
    extra = target - m
    idx = rng.integers(0, m, size=extra)
    noise = REPLICATION_NOISE_SCALE * rng.standard_normal((X.shape[0], extra))
    return np.concatenate([X, X[:, idx] + noise], axis=1)


def replicate_column_pairs(
    XH: np.ndarray, XL: np.ndarray, target: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Paired variant of replicate_columns: both resolutions replicate the
    same column indices (keeping them aligned) with independent
    perturbations."""
    m = XH.shape[1]
    extra = target - m
    idx = rng.integers(0, m, size=extra)
    noise_h = REPLICATION_NOISE_SCALE * rng.standard_normal((XH.shape[0], extra))
    noise_l = REPLICATION_NOISE_SCALE * rng.standard_normal((XL.shape[0], extra))
    return (
        np.concatenate([XH, XH[:, idx] + noise_h], axis=1),
        np.concatenate([XL, XL[:, idx] + noise_l], axis=1),
    )


def keep_better_codes(
    codes: np.ndarray,
    code_energies: np.ndarray,
    prev_codes: np.ndarray,
    prev_energies: np.ndarray,
) -> np.ndarray:
    """Column-wise safeguard for the coding half-step: greedy pursuit can
    recode a column worse than the code carried from the previous alternation,
    which is the one way the recorded training objective could rise. Columns
    whose fresh energy exceeds the carried one (beyond relative slack) keep
    the carried code. The rule is scale-free so trainers that must mirror each
    other (linear reduction, duplicated or decoupled joint problems) make
    identical keep/accept decisions. Mutates and returns `codes`."""
    worse = np.asarray(code_energies) > np.asarray(prev_energies) * (1.0 + CODE_KEEP_SLACK)
    if np.any(worse):
        codes[:, worse] = prev_codes[:, worse]
    return codes


def init_column_indices(
    col_feature_sqnorms: np.ndarray, n_atoms: int, rng: np.random.Generator
) -> np.ndarray:
    """Pick n_atoms distinct column indices among columns with nonzero
    feature-space norm (squared norms passed in, so linear and kernel callers
    apply the same eligibility rule)."""
    eligible = np.flatnonzero(np.asarray(col_feature_sqnorms) > ZERO_NORM_SQ)
    if eligible.size < n_atoms:
        raise InvalidArgumentError(
            f"only {eligible.size} training columns have nonzero norm, need {n_atoms} for initialization"
        )
    return rng.choice(eligible, size=n_atoms, replace=False)


def plan_atom_replacements(
    usage: np.ndarray,
    atom_feature_sqnorms: np.ndarray,
    abs_normalized_gram: np.ndarray,
    column_residuals_sq: np.ndarray,
    column_feature_sqnorms: np.ndarray,
    coherence_tol: float = COHERENCE_TOL,
) -> list[tuple[int, int, int]]:
    """Decide which atoms to reset and which training columns replace them.

    Marked for replacement: atoms with zero usage or (numerically) zero norm,
    then, scanning in index order, any atom nearly collinear with an earlier
    kept atom. Replacement columns are the worst-represented nonzero columns
    (descending residual, stable ties), one per marked atom, no column used
    twice in one round. Returns (atom_index, column_index, partner_index)
    triples; partner_index is the kept atom that triggered a coherence mark
    (so carried codes can migrate to it) and -1 for dead atoms.
    """
    n_atoms = int(np.asarray(usage).shape[0])
    marked: dict[int, int] = {
        k: -1
        for k in range(n_atoms)
        if usage[k] == 0 or atom_feature_sqnorms[k] <= ZERO_NORM_SQ
    }
    for k in range(n_atoms):
        if k in marked:
            continue
        for j in range(k):
            if j in marked:
                continue
            if abs_normalized_gram[j, k] > coherence_tol:
                marked[k] = j
                break
    if not marked:
        return []
    order = np.argsort(-np.asarray(column_residuals_sq), kind="stable")
    candidates = [int(c) for c in order if column_feature_sqnorms[c] > ZERO_NORM_SQ]
    atoms = sorted(marked)
    if len(candidates) < len(atoms):
        raise InvalidArgumentError(
            "not enough nonzero training columns to replace degenerate atoms"
        )
    return [(k, col, marked[k]) for k, col in zip(atoms, candidates[: len(atoms)])]
