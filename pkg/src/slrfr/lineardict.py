"""Per-class linear sparse dictionaries: OMP coding, K-SVD training, and
minimum-residual classification in signal space.

A gallery yields one Dictionary per class; a probe is classified by
projecting it onto each class dictionary's span and picking the class with
the smallest reconstruction residual.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _traincommon as tc
from .errors import InvalidArgumentError, NumericalError
from .pursuit import SparseCode, gram_pursuit

__all__ = [
    "Dictionary",
    "ResidualReport",
    "omp",
    "ksvd_train",
    "project_residual",
    "classify_linear",
]

logger = logging.getLogger(__name__)

# conditioning threshold beyond which the projection system gets a Tikhonov
# floor of PROJECTION_RIDGE_SCALE * trace(D^T D) / K
COND_LIMIT = 1e12
PROJECTION_RIDGE_SCALE = 1e-8


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Unit-column atom matrix for one class.

    atoms: (dim, n_atoms) float64, every column unit Euclidean norm.
    objective_path: training objective after each alternation, when trained.
    """

    atoms: np.ndarray
    class_label: str = ""
    objective_path: tuple[float, ...] | None = None

    def __post_init__(self):
        atoms = np.ascontiguousarray(self.atoms, dtype=np.float64)
        if atoms.ndim != 2 or atoms.shape[0] < 1 or atoms.shape[1] < 1:
            raise InvalidArgumentError(f"atoms must be a non-empty 2-D array, got shape {atoms.shape}")
        if not np.all(np.isfinite(atoms)):
            raise InvalidArgumentError("atoms contain NaN or infinity")
        norms = np.linalg.norm(atoms, axis=0)
        worst = float(np.abs(norms - 1.0).max())
        if worst > 1e-9:
            raise InvalidArgumentError(
                f"every atom must have unit norm within 1e-9 (worst deviation {worst:.3e})"
            )
        atoms = atoms.copy()
        atoms.flags.writeable = False
        object.__setattr__(self, "atoms", atoms)
        if not isinstance(self.class_label, str):
            raise InvalidArgumentError(f"class_label must be a string, got {self.class_label!r}")

    @property
    def dim(self) -> int:
        return self.atoms.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[1]

    @cached_property
    def gram(self) -> np.ndarray:
        g = self.atoms.T @ self.atoms
        g.flags.writeable = False
        return g


@dataclass(frozen=True, eq=False)
class ResidualReport:
    """Per-class residuals and the argmin decision.

    predicted is labels[predicted_index]; ties (exactly equal residuals) go
    to the lowest class index and set the tied flag. approximations holds the
    per-class reconstructions when the classifier provides them.
    """

    labels: tuple[str, ...]
    residuals: np.ndarray
    predicted: str
    predicted_index: int
    tied: bool = False
    approximations: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        residuals = np.asarray(self.residuals, dtype=np.float64)
        if residuals.ndim != 1 or residuals.shape[0] != len(self.labels) or not self.labels:
            raise InvalidArgumentError("labels and residuals must align and be non-empty")
        if not np.all(np.isfinite(residuals)) or residuals.min() < 0:
            raise InvalidArgumentError("residuals must be finite and nonnegative")
        if not (0 <= self.predicted_index < len(self.labels)):
            raise InvalidArgumentError(f"predicted_index {self.predicted_index} out of range")
        if self.predicted != self.labels[self.predicted_index]:
            raise InvalidArgumentError("predicted label does not match predicted_index")
        if residuals[self.predicted_index] != residuals.min():
            raise InvalidArgumentError("predicted class does not attain the minimum residual")
        residuals = residuals.copy()
        residuals.flags.writeable = False
        object.__setattr__(self, "residuals", residuals)
        object.__setattr__(self, "labels", tuple(self.labels))


def argmin_report(labels, residuals, approximations=None) -> ResidualReport:
    """Build a ResidualReport from per-class residuals: first minimum wins,
    exact duplicates of the winning value flag a tie."""
    residuals = np.asarray(residuals, dtype=np.float64)
    idx = int(np.argmin(residuals))
    tied = bool(np.count_nonzero(residuals == residuals[idx]) > 1)
    return ResidualReport(
        labels=tuple(labels),
        residuals=residuals,
        predicted=labels[idx],
        predicted_index=idx,
        tied=tied,
        approximations=approximations,
    )


def omp(dictionary: Dictionary, signal, sparsity: int, *, with_path: bool = False):
    """Orthogonal matching pursuit against one dictionary.

    Selects up to `sparsity` atoms greedily by absolute residual correlation
    with a least-squares refit each step; stops early on (numerically) zero
    residual or when the residual is orthogonal to every atom. Returns the
    SparseCode, or (SparseCode, PursuitResult) with with_path for access to
    the residual-energy trajectory.
    """
    y = tc.coerce_vector(signal, dictionary.dim)
    if not (1 <= sparsity <= dictionary.n_atoms):
        raise InvalidArgumentError(
            f"sparsity must be in [1, {dictionary.n_atoms}], got {sparsity}"
        )
    result = gram_pursuit(
        dictionary.atoms.T @ y, dictionary.gram, float(y @ y), int(sparsity)
    )
    code = SparseCode.from_pursuit(result, dictionary.n_atoms)
    return (code, result) if with_path else code


def _solve_gamma_system(codes: np.ndarray) -> np.ndarray:
    """(Gamma Gamma^T)^-1 Gamma with a ridge fallback for singular code
    covariance; transpose of the result is the MOD dictionary update."""
    cov = codes @ codes.T
    try:
        return np.linalg.solve(cov, codes)
    except np.linalg.LinAlgError:
        pass
    lam = PROJECTION_RIDGE_SCALE * float(np.trace(cov)) / cov.shape[0]
    logger.debug("code covariance singular; solving with ridge %.3e", lam)
    ridged = cov + lam * np.eye(cov.shape[0])
    try:
        return np.linalg.solve(ridged, codes)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(ridged, codes, rcond=None)[0]


def _code_all_columns(
    atoms: np.ndarray, X: np.ndarray, col_sqnorms: np.ndarray, sparsity: int
) -> tuple[np.ndarray, np.ndarray]:
    """Sparse-code every column of X against the current atoms; returns the
    dense (n_atoms, m) coefficient matrix and each column's final residual
    energy."""
    gram = atoms.T @ atoms
    corr = atoms.T @ X
    codes = np.zeros((atoms.shape[1], X.shape[1]))
    energies = np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        result = gram_pursuit(corr[:, j], gram, float(col_sqnorms[j]), sparsity)
        codes[result.order, j] = result.coeffs
        energies[j] = result.final_energy
    return codes, energies


def ksvd_train(
    data,
    n_atoms: int | None = None,
    sparsity: int = 3,
    n_iters: int = 20,
    seed: int = 0,
    *,
    update: str = "ksvd",
    allow_replication: bool = True,
    class_label: str = "",
) -> Dictionary:
    """Train one class dictionary by alternating OMP coding with a dictionary
    update.

    update="ksvd" (default) refreshes atoms one at a time via the rank-1 SVD
    of the error restricted to the atom's users, refitting those users' codes
    in place. update="mod" recomputes the whole dictionary at once as
    X Gamma^T (Gamma Gamma^T)^-1; this is the explicit-space equivalent of
    the Gram-domain update in kerneldict and exists so the two trainers can
    be checked against each other.

    Greedy recoding can worsen a column, so each column keeps its previous
    (rescaled) code whenever the fresh one has higher residual energy; that is
    what makes the recorded objective non-increasing across alternations.

    n_atoms defaults to the number of training columns. Classes with fewer
    columns than atoms get seeded replicated columns with a 1e-4 perturbation
    (or an error when allow_replication is off). After every update, unused
    atoms and near-duplicate atom pairs are replaced by the worst-represented
    training columns. objective_path on the result records the Frobenius
    objective after each update half-step, before renormalization.
    """
    X = tc.coerce_samples(data, "training data")
    dim, m = X.shape
    if n_atoms is None:
        n_atoms = m
    tc.validate_train_sizes(n_atoms, sparsity, n_iters)
    if update not in ("ksvd", "mod"):
        raise InvalidArgumentError(f"update must be 'ksvd' or 'mod', got {update!r}")
    rng = np.random.default_rng(seed)
    if m < n_atoms:
        if not allow_replication:
            raise InvalidArgumentError(
                f"{m} training columns < {n_atoms} atoms and replication is disabled"
            )
        logger.info(
            "class %r: replicating %d columns up to %d for initialization",
            class_label, m, n_atoms,
        )
        X = tc.replicate_columns(X, n_atoms, rng)
        m = n_atoms
    col_sqnorms = np.einsum("ij,ij->j", X, X)
    init_idx = tc.init_column_indices(col_sqnorms, n_atoms, rng)
    D = X[:, init_idx] / np.sqrt(col_sqnorms[init_idx])

    objective_path = []
    prev_codes = None
    accepted_D = D
    for _ in range(n_iters):
        codes, code_energies = _code_all_columns(D, X, col_sqnorms, sparsity)
        if prev_codes is not None:
            kept = X - D @ prev_codes
            codes = tc.keep_better_codes(
                codes, code_energies, prev_codes, np.einsum("ij,ij->j", kept, kept)
            )
        if update == "ksvd":
            for k in range(n_atoms):
                users = np.flatnonzero(codes[k])
                if users.size == 0:
                    continue  # replaced below
                err = (
                    X[:, users]
                    - D @ codes[:, users]
                    + np.outer(D[:, k], codes[k, users])
                )
                try:
                    u, svals, vt = np.linalg.svd(err, full_matrices=False)
                except np.linalg.LinAlgError as exc:
                    raise NumericalError(f"atom update SVD failed: {exc}") from exc
                D[:, k] = u[:, 0]
                codes[k, users] = svals[0] * vt[0]
        else:
            D = X @ _solve_gamma_system(codes).T
        resid = X - D @ codes
        objective = float(np.einsum("ij,ij->", resid, resid))
        if objective_path and objective > objective_path[-1] * (1.0 + tc.CODE_KEEP_SLACK):
            # a degenerate-atom reset can perturb the carried codes past what
            # the keep-better safeguard reaches; reject the alternation and
            # hold the last accepted state so the recorded path stays monotone
            logger.debug(
                "class %r: alternation rejected (%.6g > %.6g), training stopped",
                class_label, objective, objective_path[-1],
            )
            objective_path.extend([objective_path[-1]] * (n_iters - len(objective_path)))
            D = accepted_D
            break
        objective_path.append(objective)

        # degenerate-atom hygiene, then renormalization
        usage = np.count_nonzero(codes, axis=1)
        atom_sqnorms = np.einsum("ij,ij->j", D, D)
        col_res_sq = np.einsum("ij,ij->j", resid, resid)
        scales = np.sqrt(np.maximum(atom_sqnorms, tc.ZERO_NORM_SQ))
        normalized = D / scales
        signed_gram = normalized.T @ normalized
        plan = tc.plan_atom_replacements(
            usage, atom_sqnorms, np.abs(signed_gram), col_res_sq, col_sqnorms
        )
        D = normalized
        # carried codes absorb the normalization so D @ codes is unchanged; a
        # replaced coherent atom's carry migrates to its near-parallel partner
        # while a dead atom's carry is dropped
        prev_codes = codes * scales[:, None]
        for atom_k, col, partner in plan:
            D[:, atom_k] = X[:, col] / np.sqrt(col_sqnorms[col])
            if partner >= 0:
                sign = 1.0 if signed_gram[partner, atom_k] >= 0.0 else -1.0
                prev_codes[partner, :] += sign * prev_codes[atom_k, :]
            prev_codes[atom_k, :] = 0.0
        if plan:
            logger.debug("class %r: replaced %d degenerate atoms", class_label, len(plan))
        # snapshot by copy: the next ksvd update writes atoms in place
        accepted_D = D.copy()

    return Dictionary(D, class_label, tuple(objective_path))


def project_residual(dictionary: Dictionary, signal) -> tuple[np.ndarray, float, np.ndarray]:
    """Orthogonal projection of the signal onto the dictionary's span.

    Returns (approximation, residual norm, dense coefficients). The normal
    equations get a Tikhonov floor when their condition number exceeds
    COND_LIMIT; rank deficiency never raises.
    """
    y = tc.coerce_vector(signal, dictionary.dim)
    gram = dictionary.gram
    rhs = dictionary.atoms.T @ y
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        lam = PROJECTION_RIDGE_SCALE * float(np.trace(gram)) / dictionary.n_atoms
        logger.debug(
            "projection system condition %.3e beyond %.0e; adding ridge %.3e",
            cond, COND_LIMIT, lam,
        )
        coeffs = np.linalg.solve(gram + lam * np.eye(dictionary.n_atoms), rhs)
    else:
        coeffs = np.linalg.solve(gram, rhs)
    approx = dictionary.atoms @ coeffs
    residual = float(np.linalg.norm(y - approx))
    return approx, residual, coeffs


def classify_linear(dictionaries, signal) -> ResidualReport:
    """Minimum projection residual over per-class dictionaries. Ties break to
    the lowest class index and are flagged."""
    dictionaries = list(dictionaries)
    if not dictionaries:
        raise InvalidArgumentError("need at least one class dictionary")
    dim = dictionaries[0].dim
    for i, d in enumerate(dictionaries):
        if d.dim != dim:
            raise InvalidArgumentError(
                f"dictionary {i} has dim {d.dim}, expected {dim} like dictionary 0"
            )
    y = tc.coerce_vector(signal, dim)
    residuals = np.empty(len(dictionaries))
    approximations = []
    for i, d in enumerate(dictionaries):
        approx, res, _ = project_residual(d, y)
        residuals[i] = res
        approximations.append(approx)
    return argmin_report(
        tuple(d.class_label for d in dictionaries), residuals, tuple(approximations)
    )
