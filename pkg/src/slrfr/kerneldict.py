"""Kernel sparse dictionaries trained and evaluated purely through Gram
matrices.

Atoms live in the kernel feature space as combinations phi(X) @ A of the
training samples; nothing ever materializes phi. Coding (KOMP), training
(alternating KOMP with the code-pseudoinverse update), residuals, and
classification all consume kernel evaluations only, so swapping the kernel
changes the geometry without touching the algorithms.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist, pdist

from . import _traincommon as tc
from .errors import InvalidArgumentError
from .lineardict import ResidualReport, argmin_report
from .pursuit import SparseCode, gram_pursuit

__all__ = [
    "KernelSpec",
    "KernelDictionary",
    "gram",
    "komp",
    "kernel_ksvd_train",
    "kernel_residual",
    "classify_kernel",
    "median_squared_distance",
    "select_gaussian_width",
]

logger = logging.getLogger(__name__)

KERNEL_KINDS = ("linear", "polynomial", "gaussian")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and parameters.

    linear: <x, z>. polynomial: (<x, z> + c)^degree. gaussian:
    exp(-||x - z||^2 / c). Unused parameters are normalized to fixed values
    so equality between specs is semantic.
    """

    kind: str
    c: float = 1.0
    degree: int = 2

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise InvalidArgumentError(
                f"kernel kind must be one of {KERNEL_KINDS}, got {self.kind!r}"
            )
        c = float(self.c)
        degree = int(self.degree)
        if self.kind == "linear":
            c, degree = 0.0, 1
        elif self.kind == "gaussian":
            degree = 1
            if not (c > 0 and np.isfinite(c)):
                raise InvalidArgumentError(f"gaussian kernel needs c > 0, got {self.c!r}")
        else:
            if degree < 1:
                raise InvalidArgumentError(f"polynomial degree must be >= 1, got {self.degree!r}")
            if not np.isfinite(c):
                raise InvalidArgumentError(f"polynomial offset must be finite, got {self.c!r}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "degree", degree)


def gram(X, Z, kernel: KernelSpec) -> np.ndarray:
    """Kernel evaluations between column samples: entry (i, j) is
    kernel(X[:, i], Z[:, j])."""
    X = tc.coerce_samples(X, "left sample matrix")
    Z = tc.coerce_samples(Z, "right sample matrix")
    if X.shape[0] != Z.shape[0]:
        raise InvalidArgumentError(
            f"sample dims differ: {X.shape[0]} vs {Z.shape[0]}"
        )
    if kernel.kind == "linear":
        return X.T @ Z
    if kernel.kind == "polynomial":
        return (X.T @ Z + kernel.c) ** kernel.degree
    return np.exp(-cdist(X.T, Z.T, "sqeuclidean") / kernel.c)


def _gram_vector(X: np.ndarray, z: np.ndarray, kernel: KernelSpec) -> np.ndarray:
    """kernel(x_i, z) for every column x_i; z as a flat vector."""
    return gram(X, z[:, None], kernel)[:, 0]


def _self_value(z: np.ndarray, kernel: KernelSpec) -> float:
    if kernel.kind == "linear":
        return float(z @ z)
    if kernel.kind == "polynomial":
        return float((z @ z + kernel.c) ** kernel.degree)
    return 1.0


@dataclass(frozen=True, eq=False)
class KernelDictionary:
    """One class's feature-space dictionary phi(base_samples) @ coefficients.

    base_samples: (dim, m) training columns the atoms combine.
    coefficients: (m, n_atoms), each atom unit-norm under the kernel.
    self_gram / atom_gram: cached kernel(X, X) and A^T kernel(X, X) A.
    """

    base_samples: np.ndarray
    coefficients: np.ndarray
    kernel: KernelSpec
    class_label: str = ""
    objective_path: tuple[float, ...] | None = None
    self_gram: np.ndarray = field(init=False, repr=False)
    atom_gram: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        X = tc.coerce_samples(self.base_samples, "base samples")
        A = tc.coerce_samples(self.coefficients, "coefficients")
        if A.shape[0] != X.shape[1]:
            raise InvalidArgumentError(
                f"coefficients have {A.shape[0]} rows, expected one per sample column ({X.shape[1]})"
            )
        if not isinstance(self.class_label, str):
            raise InvalidArgumentError(f"class_label must be a string, got {self.class_label!r}")
        K = gram(X, X, self.kernel)
        if np.abs(K - K.T).max() > 1e-10:
            raise InvalidArgumentError("self-Gram is not symmetric within 1e-10")
        atom_gram = A.T @ K @ A
        norms = np.diag(atom_gram)
        worst = float(np.abs(norms - 1.0).max())
        if worst > 1e-8:
            raise InvalidArgumentError(
                f"atoms must be unit norm in feature space within 1e-8 (worst deviation {worst:.3e})"
            )
        X = X.copy()
        X.flags.writeable = False
        A = A.copy()
        A.flags.writeable = False
        K.flags.writeable = False
        atom_gram.flags.writeable = False
        object.__setattr__(self, "base_samples", X)
        object.__setattr__(self, "coefficients", A)
        object.__setattr__(self, "self_gram", K)
        object.__setattr__(self, "atom_gram", atom_gram)

    @property
    def dim(self) -> int:
        return self.base_samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.base_samples.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.coefficients.shape[1]


def komp(kdict: KernelDictionary, signal, sparsity: int, *, with_path: bool = False):
    """Kernel OMP: greedy atom selection by feature-space residual
    correlation with a Gram-domain least-squares refit each step. Runs
    exactly `sparsity` steps unless the residual energy falls below 1e-12 or
    the residual is orthogonal to every atom. Degenerate refits are solved
    with a ridge and flagged on the returned path."""
    z = tc.coerce_vector(signal, kdict.dim)
    if not (1 <= sparsity <= kdict.n_atoms):
        raise InvalidArgumentError(f"sparsity must be in [1, {kdict.n_atoms}], got {sparsity}")
    kz = _gram_vector(kdict.base_samples, z, kdict.kernel)
    result = gram_pursuit(
        kz @ kdict.coefficients,
        kdict.atom_gram,
        _self_value(z, kdict.kernel),
        int(sparsity),
    )
    if result.ridged:
        logger.debug("komp refit needed the ridge (class %r)", kdict.class_label)
    code = SparseCode.from_pursuit(result, kdict.n_atoms)
    return (code, result) if with_path else code


def kernel_residual(kdict: KernelDictionary, signal, code: SparseCode) -> float:
    """Squared feature-space distance between phi(z) and the coded
    reconstruction, computed from kernel values only and floored at 0."""
    z = tc.coerce_vector(signal, kdict.dim)
    if code.length != kdict.n_atoms:
        raise InvalidArgumentError(
            f"code length {code.length} does not match dictionary atoms {kdict.n_atoms}"
        )
    kz = _gram_vector(kdict.base_samples, z, kdict.kernel)
    # reconstruction weights on the base samples: A gamma
    w = kdict.coefficients[:, code.support] @ code.values
    value = _self_value(z, kdict.kernel) - 2.0 * (kz @ w) + w @ kdict.self_gram @ w
    return max(float(value), 0.0)


def _solve_gamma_system(codes: np.ndarray) -> np.ndarray:
    """(Gamma Gamma^T)^-1 Gamma with the shared ridge fallback; transposed it
    is the Gram-domain dictionary update."""
    cov = codes @ codes.T
    try:
        return np.linalg.solve(cov, codes)
    except np.linalg.LinAlgError:
        pass
    lam = 1e-8 * float(np.trace(cov)) / cov.shape[0]
    logger.debug("code covariance singular; solving with ridge %.3e", lam)
    ridged = cov + lam * np.eye(cov.shape[0])
    try:
        return np.linalg.solve(ridged, codes)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(ridged, codes, rcond=None)[0]


def kernel_ksvd_train(
    data,
    n_atoms: int | None = None,
    sparsity: int = 3,
    n_iters: int = 20,
    kernel: KernelSpec = KernelSpec("linear"),
    seed: int = 0,
    *,
    allow_replication: bool = True,
    class_label: str = "",
) -> KernelDictionary:
    """Train one class's kernel dictionary.

    Alternates KOMP coding of every training column with the whole-dictionary
    update A = Gamma^T (Gamma Gamma^T)^-1 followed by feature-space atom
    normalization. Initialization picks n_atoms distinct training columns
    (seeded) as selector atoms; the keep-previous-code safeguard, replication,
    degenerate-atom replacement, and objective bookkeeping mirror ksvd_train
    so the linear-kernel run of this trainer matches ksvd_train(update="mod")
    on the same data and seed.
    objective_path records tr((I - A Gamma)^T K (I - A Gamma)) after each
    update half-step, before renormalization.
    """
    X = tc.coerce_samples(data, "training data")
    m = X.shape[1]
    if n_atoms is None:
        n_atoms = m
    tc.validate_train_sizes(n_atoms, sparsity, n_iters)
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
    KXX = gram(X, X, kernel)
    diag = np.diag(KXX).copy()
    init_idx = tc.init_column_indices(diag, n_atoms, rng)
    A = np.zeros((m, n_atoms))
    A[init_idx, np.arange(n_atoms)] = 1.0 / np.sqrt(diag[init_idx])

    objective_path = []
    prev_codes = None
    accepted_A = A
    for _ in range(n_iters):
        atom_gram = A.T @ KXX @ A
        corr_all = KXX @ A  # row j holds the KOMP correlations for column j
        codes = np.zeros((n_atoms, m))
        energies = np.zeros(m)
        for j in range(m):
            result = gram_pursuit(corr_all[j], atom_gram, float(diag[j]), sparsity)
            codes[result.order, j] = result.coeffs
            energies[j] = result.final_energy
        if prev_codes is not None:
            P = A @ prev_codes
            prev_energies = np.maximum(
                diag
                - 2.0 * np.einsum("ij,ij->j", KXX, P)
                + np.einsum("ij,ij->j", P, KXX @ P),
                0.0,
            )
            codes = tc.keep_better_codes(codes, energies, prev_codes, prev_energies)
        A = _solve_gamma_system(codes).T
        # objective before renormalization: tr((I - A Gamma)^T K (I - A Gamma))
        M = np.eye(m) - A @ codes
        objective = float(np.einsum("ij,ij->", M, KXX @ M))
        if objective_path and objective > objective_path[-1] * (1.0 + tc.CODE_KEEP_SLACK):
            # degenerate-atom resets can perturb the carried codes past what
            # the keep-better safeguard reaches; reject the alternation and
            # hold the last accepted state so the recorded path stays monotone
            logger.debug(
                "class %r: alternation rejected (%.6g > %.6g), training stopped",
                class_label, objective, objective_path[-1],
            )
            objective_path.extend([objective_path[-1]] * (n_iters - len(objective_path)))
            A = accepted_A
            break
        objective_path.append(objective)

        # degenerate-atom hygiene in Gram terms, then renormalization
        usage = np.count_nonzero(codes, axis=1)
        AKA = A.T @ KXX @ A
        atom_sqnorms = np.diag(AKA).copy()
        P = A @ codes  # per-column reconstruction weights on the samples
        t_cross = np.einsum("ij,ij->j", KXX, P)
        t_quad = np.einsum("ij,ij->j", P, KXX @ P)
        col_res_sq = np.maximum(diag - 2.0 * t_cross + t_quad, 0.0)
        safe = np.sqrt(np.maximum(atom_sqnorms, tc.ZERO_NORM_SQ))
        signed_gram = AKA / np.outer(safe, safe)
        plan = tc.plan_atom_replacements(
            usage, atom_sqnorms, np.abs(signed_gram), col_res_sq, diag
        )
        A = A / safe
        # carried codes absorb the normalization so the atom image Phi(X) A
        # times codes is unchanged; a replaced coherent atom's carry migrates
        # to its near-parallel partner, a dead atom's carry is dropped
        prev_codes = codes * safe[:, None]
        for atom_k, col, partner in plan:
            A[:, atom_k] = 0.0
            A[col, atom_k] = 1.0 / np.sqrt(diag[col])
            if partner >= 0:
                sign = 1.0 if signed_gram[partner, atom_k] >= 0.0 else -1.0
                prev_codes[partner, :] += sign * prev_codes[atom_k, :]
            prev_codes[atom_k, :] = 0.0
        if plan:
            logger.debug("class %r: replaced %d degenerate atoms", class_label, len(plan))
        accepted_A = A.copy()

    return KernelDictionary(X, A, kernel, class_label, tuple(objective_path))


def classify_kernel(kdicts, signal, sparsity: int) -> ResidualReport:
    """Minimum KOMP reconstruction residual over per-class kernel
    dictionaries. All dictionaries must share one kernel; ties break to the
    lowest class index and are flagged."""
    kdicts = list(kdicts)
    if not kdicts:
        raise InvalidArgumentError("need at least one class dictionary")
    kernel = kdicts[0].kernel
    dim = kdicts[0].dim
    for i, d in enumerate(kdicts):
        if d.kernel != kernel:
            raise InvalidArgumentError(
                f"dictionary {i} uses kernel {d.kernel}, expected {kernel} like dictionary 0"
            )
        if d.dim != dim:
            raise InvalidArgumentError(
                f"dictionary {i} has dim {d.dim}, expected {dim} like dictionary 0"
            )
    z = tc.coerce_vector(signal, dim)
    residuals = np.empty(len(kdicts))
    for i, d in enumerate(kdicts):
        code = komp(d, z, sparsity)
        residuals[i] = kernel_residual(d, z, code)
    return argmin_report(tuple(d.class_label for d in kdicts), residuals)


def median_squared_distance(class_features) -> float:
    """Median squared pairwise distance over all pooled feature columns,
    floored at 1e-12. The usual heuristic for a gaussian kernel width."""
    features = [tc.coerce_samples(F, f"class {i} features") for i, F in enumerate(class_features)]
    if not features:
        raise InvalidArgumentError("need at least one feature matrix")
    dim = features[0].shape[0]
    for i, F in enumerate(features):
        if F.shape[0] != dim:
            raise InvalidArgumentError(f"class {i} features have dim {F.shape[0]}, expected {dim}")
    pooled = np.concatenate([F.T for F in features], axis=0)
    base = float(np.median(pdist(pooled, "sqeuclidean"))) if pooled.shape[0] > 1 else 0.0
    return max(base, 1e-12)


def select_gaussian_width(
    class_features,
    n_atoms: int | None = None,
    sparsity: int = 3,
    n_iters: int = 10,
    seed: int = 0,
    scales: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0, 8.0),
) -> float:
    """Pick the gaussian kernel width by leave-one-out classification.

    Candidates are base * scales where base is the median squared pairwise
    distance between all training columns. For each candidate, every sample
    is held out once, its class dictionary retrained without it, and the
    sample classified against the full bank; the width with the best LOO
    accuracy wins, ties to the smaller width.
    """
    features = [tc.coerce_samples(F, f"class {i} features") for i, F in enumerate(class_features)]
    if len(features) < 2:
        raise InvalidArgumentError("cross-validation needs at least two classes")
    base = median_squared_distance(features)
    if not any(F.shape[1] >= 2 for F in features):
        raise InvalidArgumentError("cross-validation needs at least one class with >= 2 samples")

    best_c = None
    best_acc = -1.0
    for scale in scales:
        c = base * float(scale)
        kernel = KernelSpec("gaussian", c)
        full = [
            kernel_ksvd_train(
                F, n_atoms, sparsity, n_iters, kernel, seed, class_label=str(i)
            )
            for i, F in enumerate(features)
        ]
        correct = 0
        total = 0
        for i, F in enumerate(features):
            if F.shape[1] < 2:
                continue
            for j in range(F.shape[1]):
                rest = np.delete(F, j, axis=1)
                held_atoms = n_atoms if n_atoms is not None else rest.shape[1]
                fold_dict = kernel_ksvd_train(
                    rest,
                    held_atoms,
                    min(sparsity, held_atoms),
                    n_iters,
                    kernel,
                    seed,
                    class_label=str(i),
                )
                bank = list(full)
                bank[i] = fold_dict
                fold_sparsity = min(sparsity, min(d.n_atoms for d in bank))
                report = classify_kernel(bank, F[:, j], fold_sparsity)
                correct += report.predicted == str(i)
                total += 1
        accuracy = correct / total
        logger.info("gaussian width %.6g: LOO accuracy %.3f", c, accuracy)
        if accuracy > best_acc:
            best_acc = accuracy
            best_c = c
    return best_c
