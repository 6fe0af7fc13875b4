"""Joint HR/LR kernel dictionaries with one shared sparse code per sample
pair.

Training sees every sample at two resolutions (column-aligned matrices) and
learns two coefficient matrices over a common code, coupling the
high-resolution structure into the low-resolution dictionary through a
nonnegative weight. The stacked problem is still a kernel dictionary problem:
correlations, Gram, and energies are just the HR quantities plus coupling
times the LR ones, so the same pursuit core drives it. Classification is
LR-only: the learned LR half is used as an ordinary kernel dictionary.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _traincommon as tc
from .errors import InvalidArgumentError
from .kerneldict import (
    KernelDictionary,
    KernelSpec,
    _self_value,
    _solve_gamma_system,
    gram,
    kernel_residual,
    komp,
)
from .lineardict import ResidualReport, argmin_report
from .pursuit import SparseCode, gram_pursuit

__all__ = [
    "JointKernelDictionary",
    "block_grams",
    "joint_komp",
    "joint_train",
    "classify_joint",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class JointKernelDictionary:
    """Per-class pair of feature-space dictionaries over shared codes.

    hr_samples/lr_samples: (dim_h, m) and (dim_l, m), column-aligned.
    coeff_hr/coeff_lr: (m, n_atoms); each atom unit-norm under its kernel.
    coupling: nonnegative weight on the LR term of the joint objective.
    """

    hr_samples: np.ndarray
    lr_samples: np.ndarray
    coeff_hr: np.ndarray
    coeff_lr: np.ndarray
    kernel_hr: KernelSpec
    kernel_lr: KernelSpec
    coupling: float = 1.0
    class_label: str = ""
    objective_path: tuple[float, ...] | None = None
    gram_hr: np.ndarray = field(init=False, repr=False)
    gram_lr: np.ndarray = field(init=False, repr=False)
    atom_gram: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        XH = tc.coerce_samples(self.hr_samples, "HR samples")
        XL = tc.coerce_samples(self.lr_samples, "LR samples")
        if XH.shape[1] != XL.shape[1]:
            raise InvalidArgumentError(
                f"HR and LR sample counts differ: {XH.shape[1]} vs {XL.shape[1]}"
            )
        AH = tc.coerce_samples(self.coeff_hr, "HR coefficients")
        AL = tc.coerce_samples(self.coeff_lr, "LR coefficients")
        if AH.shape != AL.shape or AH.shape[0] != XH.shape[1]:
            raise InvalidArgumentError(
                "coefficient matrices must both be (n_samples, n_atoms); got "
                f"{AH.shape} and {AL.shape} for {XH.shape[1]} samples"
            )
        coupling = float(self.coupling)
        if not (coupling >= 0 and np.isfinite(coupling)):
            raise InvalidArgumentError(f"coupling must be finite and >= 0, got {self.coupling!r}")
        if not isinstance(self.class_label, str):
            raise InvalidArgumentError(f"class_label must be a string, got {self.class_label!r}")
        KH = gram(XH, XH, self.kernel_hr)
        KL = gram(XL, XL, self.kernel_lr)
        for name, A, K in (("HR", AH, KH), ("LR", AL, KL)):
            norms = np.einsum("jk,jl,lk->k", A, K, A)
            worst = float(np.abs(norms - 1.0).max())
            if worst > 1e-8:
                raise InvalidArgumentError(
                    f"{name} atoms must be unit norm in feature space within 1e-8 "
                    f"(worst deviation {worst:.3e})"
                )
        atom_gram = AH.T @ KH @ AH + coupling * (AL.T @ KL @ AL)
        for arr in (XH, XL, AH, AL):
            arr.flags.writeable = False
        KH.flags.writeable = False
        KL.flags.writeable = False
        atom_gram.flags.writeable = False
        object.__setattr__(self, "hr_samples", XH)
        object.__setattr__(self, "lr_samples", XL)
        object.__setattr__(self, "coeff_hr", AH)
        object.__setattr__(self, "coeff_lr", AL)
        object.__setattr__(self, "coupling", coupling)
        object.__setattr__(self, "gram_hr", KH)
        object.__setattr__(self, "gram_lr", KL)
        object.__setattr__(self, "atom_gram", atom_gram)

    @property
    def dim_hr(self) -> int:
        return self.hr_samples.shape[0]

    @property
    def dim_lr(self) -> int:
        return self.lr_samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.hr_samples.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.coeff_hr.shape[1]

    @cached_property
    def lr_dictionary(self) -> KernelDictionary:
        """The LR half as a standalone kernel dictionary (used at probe time)."""
        return KernelDictionary(
            self.lr_samples, self.coeff_lr, self.kernel_lr, self.class_label
        )


def _probe_pair(jd: JointKernelDictionary, pair) -> tuple[np.ndarray, np.ndarray]:
    try:
        probe_hr, probe_lr = pair
    except (TypeError, ValueError):
        raise InvalidArgumentError("probe pair must be a (hr, lr) vector pair") from None
    return (
        tc.coerce_vector(probe_hr, jd.dim_hr, "HR probe"),
        tc.coerce_vector(probe_lr, jd.dim_lr, "LR probe"),
    )


def block_grams(jd: JointKernelDictionary, probe_hr, probe_lr) -> tuple[np.ndarray, np.ndarray]:
    """The stacked kernel blocks for one probe pair: K1 concatenates the HR
    probe-sample kernel row with coupling times the LR one (length 2m); K2 is
    the block diagonal of the HR self-Gram and coupling times the LR
    self-Gram (2m x 2m)."""
    zh, zl = _probe_pair(jd, (probe_hr, probe_lr))
    kh = gram(jd.hr_samples, zh[:, None], jd.kernel_hr)[:, 0]
    kl = gram(jd.lr_samples, zl[:, None], jd.kernel_lr)[:, 0]
    m = jd.n_samples
    k1 = np.concatenate([kh, jd.coupling * kl])
    k2 = np.zeros((2 * m, 2 * m))
    k2[:m, :m] = jd.gram_hr
    k2[m:, m:] = jd.coupling * jd.gram_lr
    return k1, k2


def joint_komp(jd: JointKernelDictionary, pair, sparsity: int, *, with_path: bool = False):
    """KOMP over the stacked HR+LR representation: one shared code whose
    correlations, Gram, and energy are the HR quantities plus coupling times
    the LR ones. Same stop rules and ridge handling as komp."""
    zh, zl = _probe_pair(jd, pair)
    if not (1 <= sparsity <= jd.n_atoms):
        raise InvalidArgumentError(f"sparsity must be in [1, {jd.n_atoms}], got {sparsity}")
    kh = gram(jd.hr_samples, zh[:, None], jd.kernel_hr)[:, 0]
    kl = gram(jd.lr_samples, zl[:, None], jd.kernel_lr)[:, 0]
    g0 = kh @ jd.coeff_hr + jd.coupling * (kl @ jd.coeff_lr)
    e0 = _self_value(zh, jd.kernel_hr) + jd.coupling * _self_value(zl, jd.kernel_lr)
    result = gram_pursuit(g0, jd.atom_gram, e0, int(sparsity))
    if result.ridged:
        logger.debug("joint_komp refit needed the ridge (class %r)", jd.class_label)
    code = SparseCode.from_pursuit(result, jd.n_atoms)
    return (code, result) if with_path else code


def joint_train(
    hr_data,
    lr_data,
    coupling: float = 1.0,
    n_atoms: int | None = None,
    sparsity: int = 3,
    n_iters: int = 20,
    kernel_hr: KernelSpec = KernelSpec("linear"),
    kernel_lr: KernelSpec = KernelSpec("linear"),
    seed: int = 0,
    *,
    allow_replication: bool = True,
    class_label: str = "",
) -> JointKernelDictionary:
    """Train one class's joint dictionary pair over shared codes.

    Each alternation codes every column pair with joint_komp, then updates
    both coefficient matrices with the same pre-normalization solution
    Gamma^T (Gamma Gamma^T)^-1 and normalizes each under its own kernel
    (which is what makes them differ). Column pairs keep their previous code
    when fresh coding would worsen the combined residual, mirroring the other
    trainers. Replication keeps HR/LR columns paired. With coupling = 0 the HR trajectory equals kernel_ksvd_train on
    the HR data alone for the same seed, provided no replication is needed.
    objective_path records the joint objective (HR term plus coupling times
    LR term) after each update half-step, before renormalization.
    """
    XH = tc.coerce_samples(hr_data, "HR training data")
    XL = tc.coerce_samples(lr_data, "LR training data")
    if XH.shape[1] != XL.shape[1]:
        raise InvalidArgumentError(
            f"HR and LR training column counts differ: {XH.shape[1]} vs {XL.shape[1]}"
        )
    coupling = float(coupling)
    if not (coupling >= 0 and np.isfinite(coupling)):
        raise InvalidArgumentError(f"coupling must be finite and >= 0, got {coupling!r}")
    m = XH.shape[1]
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
            "class %r: replicating %d column pairs up to %d for initialization",
            class_label, m, n_atoms,
        )
        XH, XL = tc.replicate_column_pairs(XH, XL, n_atoms, rng)
        m = n_atoms
    KH = gram(XH, XH, kernel_hr)
    KL = gram(XL, XL, kernel_lr)
    diag_h = np.diag(KH).copy()
    diag_l = np.diag(KL).copy()
    # initialization and replacement need both per-resolution norms nonzero
    init_idx = tc.init_column_indices(np.minimum(diag_h, diag_l), n_atoms, rng)
    AH = np.zeros((m, n_atoms))
    AL = np.zeros((m, n_atoms))
    cols = np.arange(n_atoms)
    AH[init_idx, cols] = 1.0 / np.sqrt(diag_h[init_idx])
    AL[init_idx, cols] = 1.0 / np.sqrt(diag_l[init_idx])

    objective_path = []
    prev_codes = None
    accepted_AH = AH
    accepted_AL = AL
    for _ in range(n_iters):
        atom_gram = AH.T @ KH @ AH + coupling * (AL.T @ KL @ AL)
        corr_h = KH @ AH
        corr_l = KL @ AL
        codes = np.zeros((n_atoms, m))
        energies = np.zeros(m)
        for j in range(m):
            g0 = corr_h[j] + coupling * corr_l[j]
            e0 = float(diag_h[j] + coupling * diag_l[j])
            result = gram_pursuit(g0, atom_gram, e0, sparsity)
            codes[result.order, j] = result.coeffs
            energies[j] = result.final_energy
        if prev_codes is not None:
            PH = AH @ prev_codes
            PL = AL @ prev_codes
            prev_energies = (
                diag_h
                - 2.0 * np.einsum("ij,ij->j", KH, PH)
                + np.einsum("ij,ij->j", PH, KH @ PH)
            )
            prev_energies = prev_energies + coupling * (
                diag_l
                - 2.0 * np.einsum("ij,ij->j", KL, PL)
                + np.einsum("ij,ij->j", PL, KL @ PL)
            )
            codes = tc.keep_better_codes(
                codes, energies, prev_codes, np.maximum(prev_energies, 0.0)
            )
        # one shared pre-normalization update for both resolutions
        pre = _solve_gamma_system(codes).T
        M = np.eye(m) - pre @ codes
        obj = float(np.einsum("ij,ij->", M, KH @ M))
        obj += coupling * float(np.einsum("ij,ij->", M, KL @ M))
        if objective_path and obj > objective_path[-1] * (1.0 + tc.CODE_KEEP_SLACK):
            # the LR half of the carried code is approximate, and degenerate
            # resets can perturb it further; reject the alternation and hold
            # the last accepted pair so the recorded path stays monotone
            logger.debug(
                "class %r: alternation rejected (%.6g > %.6g), training stopped",
                class_label, obj, objective_path[-1],
            )
            objective_path.extend([objective_path[-1]] * (n_iters - len(objective_path)))
            AH = accepted_AH
            AL = accepted_AL
            break
        objective_path.append(obj)

        usage = np.count_nonzero(codes, axis=1)
        aka_h = pre.T @ KH @ pre
        aka_l = pre.T @ KL @ pre
        joint_aka = aka_h + coupling * aka_l
        atom_sqnorms = np.diag(joint_aka).copy()
        P = pre @ codes
        res_h = diag_h - 2.0 * np.einsum("ij,ij->j", KH, P) + np.einsum("ij,ij->j", P, KH @ P)
        res_l = diag_l - 2.0 * np.einsum("ij,ij->j", KL, P) + np.einsum("ij,ij->j", P, KL @ P)
        col_res_sq = np.maximum(res_h + coupling * res_l, 0.0)
        safe = np.sqrt(np.maximum(atom_sqnorms, tc.ZERO_NORM_SQ))
        signed_gram = joint_aka / np.outer(safe, safe)
        plan = tc.plan_atom_replacements(
            usage, atom_sqnorms, np.abs(signed_gram), col_res_sq, np.minimum(diag_h, diag_l)
        )
        scale_h = np.sqrt(np.maximum(np.diag(aka_h), tc.ZERO_NORM_SQ))
        AH = pre / scale_h
        AL = pre / np.sqrt(np.maximum(np.diag(aka_l), tc.ZERO_NORM_SQ))
        # the carry absorbs the HR normalization exactly; the LR half differs
        # by the per-atom scale ratio, so its carried energy is approximate
        # (exact when the two normalizations agree, as in the duplicated and
        # decoupled reductions). Coherent atoms migrate their carry to the
        # near-parallel partner, dead atoms drop theirs.
        prev_codes = codes * scale_h[:, None]
        for atom_k, col, partner in plan:
            AH[:, atom_k] = 0.0
            AH[col, atom_k] = 1.0 / np.sqrt(diag_h[col])
            AL[:, atom_k] = 0.0
            AL[col, atom_k] = 1.0 / np.sqrt(diag_l[col])
            if partner >= 0:
                sign = 1.0 if signed_gram[partner, atom_k] >= 0.0 else -1.0
                prev_codes[partner, :] += sign * prev_codes[atom_k, :]
            prev_codes[atom_k, :] = 0.0
        if plan:
            logger.debug("class %r: replaced %d degenerate atoms", class_label, len(plan))
        accepted_AH = AH.copy()
        accepted_AL = AL.copy()

    return JointKernelDictionary(
        XH, XL, AH, AL, kernel_hr, kernel_lr, coupling, class_label, tuple(objective_path)
    )


def classify_joint(jds, probe_lr, sparsity: int) -> ResidualReport:
    """Classify a low-resolution probe against the LR halves of joint
    dictionaries. Probes are LR-only at test time; the HR half only shaped
    training. All classes must share the LR kernel."""
    jds = list(jds)
    if not jds:
        raise InvalidArgumentError("need at least one class dictionary")
    kernel = jds[0].kernel_lr
    dim = jds[0].dim_lr
    for i, jd in enumerate(jds):
        if jd.kernel_lr != kernel:
            raise InvalidArgumentError(
                f"dictionary {i} uses LR kernel {jd.kernel_lr}, expected {kernel} like dictionary 0"
            )
        if jd.dim_lr != dim:
            raise InvalidArgumentError(
                f"dictionary {i} has LR dim {jd.dim_lr}, expected {dim} like dictionary 0"
            )
    z = tc.coerce_vector(probe_lr, dim, "LR probe")
    residuals = np.empty(len(jds))
    for i, jd in enumerate(jds):
        kd = jd.lr_dictionary
        code = komp(kd, z, sparsity)
        residuals[i] = kernel_residual(kd, z, code)
    return argmin_report(tuple(jd.class_label for jd in jds), residuals)
