"""End-to-end experiment orchestration: gallery extension, degradation, PCA
features, per-class dictionary training, evaluation with CMC curves, and the
noise-robustness sweep.

Three methods share the skeleton and differ only in the per-class model:
"slrfr" trains linear dictionaries on LR features, "kerslrfr" kernel
dictionaries on LR features, "jointkerslrfr" joint HR/LR kernel dictionaries
with shared codes. Probes are HR images degraded by the model's own
degradation unless marked as already-LR. Everything is deterministic given
the seeds; optional thread parallelism never changes results.
"""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import _traincommon as tc
from .errors import DataFormatError, InvalidArgumentError, SlrfrError
from .imageops import DegradationModel, GrayImage, add_noise, degrade, read_pgm, stack
from .jointdict import JointKernelDictionary, classify_joint, joint_train
from .kerneldict import (
    KernelDictionary,
    KernelSpec,
    classify_kernel,
    kernel_ksvd_train,
    median_squared_distance,
    select_gaussian_width,
)
from .lineardict import Dictionary, ResidualReport, classify_linear, ksvd_train
from .relighting import NormalField, ellipsoid_normal_field, extend_gallery, load_normal_field

__all__ = [
    "METHODS",
    "EllipsoidParams",
    "GalleryManifest",
    "PcaBasis",
    "TrainParams",
    "TrainedModel",
    "ProbeResult",
    "RuntimeStats",
    "EvaluationReport",
    "SweepEntry",
    "SweepResult",
    "parse_manifest",
    "load_manifest",
    "compute_pca_basis",
    "extract_features",
    "train_model",
    "train_model_from_images",
    "classify_image",
    "evaluate",
    "noise_sweep",
    "write_cmc_csv",
    "write_per_probe_csv",
    "write_sweep_csv",
]

logger = logging.getLogger(__name__)

METHODS = ("slrfr", "kerslrfr", "jointkerslrfr")


@dataclass(frozen=True)
class EllipsoidParams:
    """Parameters for the synthetic ellipsoid normal field (see
    relighting.ellipsoid_normal_field)."""

    semi_x: float = 1.0
    semi_y: float = 1.0
    depth: float = 0.55
    extent: float = 0.5


@dataclass(frozen=True, eq=False)
class GalleryManifest:
    """Gallery description: per-class HR image paths plus the extension
    settings (normals source, light count, flips)."""

    classes: tuple[tuple[str, tuple[str, ...]], ...]
    normals_source: EllipsoidParams | str = EllipsoidParams()
    n_lights: int = 5
    include_flips: bool = True

    def __post_init__(self):
        classes = tuple((str(label), tuple(paths)) for label, paths in self.classes)
        if not classes:
            raise InvalidArgumentError("manifest needs at least one class")
        labels = [label for label, _ in classes]
        if len(set(labels)) != len(labels):
            raise InvalidArgumentError("manifest class labels must be unique")
        for label, paths in classes:
            if not paths:
                raise InvalidArgumentError(f"class {label!r} has no images")
        if not (1 <= self.n_lights <= 9):
            raise InvalidArgumentError(f"n_lights must be in [1, 9], got {self.n_lights}")
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "include_flips", bool(self.include_flips))


def parse_manifest(text: str) -> tuple[tuple[str, tuple[str, ...]], ...]:
    """Parse 'label path' lines into per-class path groups (first token is
    the label, the rest of the line the path); '#' starts a comment. Class
    order follows first appearance."""
    groups: dict[str, list[str]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        parts = body.split(None, 1)
        if len(parts) != 2:
            raise DataFormatError(f"line {lineno}: expected 'label path', got {line.strip()!r}")
        label, path = parts
        groups.setdefault(label, []).append(path.strip())
    if not groups:
        raise DataFormatError("manifest has no entries")
    return tuple((label, tuple(paths)) for label, paths in groups.items())


def load_manifest(path) -> tuple[tuple[str, tuple[str, ...]], ...]:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        return parse_manifest(text)
    except DataFormatError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


@dataclass(frozen=True, eq=False)
class PcaBasis:
    """Mean vector and orthonormal principal components (dim x p)."""

    mean: np.ndarray
    components: np.ndarray

    def __post_init__(self):
        mean = tc.coerce_vector(self.mean, what="PCA mean")
        comps = tc.coerce_samples(self.components, "PCA components")
        if comps.shape[0] != mean.shape[0]:
            raise InvalidArgumentError(
                f"components have dim {comps.shape[0]}, mean has {mean.shape[0]}"
            )
        identity_dev = float(np.abs(comps.T @ comps - np.eye(comps.shape[1])).max())
        if identity_dev > 1e-8:
            raise InvalidArgumentError(
                f"components must be orthonormal within 1e-8 (deviation {identity_dev:.3e})"
            )
        mean = mean.copy()
        mean.flags.writeable = False
        comps = comps.copy()
        comps.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "components", comps)

    @property
    def dim(self) -> int:
        return self.components.shape[0]

    @property
    def n_components(self) -> int:
        return self.components.shape[1]


def compute_pca_basis(training, p: int) -> PcaBasis:
    """Mean-centered PCA by SVD: components ordered by descending singular
    value, each sign-fixed so its largest-magnitude entry is positive."""
    X = tc.coerce_samples(training, "PCA training data")
    dim, count = X.shape
    if not isinstance(p, (int, np.integer)) or not (1 <= p <= min(dim, count)):
        raise InvalidArgumentError(
            f"p must be an integer in [1, {min(dim, count)}], got {p!r}"
        )
    mean = X.mean(axis=1)
    centered = X - mean[:, None]
    u, _, _ = np.linalg.svd(centered, full_matrices=False)
    comps = u[:, :p].copy()
    peak = np.argmax(np.abs(comps), axis=0)
    signs = np.sign(comps[peak, np.arange(p)])
    signs[signs == 0] = 1.0
    comps *= signs
    return PcaBasis(mean, comps)


def extract_features(basis: PcaBasis, X) -> np.ndarray:
    """Project columns onto the basis: components^T (x - mean) per column."""
    X = tc.coerce_samples(X, "feature input")
    if X.shape[0] != basis.dim:
        raise InvalidArgumentError(f"input dim {X.shape[0]} does not match basis dim {basis.dim}")
    return basis.components.T @ (X - basis.mean[:, None])


@dataclass(frozen=True)
class TrainParams:
    """Hyperparameters shared by the three methods.

    n_atoms None means one atom per extended gallery image. kernel_c may be a
    number, "auto" (median squared pairwise feature distance), or "cv"
    (leave-one-out grid search); cv_iters caps training iterations inside CV
    folds. coupling weights the LR term of the joint objective.
    """

    n_atoms: int | None = None
    sparsity: int = 3
    n_iters: int = 20
    kernel_kind: str = "gaussian"
    kernel_c: float | str = "auto"
    kernel_degree: int = 2
    coupling: float = 1.0
    pca_dim: int = 100
    cv_iters: int = 5


@dataclass(frozen=True, eq=False)
class TrainedModel:
    """Everything needed to classify probes: per-class dictionaries of the
    method's kind, PCA bases (LR always, HR for the joint method), the
    degradation operator, and a text snapshot of the effective settings."""

    method: str
    labels: tuple[str, ...]
    dictionaries: tuple
    degradation: DegradationModel
    pca_lr: PcaBasis
    pca_hr: PcaBasis | None
    hr_shape: tuple[int, int]
    lr_shape: tuple[int, int]
    sparsity: int
    config_text: str = ""

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidArgumentError(f"method must be one of {METHODS}, got {self.method!r}")
        kind = {
            "slrfr": Dictionary,
            "kerslrfr": KernelDictionary,
            "jointkerslrfr": JointKernelDictionary,
        }[self.method]
        labels = tuple(str(lab) for lab in self.labels)
        dictionaries = tuple(self.dictionaries)
        if not dictionaries or len(labels) != len(dictionaries):
            raise InvalidArgumentError("labels and dictionaries must align and be non-empty")
        for i, d in enumerate(dictionaries):
            if not isinstance(d, kind):
                raise InvalidArgumentError(
                    f"dictionary {i} is {type(d).__name__}, expected {kind.__name__} for {self.method}"
                )
            if d.class_label != labels[i]:
                raise InvalidArgumentError(
                    f"dictionary {i} is labeled {d.class_label!r}, expected {labels[i]!r}"
                )
        if (self.pca_hr is not None) != (self.method == "jointkerslrfr"):
            raise InvalidArgumentError("pca_hr is required exactly for jointkerslrfr")
        for name, shape in (("hr_shape", self.hr_shape), ("lr_shape", self.lr_shape)):
            if len(shape) != 2 or shape[0] < 1 or shape[1] < 1:
                raise InvalidArgumentError(f"{name} must be positive (rows, cols), got {shape}")
        if not isinstance(self.sparsity, (int, np.integer)) or self.sparsity < 1:
            raise InvalidArgumentError(f"sparsity must be a positive integer, got {self.sparsity!r}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "dictionaries", dictionaries)
        object.__setattr__(self, "hr_shape", (int(self.hr_shape[0]), int(self.hr_shape[1])))
        object.__setattr__(self, "lr_shape", (int(self.lr_shape[0]), int(self.lr_shape[1])))
        object.__setattr__(self, "sparsity", int(self.sparsity))

    @property
    def n_classes(self) -> int:
        return len(self.labels)


def _resolve_normals(source, shape: tuple[int, int]) -> NormalField:
    if isinstance(source, EllipsoidParams):
        return ellipsoid_normal_field(
            shape[0], shape[1], source.semi_x, source.semi_y, source.depth, source.extent
        )
    normals = load_normal_field(source)
    if normals.shape != shape:
        raise InvalidArgumentError(
            f"normal map shape {normals.shape} does not match gallery image shape {shape}"
        )
    return normals


def _resolve_kernel(params: TrainParams, class_features, seed) -> KernelSpec:
    """Turn the (kind, c, degree) config into a concrete KernelSpec,
    resolving gaussian "auto"/"cv" widths from the training features."""
    if params.kernel_kind != "gaussian":
        c = params.kernel_c if isinstance(params.kernel_c, (int, float)) else 1.0
        return KernelSpec(params.kernel_kind, float(c), params.kernel_degree)
    if isinstance(params.kernel_c, (int, float)) and not isinstance(params.kernel_c, bool):
        return KernelSpec("gaussian", float(params.kernel_c))
    if params.kernel_c == "auto":
        width = median_squared_distance(class_features)
        logger.info("gaussian width (median heuristic): %.6g", width)
        return KernelSpec("gaussian", width)
    if params.kernel_c == "cv":
        width = select_gaussian_width(
            class_features,
            params.n_atoms,
            params.sparsity,
            params.cv_iters,
            seed,
        )
        logger.info("gaussian width (cross-validated): %.6g", width)
        return KernelSpec("gaussian", width)
    raise InvalidArgumentError(
        f"kernel_c must be a number, 'auto', or 'cv', got {params.kernel_c!r}"
    )


def _kernel_text(kernel: KernelSpec) -> str:
    if kernel.kind == "linear":
        return "linear"
    if kernel.kind == "polynomial":
        return f"polynomial(c={kernel.c:.10g}, degree={kernel.degree})"
    return f"gaussian(c={kernel.c:.10g})"


def _map_over_classes(fn, items, n_jobs: int):
    """Apply fn over per-class work items, serially or on a thread pool;
    result order always follows item order."""
    if n_jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))


def train_model_from_images(
    classes,
    method: str,
    degradation: DegradationModel,
    params: TrainParams = TrainParams(),
    seed: int = 0,
    *,
    normals_source: EllipsoidParams | str = EllipsoidParams(),
    n_lights: int = 5,
    include_flips: bool = True,
    n_jobs: int = 1,
) -> TrainedModel:
    """Train a model from in-memory per-class image lists.

    classes: sequence of (label, sequence of GrayImage), all one HR shape.
    Each image is relit into n_lights synthesized directions (plus flips),
    every extended image is degraded to LR, PCA is fit on the degraded pool,
    and one dictionary per class is trained on that class's features. The
    joint method additionally fits an HR PCA on the undegraded pool and
    trains on paired HR/LR features.
    """
    if method not in METHODS:
        raise InvalidArgumentError(f"method must be one of {METHODS}, got {method!r}")
    class_list = [(str(label), list(images)) for label, images in classes]
    if not class_list:
        raise InvalidArgumentError("need at least one class")
    labels = tuple(label for label, _ in class_list)
    if len(set(labels)) != len(labels):
        raise InvalidArgumentError("class labels must be unique")
    for label, images in class_list:
        if not images:
            raise InvalidArgumentError(f"class {label!r} has no images")
    hr_shape = class_list[0][1][0].shape
    for label, images in class_list:
        for img in images:
            if img.shape != hr_shape:
                raise InvalidArgumentError(
                    f"class {label!r} has an image of shape {img.shape}, expected {hr_shape}"
                )
    normals = _resolve_normals(normals_source, hr_shape)

    root = np.random.SeedSequence(seed)
    class_seeds = root.spawn(len(class_list))

    def _extend_and_degrade(item):
        (label, images), child = item
        train_ss, degrade_parent = child.spawn(2)
        try:
            extended = []
            for img in images:
                extended.extend(extend_gallery(img, normals, n_lights, include_flips))
            degrade_seeds = degrade_parent.spawn(len(extended))
            lows = [degrade(img, degradation, s) for img, s in zip(extended, degrade_seeds)]
        except SlrfrError as exc:
            raise type(exc)(f"class {label!r}: {exc}") from exc
        return extended, lows, train_ss

    prepared = _map_over_classes(
        _extend_and_degrade, list(zip(class_list, class_seeds)), n_jobs
    )
    per_class_hr = [p[0] for p in prepared]
    per_class_lr = [p[1] for p in prepared]
    train_seeds = [p[2] for p in prepared]
    lr_shape = per_class_lr[0][0].shape

    counts = [len(lows) for lows in per_class_lr]
    total = sum(counts)
    if total < 2:
        raise InvalidArgumentError(
            "need at least two extended gallery images overall to fit PCA"
        )
    lr_stack = stack([img for lows in per_class_lr for img in lows])
    p_lr = min(params.pca_dim, total - 1, lr_stack.shape[0])
    if p_lr < params.pca_dim:
        logger.info("LR PCA dimension clipped from %d to %d", params.pca_dim, p_lr)
    pca_lr = compute_pca_basis(lr_stack, p_lr)
    lr_features = extract_features(pca_lr, lr_stack)
    bounds = np.cumsum([0] + counts)
    class_lr_feats = [lr_features[:, bounds[i] : bounds[i + 1]] for i in range(len(counts))]

    pca_hr = None
    config_lines = {
        "method": method,
        "downsample_factor": str(degradation.downsample_factor),
        "noise_sigma": f"{degradation.noise_sigma:.10g}",
        "blur_kernel_size": f"{degradation.blur_kernel.shape[0]}x{degradation.blur_kernel.shape[1]}",
        "n_atoms": "per-class-sample-count" if params.n_atoms is None else str(params.n_atoms),
        "sparsity": str(params.sparsity),
        "n_iters": str(params.n_iters),
        "pca_dim_lr": str(p_lr),
        "n_lights": str(n_lights),
        "flips": str(include_flips).lower(),
        "seed": str(seed),
        "hr_shape": f"{hr_shape[0]}x{hr_shape[1]}",
        "lr_shape": f"{lr_shape[0]}x{lr_shape[1]}",
    }

    if method == "slrfr":

        def _train(i):
            try:
                return ksvd_train(
                    class_lr_feats[i],
                    params.n_atoms,
                    params.sparsity,
                    params.n_iters,
                    train_seeds[i],
                    class_label=labels[i],
                )
            except SlrfrError as exc:
                raise type(exc)(f"class {labels[i]!r}: {exc}") from exc

        dictionaries = tuple(_map_over_classes(_train, list(range(len(labels))), n_jobs))
    elif method == "kerslrfr":
        kernel = _resolve_kernel(params, class_lr_feats, seed)
        config_lines["kernel_lr"] = _kernel_text(kernel)

        def _train(i):
            try:
                return kernel_ksvd_train(
                    class_lr_feats[i],
                    params.n_atoms,
                    params.sparsity,
                    params.n_iters,
                    kernel,
                    train_seeds[i],
                    class_label=labels[i],
                )
            except SlrfrError as exc:
                raise type(exc)(f"class {labels[i]!r}: {exc}") from exc

        dictionaries = tuple(_map_over_classes(_train, list(range(len(labels))), n_jobs))
    else:
        hr_stack = stack([img for imgs in per_class_hr for img in imgs])
        p_hr = min(params.pca_dim, total - 1, hr_stack.shape[0])
        if p_hr < params.pca_dim:
            logger.info("HR PCA dimension clipped from %d to %d", params.pca_dim, p_hr)
        pca_hr = compute_pca_basis(hr_stack, p_hr)
        hr_features = extract_features(pca_hr, hr_stack)
        class_hr_feats = [hr_features[:, bounds[i] : bounds[i + 1]] for i in range(len(counts))]
        kernel_hr = _resolve_kernel(params, class_hr_feats, seed)
        kernel_lr = _resolve_kernel(params, class_lr_feats, seed)
        config_lines["kernel_hr"] = _kernel_text(kernel_hr)
        config_lines["kernel_lr"] = _kernel_text(kernel_lr)
        config_lines["coupling"] = f"{params.coupling:.10g}"
        config_lines["pca_dim_hr"] = str(p_hr)

        def _train(i):
            try:
                return joint_train(
                    class_hr_feats[i],
                    class_lr_feats[i],
                    params.coupling,
                    params.n_atoms,
                    params.sparsity,
                    params.n_iters,
                    kernel_hr,
                    kernel_lr,
                    train_seeds[i],
                    class_label=labels[i],
                )
            except SlrfrError as exc:
                raise type(exc)(f"class {labels[i]!r}: {exc}") from exc

        dictionaries = tuple(_map_over_classes(_train, list(range(len(labels))), n_jobs))

    config_text = "\n".join(f"{k} = {v}" for k, v in sorted(config_lines.items())) + "\n"
    return TrainedModel(
        method=method,
        labels=labels,
        dictionaries=dictionaries,
        degradation=degradation,
        pca_lr=pca_lr,
        pca_hr=pca_hr,
        hr_shape=hr_shape,
        lr_shape=lr_shape,
        sparsity=params.sparsity,
        config_text=config_text,
    )


def train_model(
    manifest: GalleryManifest,
    method: str,
    degradation: DegradationModel,
    params: TrainParams = TrainParams(),
    seed: int = 0,
    n_jobs: int = 1,
) -> TrainedModel:
    """Train from a manifest of PGM paths; see train_model_from_images."""
    loaded = []
    for label, paths in manifest.classes:
        try:
            loaded.append((label, [read_pgm(p) for p in paths]))
        except OSError as exc:
            raise DataFormatError(f"class {label!r}: cannot read image: {exc}") from exc
    return train_model_from_images(
        loaded,
        method,
        degradation,
        params,
        seed,
        normals_source=manifest.normals_source,
        n_lights=manifest.n_lights,
        include_flips=manifest.include_flips,
        n_jobs=n_jobs,
    )


def _classify_features(model: TrainedModel, features: np.ndarray) -> ResidualReport:
    if model.method == "slrfr":
        return classify_linear(model.dictionaries, features)
    if model.method == "kerslrfr":
        return classify_kernel(model.dictionaries, features, model.sparsity)
    return classify_joint(model.dictionaries, features, model.sparsity)


def _probe_to_lr(model: TrainedModel, img: GrayImage, probe_is_lr: bool, seed) -> GrayImage:
    if probe_is_lr:
        if img.shape != model.lr_shape:
            raise InvalidArgumentError(
                f"LR probe shape {img.shape} does not match model LR shape {model.lr_shape}"
            )
        return img
    if img.shape != model.hr_shape:
        raise InvalidArgumentError(
            f"HR probe shape {img.shape} does not match model HR shape {model.hr_shape}"
        )
    return degrade(img, model.degradation, seed)


def classify_image(
    model: TrainedModel, img: GrayImage, *, probe_is_lr: bool = False, seed: int = 0
) -> ResidualReport:
    """Classify one probe image: degrade to LR (unless already LR), extract
    PCA features, run the model's classifier."""
    low = _probe_to_lr(model, img, probe_is_lr, seed)
    features = extract_features(model.pca_lr, stack([low]))[:, 0]
    return _classify_features(model, features)


@dataclass(frozen=True, eq=False)
class ProbeResult:
    """One probe's outcome. rank is the 1-based position of the true class
    in the ascending-residual ranking, or None when the true label is not in
    the model."""

    index: int
    true_label: str
    predicted: str
    residuals: np.ndarray
    rank: int | None


@dataclass(frozen=True)
class RuntimeStats:
    n_probes: int
    n_scored: int
    elapsed_seconds: float


@dataclass(frozen=True, eq=False)
class EvaluationReport:
    """Aggregate evaluation outcome. cmc[r-1] is the fraction of scored
    probes whose true class sits within the top r residual ranks; rank_one
    is cmc[0]. Probes with labels unknown to the model are excluded from cmc
    but kept in per_probe."""

    labels: tuple[str, ...]
    cmc: np.ndarray
    rank_one: float
    per_probe: tuple[ProbeResult, ...]
    excluded: tuple[tuple[int, str], ...]
    runtime_stats: RuntimeStats

    def __post_init__(self):
        cmc = np.asarray(self.cmc, dtype=np.float64)
        if cmc.shape != (len(self.labels),):
            raise InvalidArgumentError("cmc must have one entry per model class")
        if np.any(cmc < -1e-12) or np.any(cmc > 1 + 1e-12):
            raise InvalidArgumentError("cmc values must lie in [0, 1]")
        if np.any(np.diff(cmc) < -1e-12):
            raise InvalidArgumentError("cmc must be non-decreasing in rank")
        n_scored = self.runtime_stats.n_scored
        if n_scored > 0 and abs(cmc[-1] - 1.0) > 1e-12:
            raise InvalidArgumentError("cmc must reach 1.0 at rank C when probes were scored")
        if abs(self.rank_one - cmc[0]) > 1e-12:
            raise InvalidArgumentError("rank_one must equal cmc[0]")
        cmc = cmc.copy()
        cmc.flags.writeable = False
        object.__setattr__(self, "cmc", cmc)


def evaluate(
    model: TrainedModel,
    probes,
    *,
    probes_are_lr: bool = False,
    seed: int = 0,
    n_jobs: int = 1,
) -> EvaluationReport:
    """Classify labeled probes and aggregate CMC statistics.

    probes: sequence of (GrayImage, true label). HR probes are degraded with
    the model's degradation (seeded when it includes noise); pass
    probes_are_lr=True for already-degraded inputs. Deterministic given seed;
    n_jobs only parallelizes.
    """
    probes = list(probes)
    if not probes:
        raise InvalidArgumentError("need at least one probe")
    start = time.perf_counter()
    degrade_seeds = np.random.SeedSequence(seed).spawn(len(probes))
    lows = [
        _probe_to_lr(model, img, probes_are_lr, s)
        for (img, _), s in zip(probes, degrade_seeds)
    ]
    features = extract_features(model.pca_lr, stack(lows))
    label_index = {label: i for i, label in enumerate(model.labels)}

    def _score(idx: int) -> ProbeResult:
        true_label = str(probes[idx][1])
        report = _classify_features(model, features[:, idx])
        known = label_index.get(true_label)
        if known is None:
            rank = None
        else:
            order = np.argsort(report.residuals, kind="stable")
            rank = int(np.nonzero(order == known)[0][0]) + 1
        return ProbeResult(idx, true_label, report.predicted, report.residuals, rank)

    results = _map_over_classes(_score, list(range(len(probes))), n_jobs)
    excluded = tuple((r.index, r.true_label) for r in results if r.rank is None)
    if excluded:
        logger.warning(
            "%d probes excluded from CMC (labels not in model): %s",
            len(excluded), sorted({lab for _, lab in excluded}),
        )
    ranks = np.array([r.rank for r in results if r.rank is not None], dtype=np.int64)
    n_classes = model.n_classes
    if ranks.size:
        cmc = np.array([(ranks <= r).mean() for r in range(1, n_classes + 1)])
    else:
        cmc = np.zeros(n_classes)
    elapsed = time.perf_counter() - start
    return EvaluationReport(
        labels=model.labels,
        cmc=cmc,
        rank_one=float(cmc[0]),
        per_probe=tuple(results),
        excluded=excluded,
        runtime_stats=RuntimeStats(len(probes), int(ranks.size), elapsed),
    )


@dataclass(frozen=True, eq=False)
class SweepEntry:
    sigma: float
    seed: int
    report: EvaluationReport


@dataclass(frozen=True, eq=False)
class SweepResult:
    """noise_sweep output: one entry per (sigma, seed) plus per-sigma mean
    rank-one accuracies, in sigma order."""

    entries: tuple[SweepEntry, ...]
    sigma_means: tuple[tuple[float, float], ...]


def noise_sweep(
    model: TrainedModel,
    probes,
    sigmas,
    seeds,
    *,
    probes_are_lr: bool = False,
    n_jobs: int = 1,
) -> SweepResult:
    """Evaluate under increasing LR noise.

    Probes are brought to LR once with the model's blur/downsample but no
    noise (the sweep owns all noise); then for every (sigma, seed) pair,
    clamped Gaussian noise is added at LR scale and the model evaluated.
    sigma = 0 reproduces the noiseless evaluation exactly.
    """
    sigmas = [float(s) for s in sigmas]
    if not sigmas:
        raise InvalidArgumentError("need at least one sigma")
    if any(s < 0 for s in sigmas) or any(b < a for a, b in zip(sigmas, sigmas[1:])):
        raise InvalidArgumentError(f"sigmas must be nonnegative and ascending, got {sigmas}")
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise InvalidArgumentError("need at least one seed")
    probes = list(probes)
    if not probes:
        raise InvalidArgumentError("need at least one probe")
    noiseless = replace(model.degradation, noise_sigma=0.0)
    lows = []
    for img, label in probes:
        if probes_are_lr:
            if img.shape != model.lr_shape:
                raise InvalidArgumentError(
                    f"LR probe shape {img.shape} does not match model LR shape {model.lr_shape}"
                )
            lows.append((img, label))
        else:
            if img.shape != model.hr_shape:
                raise InvalidArgumentError(
                    f"HR probe shape {img.shape} does not match model HR shape {model.hr_shape}"
                )
            lows.append((degrade(img, noiseless), label))

    entries = []
    means = []
    for sigma in sigmas:
        rank_ones = []
        for s in seeds:
            noise_seeds = np.random.SeedSequence(s).spawn(len(lows))
            noisy = [
                (add_noise(img, sigma, ns), label)
                for (img, label), ns in zip(lows, noise_seeds)
            ]
            report = evaluate(model, noisy, probes_are_lr=True, n_jobs=n_jobs)
            entries.append(SweepEntry(sigma, s, report))
            rank_ones.append(report.rank_one)
        means.append((sigma, float(np.mean(rank_ones))))
    return SweepResult(tuple(entries), tuple(means))


def write_cmc_csv(report: EvaluationReport, path) -> None:
    """CMC curve as 'rank,cumulative_accuracy' rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "cumulative_accuracy"])
        for r, value in enumerate(report.cmc, start=1):
            writer.writerow([r, f"{value:.10g}"])


def write_per_probe_csv(report: EvaluationReport, path) -> None:
    """Per-probe results: 'probe_id,true,predicted,residual_1..C'."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["probe_id", "true", "predicted"]
        header += [f"residual_{i}" for i in range(1, len(report.labels) + 1)]
        writer.writerow(header)
        for probe in report.per_probe:
            row = [probe.index, probe.true_label, probe.predicted]
            row += [f"{v:.10g}" for v in probe.residuals]
            writer.writerow(row)


def write_sweep_csv(sweep: SweepResult, path) -> None:
    """Sweep results as 'sigma,seed,rank_one' rows; per-sigma means appear
    as rows with seed = 'mean'."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sigma", "seed", "rank_one"])
        for entry in sweep.entries:
            writer.writerow([f"{entry.sigma:.10g}", entry.seed, f"{entry.report.rank_one:.10g}"])
        for sigma, mean in sweep.sigma_means:
            writer.writerow([f"{sigma:.10g}", "mean", f"{mean:.10g}"])
