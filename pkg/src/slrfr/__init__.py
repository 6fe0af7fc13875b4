"""Low-resolution face recognition with relit galleries and sparse
dictionaries.

The library extends a small high-resolution gallery by synthesizing new
lighting conditions from a Lambertian model, degrades the extended gallery
to probe resolution, and trains one dictionary per subject: linear, kernel,
or joint HR/LR kernel. Probes are classified by minimum reconstruction
residual across the per-class dictionaries.

Typical flow: build a GalleryManifest, call train_model, then evaluate or
noise_sweep; save_model / load_model persist the result. The sparse-coding
core runs on a compiled extension when available (pursuit.BACKEND says
which); set SLRFR_PURE_PYTHON=1 to force the pure-Python twin.
"""

from .errors import (
    DataFormatError,
    DegenerateGeometryError,
    InvalidArgumentError,
    NumericalError,
    SlrfrError,
)
from .imageops import (
    DegradationModel,
    GrayImage,
    add_noise,
    blur,
    degrade,
    downsample,
    gaussian_blur_kernel,
    horizontal_flip,
    identity_blur_kernel,
    read_pgm,
    stack,
    unvectorize,
    vectorize,
    write_pgm,
)
from .jointdict import JointKernelDictionary, classify_joint, joint_komp, joint_train
from .kerneldict import (
    KernelDictionary,
    KernelSpec,
    classify_kernel,
    kernel_ksvd_train,
    kernel_residual,
    komp,
    median_squared_distance,
    select_gaussian_width,
)
from .lineardict import (
    Dictionary,
    ResidualReport,
    classify_linear,
    ksvd_train,
    omp,
    project_residual,
)
from .pipeline import (
    METHODS,
    EllipsoidParams,
    EvaluationReport,
    GalleryManifest,
    PcaBasis,
    SweepResult,
    TrainParams,
    TrainedModel,
    classify_image,
    compute_pca_basis,
    evaluate,
    extract_features,
    noise_sweep,
    train_model,
    train_model_from_images,
    write_cmc_csv,
    write_per_probe_csv,
    write_sweep_csv,
)
from .pursuit import BACKEND, PursuitResult, SparseCode, gram_pursuit
from .relighting import (
    AlbedoMap,
    LightDirection,
    NormalField,
    default_light_directions,
    ellipsoid_normal_field,
    estimate_albedo,
    estimate_light_source,
    extend_gallery,
    initial_albedo,
    load_light_directions,
    load_normal_field,
    refine_albedo_mmse,
    render,
    save_normal_field,
    synthesize_basis_images,
)
from .serialize import load_dictionary, load_model, save_dictionary, save_model

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "SlrfrError",
    "InvalidArgumentError",
    "DataFormatError",
    "NumericalError",
    "DegenerateGeometryError",
    # images and degradation
    "GrayImage",
    "DegradationModel",
    "gaussian_blur_kernel",
    "identity_blur_kernel",
    "vectorize",
    "unvectorize",
    "stack",
    "blur",
    "downsample",
    "add_noise",
    "degrade",
    "horizontal_flip",
    "read_pgm",
    "write_pgm",
    # relighting
    "LightDirection",
    "NormalField",
    "AlbedoMap",
    "default_light_directions",
    "ellipsoid_normal_field",
    "estimate_light_source",
    "initial_albedo",
    "refine_albedo_mmse",
    "estimate_albedo",
    "render",
    "synthesize_basis_images",
    "extend_gallery",
    "save_normal_field",
    "load_normal_field",
    "load_light_directions",
    # sparse coding
    "BACKEND",
    "gram_pursuit",
    "PursuitResult",
    "SparseCode",
    # linear dictionaries
    "Dictionary",
    "ResidualReport",
    "omp",
    "ksvd_train",
    "project_residual",
    "classify_linear",
    # kernel dictionaries
    "KernelSpec",
    "KernelDictionary",
    "komp",
    "kernel_residual",
    "kernel_ksvd_train",
    "classify_kernel",
    "median_squared_distance",
    "select_gaussian_width",
    # joint dictionaries
    "JointKernelDictionary",
    "joint_komp",
    "joint_train",
    "classify_joint",
    # pipeline
    "METHODS",
    "EllipsoidParams",
    "GalleryManifest",
    "PcaBasis",
    "TrainParams",
    "TrainedModel",
    "EvaluationReport",
    "SweepResult",
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
    # persistence
    "save_dictionary",
    "load_dictionary",
    "save_model",
    "load_model",
]
