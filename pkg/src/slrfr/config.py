"""Flat key = value experiment configuration.

One line per setting, '#' starts a comment, unknown keys are rejected.
parse_config and serialize_config round-trip; helpers turn a config into
the degradation model, training hyperparameters, and normals source the
pipeline consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import DataFormatError, InvalidArgumentError
from .imageops import DegradationModel, gaussian_blur_kernel, identity_blur_kernel
from .pipeline import METHODS, EllipsoidParams, TrainParams

__all__ = [
    "ExperimentConfig",
    "parse_config",
    "load_config",
    "serialize_config",
    "degradation_from_config",
    "train_params_from_config",
    "normals_source_from_config",
]


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a training run needs, as plain values.

    blur_sigma None means the default of downsample_factor / 2; n_atoms
    "auto" means one atom per extended gallery image; kernel_c accepts a
    number, "auto" (median heuristic), or "cv" (leave-one-out search);
    normals is "ellipsoid" or a path to a saved normal map.
    """

    method: str = "kerslrfr"
    downsample_factor: int = 4
    blur_sigma: float | None = None
    noise_sigma: float = 0.0
    n_atoms: int | str = "auto"
    sparsity: int = 3
    iters: int = 20
    kernel: str = "gaussian"
    kernel_c: float | str = "auto"
    kernel_degree: int = 2
    coupling: float = 1.0
    pca_dim: int = 100
    n_lights: int = 5
    flips: bool = True
    seed: int = 0
    normals: str = "ellipsoid"

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidArgumentError(f"method must be one of {METHODS}, got {self.method!r}")


_BOOL_WORDS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _parse_bool(key: str, raw: str) -> bool:
    try:
        return _BOOL_WORDS[raw.lower()]
    except KeyError:
        raise DataFormatError(f"{key} must be a boolean (true/false), got {raw!r}") from None


def _parse_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise DataFormatError(f"{key} must be an integer, got {raw!r}") from None


def _parse_float(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise DataFormatError(f"{key} must be a number, got {raw!r}") from None


def parse_config(text: str) -> ExperimentConfig:
    """Parse key = value lines into an ExperimentConfig. Later lines
    override earlier ones; keys not present keep their defaults."""
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise DataFormatError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key in ("method", "kernel", "normals"):
            values[key] = raw
        elif key in ("downsample_factor", "sparsity", "iters", "kernel_degree",
                     "pca_dim", "n_lights", "seed"):
            values[key] = _parse_int(key, raw)
        elif key in ("noise_sigma", "coupling"):
            values[key] = _parse_float(key, raw)
        elif key == "blur_sigma":
            values[key] = None if raw.lower() == "default" else _parse_float(key, raw)
        elif key == "n_atoms":
            values[key] = "auto" if raw.lower() == "auto" else _parse_int(key, raw)
        elif key == "kernel_c":
            values[key] = raw if raw.lower() in ("auto", "cv") else _parse_float(key, raw)
        elif key == "flips":
            values[key] = _parse_bool(key, raw)
        else:
            raise DataFormatError(f"line {lineno}: unknown key {key!r}")
    try:
        return ExperimentConfig(**values)
    except InvalidArgumentError as exc:
        raise DataFormatError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        return parse_config(text)
    except DataFormatError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def serialize_config(config: ExperimentConfig) -> str:
    """Write the config back as key = value lines, field order."""
    lines = []
    for f in fields(config):
        value = getattr(config, f.name)
        if value is None:
            value = "default"
        elif isinstance(value, bool):
            value = str(value).lower()
        elif isinstance(value, float):
            value = f"{value:.10g}"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def degradation_from_config(config: ExperimentConfig) -> DegradationModel:
    if config.blur_sigma is None:
        return DegradationModel.default(config.downsample_factor, config.noise_sigma)
    if config.blur_sigma < 0:
        raise InvalidArgumentError(f"blur_sigma must be nonnegative, got {config.blur_sigma}")
    kernel = (
        identity_blur_kernel()
        if config.blur_sigma == 0
        else gaussian_blur_kernel(config.blur_sigma)
    )
    return DegradationModel(kernel, config.downsample_factor, config.noise_sigma)


def train_params_from_config(config: ExperimentConfig) -> TrainParams:
    return TrainParams(
        n_atoms=None if config.n_atoms == "auto" else int(config.n_atoms),
        sparsity=config.sparsity,
        n_iters=config.iters,
        kernel_kind=config.kernel,
        kernel_c=config.kernel_c,
        kernel_degree=config.kernel_degree,
        coupling=config.coupling,
        pca_dim=config.pca_dim,
    )


def normals_source_from_config(config: ExperimentConfig) -> EllipsoidParams | str:
    if config.normals == "ellipsoid":
        return EllipsoidParams()
    return config.normals
