"""Lambertian relighting: light-source and albedo estimation from a single
frontal-ish image, deterministic re-rendering under a preset direction bank,
and gallery extension.

The reflectance model is X[i,j] = albedo[i,j] * max(n[i,j]^T s, 0) with unit
surface normals n and a unit light direction s. Estimation runs in three
steps: least-squares light fit, pointwise albedo division with a shadow fill
rule, then locally adaptive Wiener smoothing of the albedo. Re-rendering the
smoothed albedo under several directions (plus horizontal flips) turns one
gallery image per subject into many.

No real 3-D face data ships with the package; normals come from either a
parametric ellipsoid head approximation or a user-supplied normal-map file.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DataFormatError, DegenerateGeometryError, InvalidArgumentError
from .imageops import GrayImage, horizontal_flip

__all__ = [
    "LightDirection",
    "NormalField",
    "AlbedoMap",
    "DEFAULT_LIGHT_ANGLES",
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
    "parse_light_directions",
    "load_light_directions",
]

logger = logging.getLogger(__name__)

SHADOW_EPS = 1e-3
MMSE_WINDOW = 5

# Azimuth/elevation grid for the synthesized direction bank, degrees. The
# frontal direction comes first so small n_lights values stay face-on heavy.
DEFAULT_LIGHT_ANGLES: tuple[tuple[float, float], ...] = (
    (0.0, 0.0),
    (-40.0, 0.0),
    (40.0, 0.0),
    (0.0, -40.0),
    (0.0, 40.0),
    (-40.0, -40.0),
    (-40.0, 40.0),
    (40.0, -40.0),
    (40.0, 40.0),
)


@dataclass(frozen=True, eq=False)
class LightDirection:
    """Unit 3-vector pointing from the surface toward the light, in camera
    coordinates: x right, y up, z out of the image toward the viewer."""

    vec: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vec, dtype=np.float64)
        if v.shape != (3,) or not np.all(np.isfinite(v)):
            raise InvalidArgumentError(f"light direction must be a finite 3-vector, got {v!r}")
        norm = float(np.linalg.norm(v))
        if abs(norm - 1.0) > 1e-9:
            raise InvalidArgumentError(
                f"light direction must be unit length within 1e-9 (norm {norm}); "
                "use LightDirection.from_vector to normalize"
            )
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "vec", v)

    @classmethod
    def from_vector(cls, v) -> "LightDirection":
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (3,) or not np.all(np.isfinite(v)):
            raise InvalidArgumentError(f"light direction must be a finite 3-vector, got {v!r}")
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            raise InvalidArgumentError("cannot normalize a zero light vector")
        return cls(v / norm)

    @classmethod
    def from_angles(cls, azimuth_deg: float, elevation_deg: float) -> "LightDirection":
        """Azimuth rotates about the vertical axis (positive toward +x),
        elevation lifts toward +y; (0, 0) is the frontal direction +z."""
        az = math.radians(azimuth_deg)
        el = math.radians(elevation_deg)
        return cls.from_vector(
            [math.cos(el) * math.sin(az), math.sin(el), math.cos(el) * math.cos(az)]
        )


def default_light_directions() -> tuple[LightDirection, ...]:
    """The nine-direction bank from DEFAULT_LIGHT_ANGLES."""
    return tuple(LightDirection.from_angles(az, el) for az, el in DEFAULT_LIGHT_ANGLES)


@dataclass(frozen=True, eq=False)
class NormalField:
    """Per-pixel unit surface normals, shape (rows, cols, 3)."""

    vectors: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 3 or v.shape[2] != 3 or v.shape[0] < 1 or v.shape[1] < 1:
            raise InvalidArgumentError(
                f"normal field must have shape (rows, cols, 3), got {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("normal field contains NaN or infinity")
        norms = np.linalg.norm(v, axis=2)
        worst = float(np.abs(norms - 1.0).max())
        if worst > 1e-9:
            raise InvalidArgumentError(
                f"normals must be unit length within 1e-9 (worst deviation {worst:.3e})"
            )
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "vectors", v)

    @property
    def rows(self) -> int:
        return self.vectors.shape[0]

    @property
    def cols(self) -> int:
        return self.vectors.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.vectors.shape[:2]


@dataclass(frozen=True, eq=False)
class AlbedoMap:
    """Per-pixel nonnegative reflectance."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise InvalidArgumentError(f"albedo must be a non-empty 2-D array, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("albedo contains NaN or infinity")
        if v.min() < 0:
            raise InvalidArgumentError(f"albedo must be nonnegative, min value {v.min()}")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def ellipsoid_normal_field(
    rows: int,
    cols: int,
    semi_x: float = 1.0,
    semi_y: float = 1.0,
    depth: float = 0.55,
    extent: float = 0.5,
) -> NormalField:
    """Normals of the front of an ellipsoid (x/semi_x)^2 + (y/semi_y)^2 +
    (z/depth)^2 = 1, sampled on a grid covering [-extent, extent]^2 of the
    parameter square.

    The defaults keep every normal within ~29 degrees of frontal, so all nine
    default light directions stay shadow-free. extent must satisfy
    2*extent^2 < 1 so the visible patch stays on the front of the surface.
    """
    if rows < 1 or cols < 1:
        raise InvalidArgumentError(f"normal field dims must be positive, got {rows}x{cols}")
    if not (semi_x > 0 and semi_y > 0 and depth > 0):
        raise InvalidArgumentError("ellipsoid semi-axes must be positive")
    if not (0 < extent and 2 * extent**2 < 1):
        raise InvalidArgumentError(
            f"extent must satisfy 0 < extent < sqrt(1/2), got {extent}"
        )
    # pixel centers; v points up, so row 0 (top of image) gets +v
    u = extent * (2.0 * (np.arange(cols) + 0.5) / cols - 1.0)
    v = extent * (1.0 - 2.0 * (np.arange(rows) + 0.5) / rows)
    uu, vv = np.meshgrid(u, v)
    ww = np.sqrt(1.0 - uu**2 - vv**2)
    n = np.stack([uu / semi_x, vv / semi_y, ww / depth], axis=2)
    n /= np.linalg.norm(n, axis=2, keepdims=True)
    return NormalField(n)


def _check_shapes(img_shape, normals: NormalField, what: str):
    if img_shape != normals.shape:
        raise InvalidArgumentError(
            f"{what} shape {img_shape} does not match normal field shape {normals.shape}"
        )


def estimate_light_source(img: GrayImage, normals: NormalField) -> LightDirection:
    """Least-squares light direction: the unique minimizer of
    sum_ij (X[i,j] - n[i,j]^T s)^2, normalized to unit length.

    The 3x3 normal scatter matrix must be well-conditioned; a planar or
    otherwise degenerate field raises DegenerateGeometryError.
    """
    _check_shapes(img.shape, normals, "image")
    n = normals.vectors
    scatter = np.einsum("ijk,ijl->kl", n, n)
    rhs = np.einsum("ij,ijk->k", img.data, n)
    eigvals = np.linalg.eigvalsh(scatter)
    if eigvals[0] < 1e-12 * max(eigvals[-1], 1e-300):
        raise DegenerateGeometryError(
            "normal field is too degenerate for light estimation "
            f"(scatter eigenvalues {eigvals})"
        )
    s = np.linalg.solve(scatter, rhs)
    if np.linalg.norm(s) == 0.0:
        raise DegenerateGeometryError("light estimate vanished (all-zero image?)")
    return LightDirection.from_vector(s)


def initial_albedo(
    img: GrayImage,
    normals: NormalField,
    s: LightDirection,
    shadow_eps: float = SHADOW_EPS,
) -> AlbedoMap:
    """Pointwise albedo X / (n^T s). Pixels with |n^T s| < shadow_eps are
    flagged and filled with the 3x3 median of valid neighbors (global median
    of valid pixels when a flagged pixel has no valid neighbor). Output is
    clamped to >= 0."""
    _check_shapes(img.shape, normals, "image")
    den = normals.vectors @ s.vec
    valid = np.abs(den) >= shadow_eps
    rho = np.zeros_like(img.data)
    np.divide(img.data, den, out=rho, where=valid)
    n_flagged = int((~valid).sum())
    if n_flagged:
        logger.info("initial_albedo: %d near-shadow pixels filled by neighborhood median", n_flagged)
        global_median = float(np.median(rho[valid])) if valid.any() else 0.0
        rows, cols = rho.shape
        filled = rho.copy()
        for i, j in zip(*np.nonzero(~valid)):
            block = np.s_[max(i - 1, 0) : i + 2, max(j - 1, 0) : j + 2]
            neighbors = rho[block][valid[block]]
            filled[i, j] = float(np.median(neighbors)) if neighbors.size else global_median
        rho = filled
    return AlbedoMap(np.maximum(rho, 0.0))


def refine_albedo_mmse(rho0: AlbedoMap, window: int = MMSE_WINDOW) -> AlbedoMap:
    """Locally adaptive Wiener shrinkage toward the local mean.

    With local mean mu and variance var over a window x window neighborhood
    and noise variance v_n = median of the local variances, each pixel maps to
    mu + max(var - v_n, 0) / max(var, eps) * (rho0 - mu). Smooth regions
    collapse to their mean, detailed regions pass through; the output never
    moves further from mu than the input.
    """
    if window < 1 or window % 2 == 0:
        raise InvalidArgumentError(f"window must be odd and positive, got {window}")
    x = rho0.values
    mu = ndimage.uniform_filter(x, size=window, mode="nearest")
    var = ndimage.uniform_filter(x * x, size=window, mode="nearest") - mu * mu
    var = np.maximum(var, 0.0)
    v_n = float(np.median(var))
    gain = np.maximum(var - v_n, 0.0) / np.maximum(var, 1e-12)
    out = mu + gain * (x - mu)
    return AlbedoMap(np.maximum(out, 0.0))


def estimate_albedo(img: GrayImage, normals: NormalField) -> tuple[LightDirection, AlbedoMap]:
    """Full estimation chain for one image: light fit, pointwise albedo,
    Wiener refinement. Returns (light, refined albedo)."""
    s = estimate_light_source(img, normals)
    return s, refine_albedo_mmse(initial_albedo(img, normals, s))


def render(albedo: AlbedoMap, normals: NormalField, s: LightDirection) -> GrayImage:
    """Lambertian forward model: albedo * max(n^T s, 0). Values are kept
    unclamped; clamping happens only on image export."""
    _check_shapes(albedo.shape, normals, "albedo")
    shading = np.maximum(normals.vectors @ s.vec, 0.0)
    return GrayImage(albedo.values * shading)


def synthesize_basis_images(
    albedo: AlbedoMap, normals: NormalField, directions
) -> list[GrayImage]:
    """Render the albedo under exactly nine directions. In the shadow-free
    regime these nine images span every render of the same surface."""
    directions = list(directions)
    if len(directions) != 9:
        raise InvalidArgumentError(f"expected exactly 9 light directions, got {len(directions)}")
    return [render(albedo, normals, s) for s in directions]


def extend_gallery(
    img: GrayImage,
    normals: NormalField,
    n_lights: int = 5,
    include_flips: bool = True,
    directions: tuple[LightDirection, ...] | None = None,
) -> list[GrayImage]:
    """Estimate light and albedo from one image, then synthesize the first
    n_lights directions of the bank, plus horizontal flips when requested.
    Output count is n_lights * (1 + include_flips). Extension works entirely
    at the input resolution; downstream degradation never feeds back here."""
    if directions is None:
        directions = default_light_directions()
    else:
        directions = tuple(directions)
    if not (1 <= n_lights <= len(directions)):
        raise InvalidArgumentError(
            f"n_lights must be in [1, {len(directions)}], got {n_lights}"
        )
    _, albedo = estimate_albedo(img, normals)
    images = [render(albedo, normals, s) for s in directions[:n_lights]]
    if include_flips:
        images.extend(horizontal_flip(im) for im in images[:n_lights])
    return images


_NORMAL_MAGIC = b"NRM3\n"


def save_normal_field(normals: NormalField, path) -> None:
    """Write a normal map: magic line, 'rows cols' line, then row-major
    float32 little-endian 3-vectors."""
    with open(path, "wb") as fh:
        fh.write(_NORMAL_MAGIC)
        fh.write(f"{normals.rows} {normals.cols}\n".encode("ascii"))
        fh.write(normals.vectors.astype("<f4").tobytes())


def load_normal_field(path) -> NormalField:
    """Read a normal map written by save_normal_field. Vectors are
    renormalized to absorb float32 rounding; zero vectors are rejected."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if not buf.startswith(_NORMAL_MAGIC):
        raise DataFormatError(f"{path}: not a normal map file")
    end = buf.find(b"\n", len(_NORMAL_MAGIC))
    if end < 0:
        raise DataFormatError(f"{path}: truncated normal map header")
    try:
        rows, cols = map(int, buf[len(_NORMAL_MAGIC) : end].split())
    except ValueError:
        raise DataFormatError(f"{path}: malformed normal map dimensions") from None
    if rows < 1 or cols < 1:
        raise DataFormatError(f"{path}: invalid normal map dimensions {rows}x{cols}")
    expected = rows * cols * 3 * 4
    raw = buf[end + 1 : end + 1 + expected]
    if len(raw) != expected:
        raise DataFormatError(
            f"{path}: normal map raster truncated ({len(raw)} of {expected} bytes)"
        )
    v = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(rows, cols, 3)
    norms = np.linalg.norm(v, axis=2)
    if norms.min() < 1e-6:
        raise DataFormatError(f"{path}: normal map contains near-zero vectors")
    return NormalField(v / norms[:, :, None])


def parse_light_directions(text: str) -> tuple[LightDirection, ...]:
    """Parse 'azimuth_deg elevation_deg' lines; '#' starts a comment."""
    directions = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        parts = body.split()
        if len(parts) != 2:
            raise DataFormatError(
                f"line {lineno}: expected 'azimuth_deg elevation_deg', got {line.strip()!r}"
            )
        try:
            az, el = float(parts[0]), float(parts[1])
        except ValueError:
            raise DataFormatError(f"line {lineno}: non-numeric angles in {line.strip()!r}") from None
        directions.append(LightDirection.from_angles(az, el))
    if not directions:
        raise DataFormatError("no light directions found")
    return tuple(directions)


def load_light_directions(path) -> tuple[LightDirection, ...]:
    with open(path, "r", encoding="ascii") as fh:
        text = fh.read()
    try:
        return parse_light_directions(text)
    except DataFormatError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
