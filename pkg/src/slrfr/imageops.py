"""Grayscale image containers, the blur/downsample/noise degradation chain,
vectorization helpers, and PGM file I/O.

Images are float64 matrices in [0, 1] by convention. Operations that clamp say
so explicitly; everything else is linear and may leave values outside the
range (synthesized relit images can exceed 1 before export, and that is fine
for the downstream linear algebra).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DataFormatError, InvalidArgumentError

__all__ = [
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
]


def _as_image_array(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise InvalidArgumentError(
            f"image data must be a non-empty 2-D array, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("image data contains NaN or infinity")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class GrayImage:
    """A single-channel image: float64 matrix, row-major, read-only.

    Values are nominally intensities in [0, 1] but the container does not
    enforce the range; see the module docstring.
    """

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _as_image_array(self.data))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


def gaussian_blur_kernel(sigma: float) -> np.ndarray:
    """Odd-sized 2-D Gaussian kernel with support 2*ceil(2*sigma)+1 per axis,
    normalized to sum to 1. sigma must be positive."""
    if not (sigma > 0):
        raise InvalidArgumentError(f"blur sigma must be positive, got {sigma}")
    half = int(math.ceil(2.0 * sigma))
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def identity_blur_kernel() -> np.ndarray:
    """The 1x1 kernel that leaves images unchanged."""
    return np.ones((1, 1), dtype=np.float64)


@dataclass(frozen=True, eq=False)
class DegradationModel:
    """Blur followed by block-mean downsampling, with optional additive noise.

    blur_kernel: 2-D nonnegative weights summing to 1, odd size on both axes.
    downsample_factor: block size per axis, >= 1.
    noise_sigma: std of zero-mean Gaussian noise added after downsampling
        (intensity units); 0 disables noise and keeps the chain linear.
    """

    blur_kernel: np.ndarray
    downsample_factor: int
    noise_sigma: float = 0.0

    def __post_init__(self):
        kernel = np.asarray(self.blur_kernel, dtype=np.float64)
        if kernel.ndim != 2 or kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
            raise InvalidArgumentError(
                f"blur kernel must be 2-D with odd dimensions, got shape {kernel.shape}"
            )
        if np.any(kernel < 0) or not np.all(np.isfinite(kernel)):
            raise InvalidArgumentError("blur kernel weights must be finite and nonnegative")
        if abs(kernel.sum() - 1.0) > 1e-12:
            raise InvalidArgumentError(
                f"blur kernel must sum to 1 within 1e-12, got {kernel.sum()!r}"
            )
        kernel = kernel.copy()
        kernel.flags.writeable = False
        object.__setattr__(self, "blur_kernel", kernel)
        if not isinstance(self.downsample_factor, (int, np.integer)) or self.downsample_factor < 1:
            raise InvalidArgumentError(
                f"downsample factor must be a positive integer, got {self.downsample_factor!r}"
            )
        object.__setattr__(self, "downsample_factor", int(self.downsample_factor))
        if not (self.noise_sigma >= 0):
            raise InvalidArgumentError(f"noise sigma must be >= 0, got {self.noise_sigma}")
        object.__setattr__(self, "noise_sigma", float(self.noise_sigma))

    @classmethod
    def default(cls, factor: int, noise_sigma: float = 0.0) -> "DegradationModel":
        """Anti-aliased model for a given factor: Gaussian blur with
        sigma = factor/2, then factor-fold block averaging."""
        if not isinstance(factor, (int, np.integer)) or factor < 1:
            raise InvalidArgumentError(f"downsample factor must be a positive integer, got {factor!r}")
        return cls(gaussian_blur_kernel(factor / 2.0), int(factor), noise_sigma)


def vectorize(img: GrayImage) -> np.ndarray:
    """Column-stack an image into a (rows*cols,) float64 vector."""
    return img.data.flatten(order="F")


def unvectorize(vec: np.ndarray, rows: int, cols: int) -> GrayImage:
    """Inverse of vectorize for the given target shape."""
    v = np.asarray(vec, dtype=np.float64)
    if v.ndim != 1 or v.size != rows * cols:
        raise InvalidArgumentError(
            f"expected a vector of length {rows * cols} for a {rows}x{cols} image, got shape {v.shape}"
        )
    return GrayImage(v.reshape((rows, cols), order="F"))


def stack(images) -> np.ndarray:
    """Stack same-shaped images as columns of a (rows*cols, count) matrix.

    The result is the package-wide sample-matrix convention: float64, one
    vectorized image per column.
    """
    images = list(images)
    if not images:
        raise InvalidArgumentError("cannot stack an empty image list")
    shape = images[0].shape
    for i, img in enumerate(images):
        if img.shape != shape:
            raise InvalidArgumentError(
                f"image {i} has shape {img.shape}, expected {shape} like image 0"
            )
    return np.column_stack([vectorize(img) for img in images])


def blur(img: GrayImage, kernel: np.ndarray) -> GrayImage:
    """2-D convolution with replicate (nearest-edge) padding."""
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
        raise InvalidArgumentError(
            f"blur kernel must be 2-D with odd dimensions, got shape {k.shape}"
        )
    out = ndimage.convolve(img.data, k, mode="nearest")
    return GrayImage(out)


def downsample(img: GrayImage, factor: int) -> GrayImage:
    """Block-mean downsampling to ceil(dims/factor); partial edge blocks
    average over the pixels they actually contain. Linear in the input."""
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise InvalidArgumentError(f"downsample factor must be a positive integer, got {factor!r}")
    factor = int(factor)
    if factor == 1:
        return img
    a = img.data
    r, q = a.shape
    row_edges = np.arange(0, r, factor)
    col_edges = np.arange(0, q, factor)
    sums = np.add.reduceat(np.add.reduceat(a, row_edges, axis=0), col_edges, axis=1)
    row_counts = np.minimum(row_edges + factor, r) - row_edges
    col_counts = np.minimum(col_edges + factor, q) - col_edges
    counts = np.outer(row_counts, col_counts).astype(np.float64)
    return GrayImage(sums / counts)


def add_noise(img: GrayImage, sigma: float, seed: int, clamp: bool = True) -> GrayImage:
    """Add seeded zero-mean Gaussian noise; clamps to [0, 1] by default.
    sigma = 0 returns the input unchanged (no RNG draw)."""
    if not (sigma >= 0):
        raise InvalidArgumentError(f"noise sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return img
    rng = np.random.default_rng(seed)
    noisy = img.data + rng.normal(0.0, sigma, size=img.shape)
    if clamp:
        noisy = np.clip(noisy, 0.0, 1.0)
    return GrayImage(noisy)


def degrade(img: GrayImage, model: DegradationModel, seed: int = 0) -> GrayImage:
    """Apply the full degradation chain: blur, downsample, then (only when
    noise_sigma > 0) seeded Gaussian noise with a clamp to [0, 1]. The
    noiseless chain is linear and applies no clamp."""
    low = downsample(blur(img, model.blur_kernel), model.downsample_factor)
    if model.noise_sigma > 0:
        low = add_noise(low, model.noise_sigma, seed, clamp=True)
    return low


def horizontal_flip(img: GrayImage) -> GrayImage:
    """Mirror the image about its vertical axis."""
    return GrayImage(img.data[:, ::-1])


_PGM_TOKEN = re.compile(rb"^\s*(?:#[^\n]*\n\s*)*(\S+)")


def _read_pgm_tokens(buf: bytes, count: int) -> tuple[list[bytes], int]:
    """Read whitespace/comment-delimited header tokens; returns (tokens, offset)."""
    tokens = []
    pos = 0
    for _ in range(count):
        m = _PGM_TOKEN.match(buf[pos:])
        if m is None:
            raise DataFormatError("truncated PGM header")
        tokens.append(m.group(1))
        pos += m.end()
    return tokens, pos


def read_pgm(path) -> GrayImage:
    """Read a binary (P5) PGM file. Intensities map linearly to [0, 1] by
    dividing by the file's maxval; 16-bit rasters are big-endian per the
    format."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if not buf.startswith(b"P5"):
        raise DataFormatError(f"{path}: not a binary PGM (P5) file")
    try:
        (w_tok, h_tok, max_tok), header_end = _read_pgm_tokens(buf[2:], 3)
    except DataFormatError:
        raise DataFormatError(f"{path}: truncated PGM header") from None
    try:
        width, height, maxval = int(w_tok), int(h_tok), int(max_tok)
    except ValueError:
        raise DataFormatError(f"{path}: malformed PGM header") from None
    if width < 1 or height < 1 or not (0 < maxval < 65536):
        raise DataFormatError(f"{path}: invalid PGM dimensions or maxval")
    # single whitespace byte separates the header from the raster
    offset = 2 + header_end + 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    expected = width * height * dtype.itemsize
    raster = buf[offset : offset + expected]
    if len(raster) != expected:
        raise DataFormatError(f"{path}: PGM raster truncated ({len(raster)} of {expected} bytes)")
    values = np.frombuffer(raster, dtype=dtype).astype(np.float64).reshape(height, width)
    return GrayImage(values / float(maxval))


def write_pgm(img: GrayImage, path, maxval: int = 255) -> None:
    """Write a binary (P5) PGM file. Values are clamped to [0, 1] and scaled
    to maxval; maxval > 255 selects the 16-bit big-endian raster."""
    if not (0 < maxval < 65536):
        raise InvalidArgumentError(f"PGM maxval must be in [1, 65535], got {maxval}")
    scaled = np.rint(np.clip(img.data, 0.0, 1.0) * maxval)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    header = f"P5\n{img.cols} {img.rows}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(scaled.astype(dtype).tobytes())
