"""Binary file formats for dictionaries and trained models.

All formats are little-endian with a 4-byte ASCII magic and a u32 version.
Arrays are raw float64; matrices are stored column-major so a saved
dictionary's column layout matches how the code consumes it. Readers
validate magic, version, and exact length, raising DataFormatError on any
mismatch so truncated or foreign files fail loudly. objective_path is
training telemetry and is not persisted.

Magics: SLRD linear dictionary, KSLD kernel dictionary, JKLD joint kernel
dictionary, SLRM trained model container.
"""

from __future__ import annotations

import io
import struct

import numpy as np

from .errors import DataFormatError
from .imageops import DegradationModel
from .jointdict import JointKernelDictionary
from .kerneldict import KERNEL_KINDS, KernelDictionary, KernelSpec
from .lineardict import Dictionary
from .pipeline import PcaBasis, TrainedModel

__all__ = [
    "dictionary_to_bytes",
    "dictionary_from_bytes",
    "save_dictionary",
    "load_dictionary",
    "model_to_bytes",
    "model_from_bytes",
    "save_model",
    "load_model",
]

MAGIC_LINEAR = b"SLRD"
MAGIC_KERNEL = b"KSLD"
MAGIC_JOINT = b"JKLD"
MAGIC_MODEL = b"SLRM"
FORMAT_VERSION = 1

_METHOD_CODES = {"slrfr": 1, "kerslrfr": 2, "jointkerslrfr": 3}
_METHOD_NAMES = {v: k for k, v in _METHOD_CODES.items()}
_KERNEL_CODES = {kind: i + 1 for i, kind in enumerate(KERNEL_KINDS)}
_KERNEL_NAMES = {v: k for k, v in _KERNEL_CODES.items()}


class _Reader:
    """Cursor over a bytes payload; every read checks remaining length."""

    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self._pos + n > len(self._data):
            raise DataFormatError("file is truncated")
        out = self._data[self._pos : self._pos + n]
        self._pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def text(self) -> str:
        raw = self.take(self.u32())
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DataFormatError(f"invalid UTF-8 string: {exc}") from None

    def matrix(self, rows: int, cols: int) -> np.ndarray:
        raw = self.take(rows * cols * 8)
        # stored column-major
        flat = np.frombuffer(raw, dtype="<f8")
        return np.ascontiguousarray(flat.reshape((rows, cols), order="F"))

    def vector(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take(n * 8), dtype="<f8").astype(np.float64)

    def expect_end(self) -> None:
        if self._pos != len(self._data):
            raise DataFormatError(
                f"{len(self._data) - self._pos} unexpected trailing bytes"
            )


def _put_u8(buf: io.BytesIO, v: int) -> None:
    buf.write(struct.pack("<B", v))


def _put_u32(buf: io.BytesIO, v: int) -> None:
    buf.write(struct.pack("<I", v))


def _put_u64(buf: io.BytesIO, v: int) -> None:
    buf.write(struct.pack("<Q", v))


def _put_f64(buf: io.BytesIO, v: float) -> None:
    buf.write(struct.pack("<d", v))


def _put_text(buf: io.BytesIO, s: str) -> None:
    raw = s.encode("utf-8")
    _put_u32(buf, len(raw))
    buf.write(raw)


def _put_matrix(buf: io.BytesIO, m: np.ndarray) -> None:
    buf.write(np.asarray(m, dtype="<f8").tobytes(order="F"))


def _put_vector(buf: io.BytesIO, v: np.ndarray) -> None:
    buf.write(np.asarray(v, dtype="<f8").tobytes())


def _check_header(reader: _Reader, expected_magic: bytes) -> None:
    magic = reader.take(4)
    if magic != expected_magic:
        raise DataFormatError(
            f"bad magic {magic!r}, expected {expected_magic.decode('ascii')!r}"
        )
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise DataFormatError(f"unsupported format version {version}")


def _put_kernel(buf: io.BytesIO, kernel: KernelSpec) -> None:
    _put_u8(buf, _KERNEL_CODES[kernel.kind])
    _put_f64(buf, kernel.c)
    _put_u32(buf, kernel.degree)


def _read_kernel(reader: _Reader) -> KernelSpec:
    code = reader.u8()
    kind = _KERNEL_NAMES.get(code)
    if kind is None:
        raise DataFormatError(f"unknown kernel code {code}")
    c = reader.f64()
    degree = reader.u32()
    return KernelSpec(kind, c, degree)


def dictionary_to_bytes(d) -> bytes:
    """Serialize a linear, kernel, or joint dictionary; the magic records
    which."""
    buf = io.BytesIO()
    if isinstance(d, Dictionary):
        buf.write(MAGIC_LINEAR)
        _put_u32(buf, FORMAT_VERSION)
        _put_u32(buf, d.dim)
        _put_u32(buf, d.n_atoms)
        _put_text(buf, d.class_label)
        _put_matrix(buf, d.atoms)
    elif isinstance(d, KernelDictionary):
        buf.write(MAGIC_KERNEL)
        _put_u32(buf, FORMAT_VERSION)
        _put_kernel(buf, d.kernel)
        _put_u32(buf, d.dim)
        _put_u32(buf, d.n_samples)
        _put_u32(buf, d.n_atoms)
        _put_text(buf, d.class_label)
        _put_matrix(buf, d.base_samples)
        _put_matrix(buf, d.coefficients)
    elif isinstance(d, JointKernelDictionary):
        buf.write(MAGIC_JOINT)
        _put_u32(buf, FORMAT_VERSION)
        _put_f64(buf, d.coupling)
        _put_kernel(buf, d.kernel_hr)
        _put_kernel(buf, d.kernel_lr)
        _put_u32(buf, d.dim_hr)
        _put_u32(buf, d.dim_lr)
        _put_u32(buf, d.n_samples)
        _put_u32(buf, d.n_atoms)
        _put_text(buf, d.class_label)
        _put_matrix(buf, d.hr_samples)
        _put_matrix(buf, d.lr_samples)
        _put_matrix(buf, d.coeff_hr)
        _put_matrix(buf, d.coeff_lr)
    else:
        raise DataFormatError(f"cannot serialize {type(d).__name__}")
    return buf.getvalue()


def _dictionary_from_reader(reader: _Reader, magic: bytes):
    if magic == MAGIC_LINEAR:
        dim = reader.u32()
        n_atoms = reader.u32()
        label = reader.text()
        atoms = reader.matrix(dim, n_atoms)
        return Dictionary(atoms, class_label=label)
    if magic == MAGIC_KERNEL:
        kernel = _read_kernel(reader)
        dim = reader.u32()
        n_samples = reader.u32()
        n_atoms = reader.u32()
        label = reader.text()
        base = reader.matrix(dim, n_samples)
        coeff = reader.matrix(n_samples, n_atoms)
        return KernelDictionary(base, coeff, kernel, class_label=label)
    if magic == MAGIC_JOINT:
        coupling = reader.f64()
        kernel_hr = _read_kernel(reader)
        kernel_lr = _read_kernel(reader)
        dim_hr = reader.u32()
        dim_lr = reader.u32()
        n_samples = reader.u32()
        n_atoms = reader.u32()
        label = reader.text()
        hr = reader.matrix(dim_hr, n_samples)
        lr = reader.matrix(dim_lr, n_samples)
        coeff_hr = reader.matrix(n_samples, n_atoms)
        coeff_lr = reader.matrix(n_samples, n_atoms)
        return JointKernelDictionary(
            hr, lr, coeff_hr, coeff_lr, kernel_hr, kernel_lr, coupling, class_label=label
        )
    raise DataFormatError(f"bad magic {magic!r}")


def dictionary_from_bytes(data: bytes):
    reader = _Reader(data)
    magic = reader.take(4)
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise DataFormatError(f"unsupported format version {version}")
    d = _dictionary_from_reader(reader, magic)
    reader.expect_end()
    return d


def save_dictionary(d, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dictionary_to_bytes(d))


def load_dictionary(path):
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        return dictionary_from_bytes(data)
    except DataFormatError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def _put_pca(buf: io.BytesIO, basis: PcaBasis) -> None:
    _put_u32(buf, basis.dim)
    _put_u32(buf, basis.n_components)
    _put_vector(buf, basis.mean)
    _put_matrix(buf, basis.components)


def _read_pca(reader: _Reader) -> PcaBasis:
    dim = reader.u32()
    p = reader.u32()
    mean = reader.vector(dim)
    components = reader.matrix(dim, p)
    return PcaBasis(mean, components)


def model_to_bytes(model: TrainedModel) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC_MODEL)
    _put_u32(buf, FORMAT_VERSION)
    _put_u8(buf, _METHOD_CODES[model.method])
    _put_u32(buf, model.sparsity)
    kernel = model.degradation.blur_kernel
    _put_u32(buf, kernel.shape[0])
    _put_u32(buf, kernel.shape[1])
    _put_matrix(buf, kernel)
    _put_u32(buf, model.degradation.downsample_factor)
    _put_f64(buf, model.degradation.noise_sigma)
    _put_u32(buf, model.hr_shape[0])
    _put_u32(buf, model.hr_shape[1])
    _put_u32(buf, model.lr_shape[0])
    _put_u32(buf, model.lr_shape[1])
    _put_u8(buf, 1 + (model.pca_hr is not None))
    _put_pca(buf, model.pca_lr)
    if model.pca_hr is not None:
        _put_pca(buf, model.pca_hr)
    _put_u32(buf, model.n_classes)
    for d in model.dictionaries:
        blob = dictionary_to_bytes(d)
        _put_u64(buf, len(blob))
        buf.write(blob)
    _put_text(buf, model.config_text)
    return buf.getvalue()


def model_from_bytes(data: bytes) -> TrainedModel:
    reader = _Reader(data)
    _check_header(reader, MAGIC_MODEL)
    method_code = reader.u8()
    method = _METHOD_NAMES.get(method_code)
    if method is None:
        raise DataFormatError(f"unknown method code {method_code}")
    sparsity = reader.u32()
    krows = reader.u32()
    kcols = reader.u32()
    blur_kernel = reader.matrix(krows, kcols)
    factor = reader.u32()
    noise_sigma = reader.f64()
    degradation = DegradationModel(blur_kernel, factor, noise_sigma)
    hr_shape = (reader.u32(), reader.u32())
    lr_shape = (reader.u32(), reader.u32())
    n_pca = reader.u8()
    if n_pca not in (1, 2):
        raise DataFormatError(f"model must store 1 or 2 PCA bases, found {n_pca}")
    pca_lr = _read_pca(reader)
    pca_hr = _read_pca(reader) if n_pca == 2 else None
    n_classes = reader.u32()
    dictionaries = []
    for _ in range(n_classes):
        blob = reader.take(reader.u64())
        dictionaries.append(dictionary_from_bytes(blob))
    config_text = reader.text()
    reader.expect_end()
    return TrainedModel(
        method=method,
        labels=tuple(d.class_label for d in dictionaries),
        dictionaries=tuple(dictionaries),
        degradation=degradation,
        pca_lr=pca_lr,
        pca_hr=pca_hr,
        hr_shape=hr_shape,
        lr_shape=lr_shape,
        sparsity=sparsity,
        config_text=config_text,
    )


def save_model(model: TrainedModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(model))


def load_model(path) -> TrainedModel:
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        return model_from_bytes(data)
    except DataFormatError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
