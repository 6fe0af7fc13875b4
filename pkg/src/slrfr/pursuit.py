"""Backend selection and the shared Gram-domain pursuit entry point.

Every sparse coder in this package (omp, komp, joint_komp) is the same greedy
loop over three ingredients: a correlation vector g0, a Gram matrix G, and a
signal energy e0. For explicit atoms those are D^T y, D^T D and ||y||^2; for
kernel dictionaries they are K(z,X)A, A^T K(X,X) A and K(z,z); the joint
HR/LR coder feeds the lambda-weighted block sums. This module owns that loop
and picks the implementation once at import: the compiled extension when it
built, the NumPy twin otherwise. Set SLRFR_PURE_PYTHON=1 (before import) to
force the fallback.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _pursuit_py
from .errors import InvalidArgumentError

__all__ = [
    "BACKEND",
    "DEFAULT_ENERGY_TOL",
    "DEFAULT_RIDGE_SCALE",
    "PursuitResult",
    "SparseCode",
    "gram_pursuit",
]

if os.environ.get("SLRFR_PURE_PYTHON") == "1":
    _impl = _pursuit_py
    BACKEND = "python"
else:
    try:
        from . import _pursuit_cy as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _pursuit_py
        BACKEND = "python"

# early-stop threshold on residual energy, and the relative diagonal ridge
# used when a refit system is numerically singular
DEFAULT_ENERGY_TOL = 1e-12
DEFAULT_RIDGE_SCALE = 1e-8


@dataclass(frozen=True, eq=False)
class PursuitResult:
    """Raw pursuit output.

    order: atom indices in selection order (not sorted).
    coeffs: final refit coefficients, aligned with order.
    energies: residual energy after 0, 1, ... len(order) atoms; starts at e0.
    ridged: True when any refit needed the ridge ladder.
    """

    order: np.ndarray
    coeffs: np.ndarray
    energies: np.ndarray
    ridged: bool

    @property
    def n_selected(self) -> int:
        return int(self.order.shape[0])

    @property
    def final_energy(self) -> float:
        return float(self.energies[-1])


@dataclass(frozen=True, eq=False)
class SparseCode:
    """A sparse coefficient vector over a dictionary of `length` atoms:
    strictly increasing support indices and the values at them."""

    length: int
    support: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if not isinstance(self.length, (int, np.integer)) or self.length < 1:
            raise InvalidArgumentError(f"code length must be a positive integer, got {self.length!r}")
        support = np.asarray(self.support, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        if support.ndim != 1 or values.ndim != 1 or support.shape != values.shape:
            raise InvalidArgumentError(
                f"support and values must be 1-D and aligned, got {support.shape} vs {values.shape}"
            )
        if support.size:
            if support[0] < 0 or support[-1] >= self.length:
                raise InvalidArgumentError(
                    f"support indices must lie in [0, {self.length}), got {support}"
                )
            if np.any(np.diff(support) <= 0):
                raise InvalidArgumentError(f"support must be strictly increasing, got {support}")
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError("code values must be finite")
        support = support.copy()
        support.flags.writeable = False
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "length", int(self.length))
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "values", values)

    @property
    def n_nonzero(self) -> int:
        return int(self.support.shape[0])

    def dense(self) -> np.ndarray:
        out = np.zeros(self.length, dtype=np.float64)
        out[self.support] = self.values
        return out

    @classmethod
    def from_pursuit(cls, result: PursuitResult, length: int) -> "SparseCode":
        perm = np.argsort(result.order, kind="stable")
        return cls(length, result.order[perm], result.coeffs[perm])


def gram_pursuit(
    correlations,
    gram,
    energy: float,
    max_atoms: int,
    *,
    energy_tol: float = DEFAULT_ENERGY_TOL,
    ridge_scale: float = DEFAULT_RIDGE_SCALE,
) -> PursuitResult:
    """Run the greedy pursuit on Gram coordinates.

    correlations: g0, inner products of the signal with every atom.
    gram: G, atom-by-atom inner products (symmetric PSD, not verified).
    energy: e0, squared signal norm; tiny negatives are clamped to 0.
    max_atoms: selection budget, in [1, len(correlations)].

    Stops after max_atoms selections, when the residual energy falls below
    energy_tol, or when every remaining correlation is exactly zero.
    """
    g0 = np.ascontiguousarray(correlations, dtype=np.float64)
    G = np.ascontiguousarray(gram, dtype=np.float64)
    # the compiled backend takes writable memoryviews; cached Grams arrive
    # read-only, so copy those
    if not g0.flags.writeable:
        g0 = g0.copy()
    if not G.flags.writeable:
        G = G.copy()
    if g0.ndim != 1:
        raise InvalidArgumentError(f"correlations must be 1-D, got shape {g0.shape}")
    n = g0.shape[0]
    if G.shape != (n, n):
        raise InvalidArgumentError(
            f"gram must be square {n}x{n} to match correlations, got {G.shape}"
        )
    if not np.all(np.isfinite(g0)) or not np.all(np.isfinite(G)) or not np.isfinite(energy):
        raise InvalidArgumentError("pursuit inputs must be finite")
    if not (1 <= max_atoms <= n):
        raise InvalidArgumentError(f"max_atoms must be in [1, {n}], got {max_atoms}")
    if not (energy_tol >= 0 and ridge_scale >= 0):
        raise InvalidArgumentError("energy_tol and ridge_scale must be nonnegative")
    e0 = max(float(energy), 0.0)
    order, coeffs, energies, ridged = _impl.gram_pursuit_impl(
        g0, G, e0, int(max_atoms), float(energy_tol), float(ridge_scale)
    )
    return PursuitResult(order=order, coeffs=coeffs, energies=energies, ridged=ridged)
