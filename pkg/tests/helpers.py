"""Shared test utilities: synthetic images, galleries, and small random
problem generators."""

import numpy as np
from scipy.ndimage import gaussian_filter

from slrfr.imageops import GrayImage


def smooth_image(rng, rows=16, cols=14, lo=0.25, hi=0.95, smoothing=1.5):
    """Random smooth positive image in [lo, hi]; smooth enough that albedo
    estimation and MMSE filtering behave like they would on a face crop."""
    base = gaussian_filter(rng.random((rows, cols)), smoothing)
    span = np.ptp(base)
    if span < 1e-12:
        base = np.full((rows, cols), 0.5 * (lo + hi))
    else:
        base = lo + (hi - lo) * (base - base.min()) / span
    return GrayImage(base)


def random_unit_dictionary(rng, dim, n_atoms):
    D = rng.standard_normal((dim, n_atoms))
    D /= np.linalg.norm(D, axis=0)
    return D


def random_samples(rng, dim, count, scale=1.0):
    return scale * rng.standard_normal((dim, count))


def planted_gallery(n_classes=10, rows=32, cols=28, seed=0):
    """One smooth HR prototype per class, distinct by construction."""
    return [
        (f"subject{i:02d}", [smooth_image(np.random.default_rng(seed * 1000 + i), rows, cols)])
        for i in range(n_classes)
    ]
