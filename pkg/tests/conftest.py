"""Session-scoped fixtures for the synthetic recognition benchmark, shared
by the pipeline tests and the acceptance suite (training three models is the
expensive part, so it happens once)."""

import time

import numpy as np
import pytest

from slrfr.imageops import DegradationModel
from slrfr.pipeline import TrainParams, train_model_from_images
from slrfr.relighting import (
    LightDirection,
    ellipsoid_normal_field,
    estimate_albedo,
    render,
)

from helpers import planted_gallery

HELD_OUT_ANGLES = ((15.0, 10.0), (-20.0, 15.0), (25.0, -20.0))


@pytest.fixture(scope="session")
def benchmark_gallery():
    return planted_gallery(n_classes=10, rows=32, cols=28, seed=1)


@pytest.fixture(scope="session")
def benchmark_probes(benchmark_gallery):
    """Three held-out lighting renders per class: estimate each prototype's
    albedo the same way the pipeline does, then render directions the
    training bank never saw. Probes stay at HR; evaluate degrades them."""
    rows, cols = benchmark_gallery[0][1][0].shape
    normals = ellipsoid_normal_field(rows, cols)
    probes = []
    for label, images in benchmark_gallery:
        _, albedo = estimate_albedo(images[0], normals)
        for az, el in HELD_OUT_ANGLES:
            probe = render(albedo, normals, LightDirection.from_angles(az, el))
            probes.append((probe, label))
    return probes


@pytest.fixture(scope="session")
def benchmark_models(benchmark_gallery):
    """One trained model per method on the planted benchmark: 10 classes,
    5 lights + flips (10 extended images each), 4x noiseless degradation.
    Training wall time is recorded for the end-to-end runtime bound."""
    degradation = DegradationModel.default(4)
    params = TrainParams(
        sparsity=3, n_iters=10, kernel_kind="gaussian", kernel_c="auto", pca_dim=40
    )
    models = {}
    start = time.perf_counter()
    for method in ("slrfr", "kerslrfr", "jointkerslrfr"):
        models[method] = train_model_from_images(
            benchmark_gallery,
            method,
            degradation,
            params,
            seed=7,
            n_lights=5,
            include_flips=True,
        )
    return {
        "models": models,
        "train_seconds": time.perf_counter() - start,
        "degradation": degradation,
        "params": params,
        "seed": 7,
    }
