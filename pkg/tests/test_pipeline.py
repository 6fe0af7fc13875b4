"""Pipeline orchestration: PCA, manifests, training, evaluation, the noise
sweep, and the CSV writers."""

import csv

import numpy as np
import pytest

from slrfr.errors import DataFormatError, InvalidArgumentError
from slrfr.imageops import DegradationModel, GrayImage, degrade, write_pgm
from slrfr.pipeline import (
    EllipsoidParams,
    GalleryManifest,
    TrainParams,
    compute_pca_basis,
    evaluate,
    extract_features,
    noise_sweep,
    parse_manifest,
    train_model,
    train_model_from_images,
    classify_image,
    write_cmc_csv,
    write_per_probe_csv,
    write_sweep_csv,
)

from helpers import planted_gallery, random_samples, smooth_image


@pytest.fixture(scope="module")
def tiny_gallery():
    return planted_gallery(n_classes=3, rows=16, cols=14, seed=2)


@pytest.fixture(scope="module")
def tiny_model(tiny_gallery):
    return train_model_from_images(
        tiny_gallery, "slrfr", DegradationModel.default(2),
        TrainParams(sparsity=2, n_iters=4, pca_dim=24), seed=0,
    )


class TestPca:
    def test_components_orthonormal_and_ordered(self):
        rng = np.random.default_rng(0)
        X = random_samples(rng, 12, 40)
        basis = compute_pca_basis(X, 6)
        assert basis.components.shape == (12, 6)
        assert np.allclose(basis.components.T @ basis.components, np.eye(6), atol=1e-10)
        # variance captured per component is non-increasing
        proj = extract_features(basis, X)
        variances = proj.var(axis=1)
        assert np.all(np.diff(variances) <= 1e-9)

    def test_sign_convention(self):
        rng = np.random.default_rng(1)
        X = random_samples(rng, 10, 30)
        basis = compute_pca_basis(X, 5)
        for k in range(5):
            col = basis.components[:, k]
            assert col[np.argmax(np.abs(col))] > 0

    def test_mean_centering(self):
        rng = np.random.default_rng(2)
        X = random_samples(rng, 8, 20) + 5.0
        basis = compute_pca_basis(X, 3)
        feats = extract_features(basis, basis.mean[:, None])
        assert np.allclose(feats, 0.0, atol=1e-10)

    def test_reconstruction_improves_with_p(self):
        rng = np.random.default_rng(3)
        X = random_samples(rng, 16, 50)
        errs = []
        for p in (2, 6, 12):
            basis = compute_pca_basis(X, p)
            feats = extract_features(basis, X)
            recon = basis.components @ feats + basis.mean[:, None]
            errs.append(float(((X - recon) ** 2).sum()))
        assert errs[0] > errs[1] > errs[2]

    def test_rejects_bad_p(self):
        rng = np.random.default_rng(4)
        X = random_samples(rng, 6, 10)
        with pytest.raises(InvalidArgumentError):
            compute_pca_basis(X, 0)
        with pytest.raises(InvalidArgumentError):
            compute_pca_basis(X, 7)

    def test_extract_features_checks_dim(self):
        rng = np.random.default_rng(5)
        basis = compute_pca_basis(random_samples(rng, 6, 10), 3)
        with pytest.raises(InvalidArgumentError):
            extract_features(basis, random_samples(rng, 7, 2))


class TestManifest:
    def test_parse_groups_by_label(self):
        text = "# gallery\nalice a1.pgm\nbob b1.pgm\nalice a2.pgm\n"
        classes = parse_manifest(text)
        assert classes == (("alice", ("a1.pgm", "a2.pgm")), ("bob", ("b1.pgm",)))

    def test_parse_rejects_bad_lines(self):
        with pytest.raises(DataFormatError):
            parse_manifest("just-a-label\n")

    def test_parse_rejects_empty(self):
        with pytest.raises(DataFormatError):
            parse_manifest("# nothing here\n")

    def test_paths_may_contain_spaces(self):
        classes = parse_manifest("a /tmp/dir with space/img.pgm\n")
        assert classes[0][1] == ("/tmp/dir with space/img.pgm",)

    def test_gallery_manifest_validation(self):
        with pytest.raises(InvalidArgumentError):
            GalleryManifest(classes=())
        with pytest.raises(InvalidArgumentError):
            GalleryManifest(classes=(("a", ("x.pgm",)),), n_lights=10)


class TestTrainModel:
    def test_shapes_and_labels(self, tiny_model):
        assert tiny_model.hr_shape == (16, 14)
        assert tiny_model.lr_shape == (8, 7)
        assert tiny_model.labels == ("subject00", "subject01", "subject02")
        assert tiny_model.n_classes == 3

    def test_config_snapshot_records_effective_settings(self, tiny_model):
        text = tiny_model.config_text
        assert "method = slrfr" in text
        assert "downsample_factor = 2" in text
        assert "n_lights = 5" in text

    def test_kernel_method_stores_kernel_dicts(self, tiny_gallery):
        model = train_model_from_images(
            tiny_gallery, "kerslrfr", DegradationModel.default(2),
            TrainParams(sparsity=2, n_iters=2, kernel_c=3.0), seed=0,
        )
        assert "kernel_lr = gaussian(c=3)" in model.config_text
        assert model.pca_hr is None

    def test_joint_method_has_hr_pca(self, tiny_gallery):
        model = train_model_from_images(
            tiny_gallery, "jointkerslrfr", DegradationModel.default(2),
            TrainParams(sparsity=2, n_iters=2, kernel_c="auto", coupling=0.5,
                        pca_dim=20), seed=0,
        )
        assert model.pca_hr is not None
        assert "coupling = 0.5" in model.config_text

    def test_rejects_mixed_image_shapes(self):
        rng = np.random.default_rng(6)
        classes = [
            ("a", [smooth_image(rng, 16, 14)]),
            ("b", [smooth_image(rng, 16, 15)]),
        ]
        with pytest.raises(InvalidArgumentError, match="'b'"):
            train_model_from_images(classes, "slrfr", DegradationModel.default(2))

    def test_rejects_duplicate_labels(self):
        rng = np.random.default_rng(7)
        classes = [("a", [smooth_image(rng, 8, 8)]), ("a", [smooth_image(rng, 8, 8)])]
        with pytest.raises(InvalidArgumentError, match="unique"):
            train_model_from_images(classes, "slrfr", DegradationModel.default(2))

    def test_per_class_failure_names_class(self, tiny_gallery):
        # sparsity larger than the atom count fails inside class training
        with pytest.raises(InvalidArgumentError, match="subject00"):
            train_model_from_images(
                tiny_gallery, "slrfr", DegradationModel.default(2),
                TrainParams(n_atoms=4, sparsity=9, n_iters=2), seed=0,
            )

    def test_train_from_manifest_paths(self, tiny_gallery, tmp_path):
        lines = []
        for label, images in tiny_gallery:
            p = tmp_path / f"{label}.pgm"
            write_pgm(images[0], p, maxval=65535)
            lines.append((label, (str(p),)))
        manifest = GalleryManifest(classes=tuple(lines), n_lights=3, include_flips=False)
        model = train_model(
            manifest, "slrfr", DegradationModel.default(2),
            TrainParams(sparsity=2, n_iters=2, pca_dim=8), seed=0,
        )
        assert model.n_classes == 3
        assert "n_lights = 3" in model.config_text

    def test_missing_image_reported_as_data_error(self):
        manifest = GalleryManifest(classes=(("x", ("/nonexistent/img.pgm",)),))
        with pytest.raises(DataFormatError, match="'x'"):
            train_model(manifest, "slrfr", DegradationModel.default(2))

    def test_normal_map_shape_mismatch_rejected(self, tiny_gallery, tmp_path):
        from slrfr.relighting import ellipsoid_normal_field, save_normal_field

        path = tmp_path / "wrong.nrm"
        save_normal_field(ellipsoid_normal_field(8, 8), path)
        with pytest.raises(InvalidArgumentError, match="shape"):
            train_model_from_images(
                tiny_gallery, "slrfr", DegradationModel.default(2),
                normals_source=str(path),
            )


class TestEvaluate:
    def test_gallery_probes_score_perfectly(self, tiny_model, tiny_gallery):
        probes = [(images[0], label) for label, images in tiny_gallery]
        report = evaluate(tiny_model, probes)
        assert report.rank_one == 1.0
        assert report.cmc[-1] == 1.0
        assert len(report.per_probe) == 3

    def test_cmc_non_decreasing(self, tiny_model, tiny_gallery):
        probes = [(images[0], label) for label, images in tiny_gallery]
        report = evaluate(tiny_model, probes)
        assert np.all(np.diff(report.cmc) >= 0)

    def test_unknown_labels_excluded(self, tiny_model, tiny_gallery):
        probes = [(images[0], label) for label, images in tiny_gallery]
        probes.append((tiny_gallery[0][1][0], "stranger"))
        report = evaluate(tiny_model, probes)
        assert report.excluded == ((3, "stranger"),)
        assert report.runtime_stats.n_scored == 3
        assert report.per_probe[3].rank is None
        assert report.per_probe[3].predicted in tiny_model.labels

    def test_lr_probes_accepted_with_flag(self, tiny_model, tiny_gallery):
        probes = [
            (degrade(images[0], tiny_model.degradation), label)
            for label, images in tiny_gallery
        ]
        report = evaluate(tiny_model, probes, probes_are_lr=True)
        assert report.rank_one == 1.0

    def test_wrong_shape_rejected(self, tiny_model):
        bad = GrayImage(np.zeros((5, 5)))
        with pytest.raises(InvalidArgumentError):
            evaluate(tiny_model, [(bad, "a")])

    def test_empty_probes_rejected(self, tiny_model):
        with pytest.raises(InvalidArgumentError):
            evaluate(tiny_model, [])

    def test_classify_image_matches_evaluate(self, tiny_model, tiny_gallery):
        img, label = tiny_gallery[1][1][0], tiny_gallery[1][0]
        report = classify_image(tiny_model, img)
        assert report.predicted == label


class TestNoiseSweep:
    def test_sigma_zero_equals_plain_evaluate(self, tiny_model, tiny_gallery):
        probes = [(images[0], label) for label, images in tiny_gallery]
        sweep = noise_sweep(tiny_model, probes, [0.0], [0, 1])
        base = evaluate(tiny_model, probes)
        for entry in sweep.entries:
            assert entry.report.rank_one == base.rank_one
            for p1, p2 in zip(entry.report.per_probe, base.per_probe):
                assert np.array_equal(p1.residuals, p2.residuals)

    def test_entries_cover_grid(self, tiny_model, tiny_gallery):
        probes = [(images[0], label) for label, images in tiny_gallery]
        sweep = noise_sweep(tiny_model, probes, [0.0, 0.05], [3, 4])
        assert [(e.sigma, e.seed) for e in sweep.entries] == [
            (0.0, 3), (0.0, 4), (0.05, 3), (0.05, 4)
        ]
        assert [s for s, _ in sweep.sigma_means] == [0.0, 0.05]

    def test_mean_matches_entries(self, tiny_model, tiny_gallery):
        probes = [(images[0], label) for label, images in tiny_gallery]
        sweep = noise_sweep(tiny_model, probes, [0.08], [0, 1, 2])
        vals = [e.report.rank_one for e in sweep.entries]
        assert sweep.sigma_means[0][1] == pytest.approx(np.mean(vals))

    def test_rejects_descending_sigmas(self, tiny_model, tiny_gallery):
        probes = [(images[0], label) for label, images in tiny_gallery]
        with pytest.raises(InvalidArgumentError):
            noise_sweep(tiny_model, probes, [0.1, 0.0], [0])


class TestCsvWriters:
    def test_cmc_schema(self, tiny_model, tiny_gallery, tmp_path):
        probes = [(images[0], label) for label, images in tiny_gallery]
        report = evaluate(tiny_model, probes)
        path = tmp_path / "cmc.csv"
        write_cmc_csv(report, path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["rank", "cumulative_accuracy"]
        assert len(rows) == 1 + tiny_model.n_classes
        assert [int(r[0]) for r in rows[1:]] == [1, 2, 3]
        values = [float(r[1]) for r in rows[1:]]
        assert values == sorted(values)
        assert values[-1] == 1.0

    def test_per_probe_schema(self, tiny_model, tiny_gallery, tmp_path):
        probes = [(images[0], label) for label, images in tiny_gallery]
        report = evaluate(tiny_model, probes)
        path = tmp_path / "pp.csv"
        write_per_probe_csv(report, path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["probe_id", "true", "predicted",
                           "residual_1", "residual_2", "residual_3"]
        assert len(rows) == 4
        for i, row in enumerate(rows[1:]):
            assert int(row[0]) == i
            for cell in row[3:]:
                assert float(cell) >= 0.0

    def test_sweep_schema(self, tiny_model, tiny_gallery, tmp_path):
        probes = [(images[0], label) for label, images in tiny_gallery]
        sweep = noise_sweep(tiny_model, probes, [0.0, 0.05], [0, 1])
        path = tmp_path / "sweep.csv"
        write_sweep_csv(sweep, path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["sigma", "seed", "rank_one"]
        data_rows = [r for r in rows[1:] if r[1] != "mean"]
        mean_rows = [r for r in rows[1:] if r[1] == "mean"]
        assert len(data_rows) == 4
        assert len(mean_rows) == 2
        for row in rows[1:]:
            float(row[0])
            float(row[2])


class TestParallelism:
    def test_n_jobs_does_not_change_results(self, tiny_gallery):
        dm = DegradationModel.default(2)
        params = TrainParams(sparsity=2, n_iters=3, pca_dim=16)
        m1 = train_model_from_images(tiny_gallery, "slrfr", dm, params, seed=0)
        m2 = train_model_from_images(tiny_gallery, "slrfr", dm, params, seed=0, n_jobs=3)
        for d1, d2 in zip(m1.dictionaries, m2.dictionaries):
            assert np.array_equal(d1.atoms, d2.atoms)
        probes = [(images[0], label) for label, images in tiny_gallery]
        r1 = evaluate(m1, probes, n_jobs=1)
        r2 = evaluate(m1, probes, n_jobs=3)
        for p1, p2 in zip(r1.per_probe, r2.per_probe):
            assert np.array_equal(p1.residuals, p2.residuals)


class TestEllipsoidParams:
    def test_custom_geometry_changes_extension(self, tiny_gallery):
        dm = DegradationModel.default(2)
        params = TrainParams(sparsity=2, n_iters=2, pca_dim=8)
        m1 = train_model_from_images(tiny_gallery, "slrfr", dm, params, seed=0)
        m2 = train_model_from_images(
            tiny_gallery, "slrfr", dm, params, seed=0,
            normals_source=EllipsoidParams(depth=0.8),
        )
        assert not np.array_equal(m1.pca_lr.mean, m2.pca_lr.mean)
