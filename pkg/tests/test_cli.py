"""CLI subcommands end to end through main(), including exit codes."""

import csv
import os

import numpy as np
import pytest

from slrfr.cli import main
from slrfr.imageops import write_pgm
from slrfr.serialize import load_model

from helpers import planted_gallery


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Gallery PGMs, manifest, config, and a trained model file."""
    root = tmp_path_factory.mktemp("cli")
    gallery = planted_gallery(n_classes=3, rows=16, cols=14, seed=5)
    lines = []
    for label, images in gallery:
        path = root / f"{label}.pgm"
        write_pgm(images[0], path, maxval=65535)
        lines.append(f"{label} {path}")
    manifest = root / "manifest.txt"
    manifest.write_text("# demo gallery\n" + "\n".join(lines) + "\n")
    config = root / "config.txt"
    config.write_text(
        "method = kerslrfr\ndownsample_factor = 2\nsparsity = 2\niters = 3\n"
        "kernel_c = auto\npca_dim = 16\nseed = 4\n"
    )
    model = root / "model.bin"
    code = main(["train", "--manifest", str(manifest), "--config", str(config),
                 "--out", str(model)])
    assert code == 0
    return {"root": root, "manifest": manifest, "config": config, "model": model,
            "gallery": gallery}


class TestTrain:
    def test_model_file_written(self, workspace):
        model = load_model(workspace["model"])
        assert model.method == "kerslrfr"
        assert model.n_classes == 3

    def test_default_config_when_omitted(self, workspace, tmp_path):
        out = tmp_path / "m.bin"
        code = main(["train", "--manifest", str(workspace["manifest"]),
                     "--out", str(out)])
        assert code == 0
        assert load_model(out).method == "kerslrfr"

    def test_missing_manifest_is_exit_3(self, tmp_path):
        code = main(["train", "--manifest", str(tmp_path / "none.txt"),
                     "--out", str(tmp_path / "m.bin")])
        assert code == 3


class TestRelight:
    def test_writes_expected_count(self, workspace, tmp_path):
        img = workspace["root"] / "subject00.pgm"
        out_dir = tmp_path / "relit"
        code = main(["relight", "--image", str(img), "--out-dir", str(out_dir),
                     "--n-lights", "4"])
        assert code == 0
        files = sorted(os.listdir(out_dir))
        assert len(files) == 8  # 4 lights + 4 flips
        assert files[0].startswith("subject00_ext")

    def test_no_flips_halves_output(self, workspace, tmp_path):
        img = workspace["root"] / "subject00.pgm"
        out_dir = tmp_path / "relit"
        code = main(["relight", "--image", str(img), "--out-dir", str(out_dir),
                     "--n-lights", "4", "--no-flips"])
        assert code == 0
        assert len(os.listdir(out_dir)) == 4

    def test_too_many_lights_is_exit_2(self, workspace, tmp_path):
        img = workspace["root"] / "subject00.pgm"
        code = main(["relight", "--image", str(img),
                     "--out-dir", str(tmp_path / "x"), "--n-lights", "12"])
        assert code == 2


class TestClassify:
    def test_prints_predicted_label(self, workspace, capsys):
        img = workspace["root"] / "subject01.pgm"
        code = main(["classify", "--model", str(workspace["model"]),
                     "--image", str(img)])
        assert code == 0
        assert capsys.readouterr().out.strip() == "subject01"

    def test_corrupt_model_is_exit_3(self, workspace, tmp_path):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"not a model")
        img = workspace["root"] / "subject00.pgm"
        assert main(["classify", "--model", str(bad), "--image", str(img)]) == 3


class TestEvaluate:
    def test_writes_both_csvs(self, workspace, tmp_path, capsys):
        cmc = tmp_path / "cmc.csv"
        pp = tmp_path / "pp.csv"
        code = main(["evaluate", "--model", str(workspace["model"]),
                     "--probes", str(workspace["manifest"]),
                     "--cmc", str(cmc), "--per-probe", str(pp)])
        assert code == 0
        out = capsys.readouterr().out
        assert "rank-1 accuracy: 1.0000" in out
        with open(cmc, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["rank", "cumulative_accuracy"]
        with open(pp, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0][:3] == ["probe_id", "true", "predicted"]


class TestNoiseSweep:
    def test_writes_sweep_csv(self, workspace, tmp_path, capsys):
        out = tmp_path / "sweep.csv"
        code = main(["noise-sweep", "--model", str(workspace["model"]),
                     "--probes", str(workspace["manifest"]),
                     "--sigmas", "0,0.05", "--seeds", "0,1", "--out", str(out)])
        assert code == 0
        assert "sigma 0:" in capsys.readouterr().out
        with open(out, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["sigma", "seed", "rank_one"]
        assert sum(r[1] == "mean" for r in rows[1:]) == 2

    def test_descending_sigmas_is_exit_2(self, workspace, tmp_path):
        code = main(["noise-sweep", "--model", str(workspace["model"]),
                     "--probes", str(workspace["manifest"]),
                     "--sigmas", "0.1,0.0", "--seeds", "0",
                     "--out", str(tmp_path / "s.csv")])
        assert code == 2


class TestDeterminism:
    def test_retraining_gives_identical_file(self, workspace, tmp_path):
        out2 = tmp_path / "model2.bin"
        code = main(["train", "--manifest", str(workspace["manifest"]),
                     "--config", str(workspace["config"]), "--out", str(out2)])
        assert code == 0
        assert out2.read_bytes() == workspace["model"].read_bytes()
