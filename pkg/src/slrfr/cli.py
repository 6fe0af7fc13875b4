"""Command-line interface.

Subcommands: relight (extend one image into synthesized lighting), train
(build a model from a gallery manifest and a config file), classify (one
probe against a model), evaluate (labeled probes, CMC + per-probe CSV),
noise-sweep (accuracy under increasing LR noise).

Exit codes: 0 success, 2 invalid arguments, 3 unreadable or malformed
data, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import (
    ExperimentConfig,
    degradation_from_config,
    load_config,
    normals_source_from_config,
    train_params_from_config,
)
from .errors import DataFormatError, InvalidArgumentError, NumericalError
from .imageops import read_pgm, write_pgm
from .pipeline import (
    GalleryManifest,
    classify_image,
    evaluate,
    load_manifest,
    noise_sweep,
    train_model,
    write_cmc_csv,
    write_per_probe_csv,
    write_sweep_csv,
)
from .relighting import extend_gallery, load_normal_field, ellipsoid_normal_field
from .serialize import load_model, save_model

__all__ = ["main"]

logger = logging.getLogger(__name__)


def _positive_int(raw: str) -> int:
    value = int(raw)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {raw}")
    return value


def _float_list(raw: str) -> list[float]:
    try:
        return [float(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {raw!r}")


def _int_list(raw: str) -> list[int]:
    try:
        return [int(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {raw!r}")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slrfr",
        description="Low-resolution face recognition with relit galleries and sparse dictionaries.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress details")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("relight", help="extend one image into synthesized lighting variants")
    p.add_argument("--image", required=True, help="input PGM image")
    p.add_argument("--normals", default="ellipsoid",
                   help="'ellipsoid' or a saved normal-map file (default: ellipsoid)")
    p.add_argument("--n-lights", type=_positive_int, default=5,
                   help="lighting directions to synthesize, 1..9 (default 5)")
    p.add_argument("--no-flips", action="store_true", help="skip mirrored copies")
    p.add_argument("--out-dir", required=True, help="directory for the output PGMs")

    p = sub.add_parser("train", help="train a model from a gallery manifest")
    p.add_argument("--manifest", required=True, help="text file of 'label path' lines")
    p.add_argument("--config", default=None, help="key = value config file (defaults if omitted)")
    p.add_argument("--out", required=True, help="output model file")
    p.add_argument("--jobs", type=_positive_int, default=1, help="worker threads (default 1)")

    p = sub.add_parser("classify", help="classify one probe image")
    p.add_argument("--model", required=True, help="trained model file")
    p.add_argument("--image", required=True, help="probe PGM image")
    p.add_argument("--lr", action="store_true", help="probe is already at LR scale")
    p.add_argument("--seed", type=int, default=0, help="degradation noise seed (default 0)")

    p = sub.add_parser("evaluate", help="evaluate labeled probes and write CSV reports")
    p.add_argument("--model", required=True, help="trained model file")
    p.add_argument("--probes", required=True, help="text file of 'label path' lines")
    p.add_argument("--lr", action="store_true", help="probes are already at LR scale")
    p.add_argument("--seed", type=int, default=0, help="degradation noise seed (default 0)")
    p.add_argument("--cmc", default=None, help="write the CMC curve CSV here")
    p.add_argument("--per-probe", default=None, help="write the per-probe CSV here")
    p.add_argument("--jobs", type=_positive_int, default=1, help="worker threads (default 1)")

    p = sub.add_parser("noise-sweep", help="evaluate under increasing LR noise")
    p.add_argument("--model", required=True, help="trained model file")
    p.add_argument("--probes", required=True, help="text file of 'label path' lines")
    p.add_argument("--lr", action="store_true", help="probes are already at LR scale")
    p.add_argument("--sigmas", type=_float_list, required=True,
                   help="comma-separated noise levels, ascending (e.g. 0,0.02,0.05,0.1)")
    p.add_argument("--seeds", type=_int_list, required=True,
                   help="comma-separated noise seeds (e.g. 0,1,2,3)")
    p.add_argument("--out", required=True, help="write the sweep CSV here")
    p.add_argument("--jobs", type=_positive_int, default=1, help="worker threads (default 1)")

    return parser


def _load_probes(path):
    groups = load_manifest(path)
    probes = []
    for label, paths in groups:
        for p in paths:
            probes.append((read_pgm(p), label))
    return probes


def _cmd_relight(args) -> int:
    img = read_pgm(args.image)
    if args.normals == "ellipsoid":
        normals = ellipsoid_normal_field(img.rows, img.cols)
    else:
        normals = load_normal_field(args.normals)
    variants = extend_gallery(img, normals, args.n_lights, not args.no_flips)
    os.makedirs(args.out_dir, exist_ok=True)
    stem = os.path.splitext(os.path.basename(args.image))[0]
    for i, variant in enumerate(variants):
        write_pgm(variant, os.path.join(args.out_dir, f"{stem}_ext{i:02d}.pgm"))
    print(f"wrote {len(variants)} images to {args.out_dir}")
    return 0


def _cmd_train(args) -> int:
    config = load_config(args.config) if args.config else ExperimentConfig()
    classes = load_manifest(args.manifest)
    manifest = GalleryManifest(
        classes=classes,
        normals_source=normals_source_from_config(config),
        n_lights=config.n_lights,
        include_flips=config.flips,
    )
    model = train_model(
        manifest,
        config.method,
        degradation_from_config(config),
        train_params_from_config(config),
        config.seed,
        n_jobs=args.jobs,
    )
    save_model(model, args.out)
    print(
        f"trained {model.method} model: {model.n_classes} classes, "
        f"HR {model.hr_shape[0]}x{model.hr_shape[1]} -> LR {model.lr_shape[0]}x{model.lr_shape[1]}"
    )
    print(f"saved to {args.out}")
    return 0


def _cmd_classify(args) -> int:
    model = load_model(args.model)
    img = read_pgm(args.image)
    report = classify_image(model, img, probe_is_lr=args.lr, seed=args.seed)
    print(report.predicted)
    order = sorted(range(len(report.labels)), key=lambda i: report.residuals[i])
    for i in order:
        logger.info("residual %-20s %.6g", report.labels[i], report.residuals[i])
    return 0


def _cmd_evaluate(args) -> int:
    model = load_model(args.model)
    probes = _load_probes(args.probes)
    report = evaluate(model, probes, probes_are_lr=args.lr, seed=args.seed, n_jobs=args.jobs)
    stats = report.runtime_stats
    print(f"probes: {stats.n_probes} ({stats.n_scored} scored)")
    print(f"rank-1 accuracy: {report.rank_one:.4f}")
    print(f"elapsed: {stats.elapsed_seconds:.2f}s")
    if args.cmc:
        write_cmc_csv(report, args.cmc)
        print(f"CMC curve written to {args.cmc}")
    if args.per_probe:
        write_per_probe_csv(report, args.per_probe)
        print(f"per-probe results written to {args.per_probe}")
    return 0


def _cmd_noise_sweep(args) -> int:
    model = load_model(args.model)
    probes = _load_probes(args.probes)
    sweep = noise_sweep(
        model, probes, args.sigmas, args.seeds, probes_are_lr=args.lr, n_jobs=args.jobs
    )
    for sigma, mean in sweep.sigma_means:
        print(f"sigma {sigma:.4g}: mean rank-1 {mean:.4f}")
    write_sweep_csv(sweep, args.out)
    print(f"sweep written to {args.out}")
    return 0


_COMMANDS = {
    "relight": _cmd_relight,
    "train": _cmd_train,
    "classify": _cmd_classify,
    "evaluate": _cmd_evaluate,
    "noise-sweep": _cmd_noise_sweep,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except InvalidArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
