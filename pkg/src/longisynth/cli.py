"""Command-line entry point: ``longisynth {phantom,train,predict,evaluate,crossval}``.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import phantom as ph
from .config import ARCHS, PRESETS, RunConfig, dump_config, load_config
from .data import (
    assign_folds,
    build_sample_pairs,
    group_by_participant,
    load_fold_override,
    load_manifest,
    make_loader,
)
from .metrics import evaluate_pair, write_report_csv
from .trainer import TrainingDiverged, fit, load_checkpoint, predict_volume, run_crossval
from .volume_io import read_volume, write_volume

logger = logging.getLogger("longisynth")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

PHANTOM_PROFILES = {
    "isbi-shape": ph.ISBI_PROFILE,
    "desk": ((15, 4),),
}


class UsageError(Exception):
    pass


def isbi_fold_override() -> dict[str, int]:
    text = resources.files("longisynth").joinpath("resources/isbi2015_folds.json").read_text()
    return {k: int(v) for k, v in json.loads(text).items()}


# ---------------------------------------------------------------------------
# helpers


def _effective_config(args) -> RunConfig:
    overrides: dict = {}
    train: dict = {}
    model: dict = {}
    if getattr(args, "seed", None) is not None:
        train["seed"] = args.seed
    if getattr(args, "arch", None) is not None:
        if args.arch not in ARCHS:
            raise UsageError(f"invalid arch {args.arch!r}; valid values: {', '.join(ARCHS)}")
        model["arch"] = args.arch
    for name in ("max_steps", "epochs_const", "epochs_decay"):
        if getattr(args, name, None) is not None:
            train[name] = getattr(args, name)
    if getattr(args, "no_augment", False):
        train["augment"] = False
    if model:
        train["model"] = model
    if train:
        overrides["train"] = train
    if getattr(args, "manifest", None):
        overrides.setdefault("data", {})["manifest"] = str(args.manifest)
    if getattr(args, "fold_override", None):
        overrides.setdefault("data", {})["fold_override"] = str(args.fold_override)
    try:
        return load_config(args.config, args.preset, overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _load_samples(cfg: RunConfig):
    if not cfg.data.manifest:
        raise UsageError("no manifest given (use --manifest or data.manifest in the config)")
    records = load_manifest(cfg.data.manifest)
    loader = make_loader(cfg.data.crop_shape, cfg.data.crop_start)
    samples = build_sample_pairs(records, loader, n_classes=cfg.train.model.n_classes)
    counts = {pid: len(rs) for pid, rs in group_by_participant(records).items()}
    return samples, counts


def _folds(cfg: RunConfig, counts: dict):
    override = load_fold_override(cfg.data.fold_override) if cfg.data.fold_override else None
    return assign_folds(counts, cfg.data.k, cfg.train.seed, override)


def _volume_id(path: Path) -> str:
    name = path.name
    for suffix in (".nii.gz", ".nii", ".lsvol"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return path.stem


def _volume_files(d: Path) -> dict[str, Path]:
    return {
        _volume_id(p): p
        for p in sorted(d.iterdir())
        if p.name.endswith((".nii.gz", ".nii", ".lsvol"))
    }


def write_preview(path, source: np.ndarray, pred: np.ndarray, target: Optional[np.ndarray] = None) -> Path:
    """Save a mid-axial slice triplet (source FLAIR / prediction / target)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    panels = [("source", source), ("predicted", pred)] + ([("target", target)] if target is not None else [])
    fig, axes = plt.subplots(1, len(panels), figsize=(3 * len(panels), 3))
    for ax, (title, vol) in zip(np.atleast_1d(axes), panels):
        ax.imshow(vol[:, :, vol.shape[2] // 2].T, cmap="gray", origin="lower", vmin=-1, vmax=1)
        ax.set_title(title)
        ax.axis("off")
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


# ---------------------------------------------------------------------------
# commands


def cmd_phantom(args) -> int:
    out = Path(args.out)
    if not out.is_dir():
        raise FileNotFoundError(f"output directory does not exist: {out}")
    profile = ph.profile_from_string(args.profile) if args.profile else PHANTOM_PROFILES[args.phantom_preset]
    cfg = ph.PhantomConfig(
        profile=profile,
        side=args.side,
        seed=args.seed if args.seed is not None else 0,
        volume_format=args.format,
    )
    manifest = ph.generate_cohort(cfg, out)
    if args.phantom_preset == "isbi-shape" and not args.profile:
        (out / "folds.json").write_text(json.dumps(isbi_fold_override(), indent=2))
    print(manifest)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _effective_config(args)
    out = Path(args.out)
    samples, counts = _load_samples(cfg)
    if args.fold is not None:
        folds = _folds(cfg, counts)
        if not 0 <= args.fold < folds.k:
            raise UsageError(f"--fold must be in 0..{folds.k - 1}")
        train, val = folds.split(samples, args.fold)
    else:
        train, val = samples, []
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "config.yaml")
    extra = {"crop_shape": cfg.data.crop_shape, "crop_start": cfg.data.crop_start}
    bundle, log = fit(train, val, cfg.train, out_dir=out, fold=args.fold, checkpoint_extra=extra)
    print(json.dumps(log[-1]))
    return EXIT_OK


def cmd_predict(args) -> int:
    if args.days <= 0:
        raise UsageError(f"--days must be > 0, got {args.days}")
    bundle, meta = load_checkpoint(args.checkpoint)
    sources = [read_volume(p) for p in args.sources]
    crop = meta.get("crop_shape")
    pred = predict_volume(bundle.generator, sources, args.days, crop_shape=crop, crop_start=meta.get("crop_start"))
    write_volume(pred, args.out)
    if args.preview:
        from .trainer import _prepare_sources

        src = _prepare_sources(sources, crop, meta.get("crop_start"))[3]
        target = None
        if args.target:
            from .data import center_crop, normalize_to_signed_unit

            t = read_volume(args.target)
            target = normalize_to_signed_unit(center_crop(t, crop, meta.get("crop_start")) if crop else t).voxels
        write_preview(args.preview, src, pred.voxels, target)
    print(args.out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    pred_dir, ref_dir = Path(args.pred), Path(args.ref)
    for d in (pred_dir, ref_dir):
        if not d.is_dir():
            raise FileNotFoundError(f"directory does not exist: {d}")
    preds, refs = _volume_files(pred_dir), _volume_files(ref_dir)
    if set(preds) != set(refs):
        missing_pred = sorted(set(refs) - set(preds))
        missing_ref = sorted(set(preds) - set(refs))
        raise FileNotFoundError(
            f"volume sets differ; missing predictions: {missing_pred}; missing references: {missing_ref}"
        )
    reports = [evaluate_pair(read_volume(preds[i]).voxels, read_volume(refs[i]).voxels, i) for i in sorted(preds)]
    write_report_csv(reports, args.out)
    print(args.out)
    return EXIT_OK


def cmd_crossval(args) -> int:
    cfg = _effective_config(args)
    out = Path(args.out)
    samples, counts = _load_samples(cfg)
    folds = _folds(cfg, counts)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "config.yaml")
    folds.to_json(out / "folds.json")
    extra = {"crop_shape": cfg.data.crop_shape, "crop_start": cfg.data.crop_start}
    result = run_crossval(samples, cfg.train, folds, out, checkpoint_extra=extra)
    for row in result["rows"]:
        print(
            f"fold {row['fold']:>6}: n={int(row['n'])} "
            f"PSNR {row['psnr_db_mean']:.4f}±{row['psnr_db_sd']:.3f} "
            f"NMSE {row['nmse_mean']:.4f}±{row['nmse_sd']:.3f} "
            f"SSIM {row['ssim_mean']:.4f}±{row['ssim_sd']:.3f}"
        )
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run config")
    common.add_argument("--seed", type=int)
    common.add_argument("--preset", choices=PRESETS)
    common.add_argument("--out", required=True, help="output path")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="longisynth", description="Longitudinal FLAIR synthesis with time-lag conditioning.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", parents=[common], help="generate a synthetic longitudinal cohort")
    p.add_argument("--phantom-preset", dest="phantom_preset", choices=sorted(PHANTOM_PROFILES), default="isbi-shape")
    p.add_argument("--profile", help='participants x timepoints, e.g. "14x4,4x5,1x6"')
    p.add_argument("--side", type=int, default=32)
    p.add_argument("--format", choices=(".nii.gz", ".nii", ".lsvol"), default=".nii.gz")
    p.set_defaults(func=cmd_phantom)

    for name, func, helptext in (
        ("train", cmd_train, "train one model"),
        ("crossval", cmd_crossval, "k-fold cross-validation"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--manifest", type=Path)
        p.add_argument("--arch", help=f"one of {', '.join(ARCHS)}")
        p.add_argument("--fold-override", dest="fold_override", type=Path)
        p.add_argument("--max-steps", dest="max_steps", type=int)
        p.add_argument("--epochs-const", dest="epochs_const", type=int)
        p.add_argument("--epochs-decay", dest="epochs_decay", type=int)
        p.add_argument("--no-augment", dest="no_augment", action="store_true")
        if name == "train":
            p.add_argument("--fold", type=int)
        p.set_defaults(func=func)

    p = sub.add_parser("predict", parents=[common], help="predict a future FLAIR volume")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--sources", nargs=4, required=True, metavar=("MPRAGE", "T2", "PD", "FLAIR"))
    p.add_argument("--days", type=int, required=True)
    p.add_argument("--preview", type=Path, help="write a mid-slice PNG here")
    p.add_argument("--target", type=Path, help="optional ground truth for the preview")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="score predictions against references")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, RuntimeError, TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
