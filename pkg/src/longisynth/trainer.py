"""Alternating adversarial training, whole-volume prediction and cross-validation."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from . import objectives as obj
from .augment import augment_array
from .config import TrainConfig, dataclass_to_dict
from .data import FoldSplit, Sample, center_crop, normalize_to_signed_unit
from .metrics import MetricReport, evaluate_pair, summarize
from .models import PatchDiscriminator, UNetGenerator, build_discriminator, build_generator
from .patches import PatchLayout, aggregate_patches, extract_patches, plan_patch_layout
from .time_conditioning import normalize_time_lag
from .volume import Volume

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class ModelBundle:
    generator: UNetGenerator
    discriminator: Optional[PatchDiscriminator]
    config: TrainConfig
    opt_g: torch.optim.Optimizer
    opt_d: Optional[torch.optim.Optimizer] = None
    epoch: int = 0
    step: int = 0
    history: list = field(default_factory=list)

    @property
    def dtype(self) -> torch.dtype:
        return getattr(torch, self.config.dtype)


def lr_at_epoch(e: int, base_lr: float, cfg: TrainConfig) -> float:
    """Constant for ``epochs_const`` epochs, then linear decay reaching 0 at the last epoch."""
    total = cfg.epochs_const + cfg.epochs_decay
    if not 1 <= e <= total:
        raise ValueError(f"epoch {e} outside 1..{total}")
    if e <= cfg.epochs_const:
        return base_lr
    return base_lr * (1.0 - (e - cfg.epochs_const) / cfg.epochs_decay)


def build_bundle(cfg: TrainConfig) -> ModelBundle:
    dtype = getattr(torch, cfg.dtype)
    side = cfg.patch_side
    g = build_generator(cfg.model.generator_config(side), seed=cfg.seed).to(dtype)
    opt_g = torch.optim.AdamW(g.parameters(), lr=cfg.lr_g, betas=(cfg.beta1, cfg.beta2), weight_decay=cfg.weight_decay)
    d = opt_d = None
    d_cfg = cfg.model.discriminator_config(side)
    if d_cfg is not None:
        d = build_discriminator(d_cfg, seed=cfg.seed + 1).to(dtype)
        opt_d = torch.optim.AdamW(d.parameters(), lr=cfg.lr_d, betas=(cfg.beta1, cfg.beta2), weight_decay=cfg.weight_decay)
    return ModelBundle(g, d, cfg, opt_g, opt_d)


def _set_lr(opt: Optional[torch.optim.Optimizer], lr: float) -> None:
    if opt is not None:
        for group in opt.param_groups:
            group["lr"] = lr


def _check_finite(record: dict, epoch: int, batch: int) -> None:
    for k, v in record.items():
        if not np.isfinite(v):
            raise TrainingDiverged(f"non-finite {k} at epoch {epoch}, batch {batch}")


def train_step(batch: dict, bundle: ModelBundle, epoch: int = 0, batch_index: int = 0) -> dict:
    """One update: D then G for the GAN archs, a single L1 update for ``unet``.

    ``batch`` holds ``source`` (B, 4, S, S, S), ``target`` (B, 1, S, S, S),
    ``years`` (B,) and, for ``acgan``, ``labels`` (B,).
    """
    G, D = bundle.generator, bundle.discriminator
    src, tgt, years = batch["source"], batch["target"], batch["years"]
    G.train()
    record: dict = {}

    if D is None:
        pred = G(src, years)
        l1 = obj.l1_term(pred, tgt)
        bundle.opt_g.zero_grad(set_to_none=True)
        l1.backward()
        bundle.opt_g.step()
        record = {"g_l1": l1.item(), "g_loss": l1.item()}
        _check_finite(record, epoch, batch_index)
        return record

    D.train()
    fake = G(src, years)
    record.update(discriminator_update(batch, bundle, fake))
    record.update(generator_update(batch, bundle, fake))
    _check_finite(record, epoch, batch_index)
    return record


def discriminator_update(batch: dict, bundle: ModelBundle, fake: torch.Tensor) -> dict:
    """One D step on the real pair and the detached fake; G is untouched."""
    w = bundle.config.loss_weights
    D = bundle.discriminator
    src, tgt = batch["source"], batch["target"]
    d_years = batch["years"] if D.needs_time else None
    real_scores, real_post = D(src, tgt, d_years)
    fake_scores, fake_post = D(src, fake.detach(), d_years)
    record = {}
    if bundle.config.arch == "acgan":
        d_cls_real = obj.class_cross_entropy(real_post, batch["labels"])
        d_cls_fake = obj.class_cross_entropy(fake_post, batch["labels"])
        d_loss = obj.gan_discriminator_loss(real_scores, fake_scores, w) + w.lambda_cls * (d_cls_real + d_cls_fake)
        record.update(d_cls_real=d_cls_real.item(), d_cls_fake=d_cls_fake.item())
    else:
        d_loss = obj.gan_discriminator_loss(real_scores, fake_scores, w)
    bundle.opt_d.zero_grad(set_to_none=True)
    d_loss.backward()
    bundle.opt_d.step()
    record["d_loss"] = d_loss.item()
    return record


def generator_update(batch: dict, bundle: ModelBundle, fake: torch.Tensor) -> dict:
    """One G step through the (fixed) discriminator; D parameters are untouched."""
    cfg = bundle.config
    w = cfg.loss_weights
    D = bundle.discriminator
    src, tgt = batch["source"], batch["target"]
    d_years = batch["years"] if D.needs_time else None
    scores, post = D(src, fake, d_years)
    g_adv = obj.adversarial_generator_term(scores, cfg.generator_mode)
    g_l1 = obj.l1_term(fake, tgt)
    g_loss = g_adv + w.lambda_l1 * g_l1
    record = {}
    if cfg.arch == "acgan":
        g_cls = obj.class_cross_entropy(post, batch["labels"])
        g_loss = g_loss + w.lambda_cls * g_cls
        record["g_cls"] = g_cls.item()
    bundle.opt_g.zero_grad(set_to_none=True)
    g_loss.backward()
    bundle.opt_g.step()
    # G's backward also fills D grads; clear them so they never leak into a D step
    bundle.opt_d.zero_grad(set_to_none=True)
    record.update(g_adv=g_adv.item(), g_l1=g_l1.item(), g_loss=g_loss.item())
    return record


# ---------------------------------------------------------------------------
# data plumbing


def _stacks(samples: Sequence[Sample]) -> list[np.ndarray]:
    for s in samples:
        if not s.is_loaded:
            raise ValueError(f"sample {s.participant_id} {s.source_timepoint}->{s.target_timepoint} is not loaded")
    return [s.stacked() for s in samples]


def _epoch_arrays(stacks: list[np.ndarray], cfg: TrainConfig, epoch: int) -> list[np.ndarray]:
    if not cfg.augment:
        return stacks
    rng = np.random.default_rng([cfg.seed, epoch, 1])
    return [augment_array(s, rng) for s in stacks]


def _epoch_order(n_samples: int, n_patches: int, cfg: TrainConfig, epoch: int) -> np.ndarray:
    rng = np.random.default_rng([cfg.seed, epoch, 2])
    pairs = np.array([(i, j) for i in range(n_samples) for j in range(n_patches)], dtype=np.int64)
    return pairs[rng.permutation(len(pairs))]


def _make_batch(arrays, order_chunk, layout: PatchLayout, samples, dtype) -> dict:
    patches = [arrays[i][(slice(None),) + layout.slices(j)] for i, j in order_chunk]
    x = torch.as_tensor(np.stack(patches), dtype=dtype)
    years = torch.tensor([samples[i].time_lag_days / 365 for i, _ in order_chunk], dtype=dtype)
    batch = {"source": x[:, :4], "target": x[:, 4:5], "years": years}
    if samples[0].class_label is not None:
        batch["labels"] = torch.tensor([samples[i].class_label for i, _ in order_chunk], dtype=torch.long)
    return batch


def _ensure_labels(samples: Sequence[Sample], cfg: TrainConfig) -> None:
    if cfg.arch == "acgan" and any(s.class_label is None for s in samples):
        from .time_conditioning import class_from_time_lag

        for s in samples:
            s.class_label = class_from_time_lag(s.time_lag_days, cfg.model.n_classes).index


# ---------------------------------------------------------------------------
# prediction


def _prepare_sources(sources, crop_shape=None, crop_start=None, normalize=True) -> np.ndarray:
    vols = []
    for v in sources:
        v = v if isinstance(v, Volume) else Volume(v)
        if crop_shape is not None:
            v = center_crop(v, crop_shape, crop_start)
        if normalize:
            v = normalize_to_signed_unit(v)
        vols.append(v.voxels)
    if len(vols) != 4:
        raise ValueError(f"expected 4 source volumes, got {len(vols)}")
    return np.stack(vols)


def predict_volume(
    G: UNetGenerator,
    sources,
    time_lag_days: int,
    crop_shape=None,
    crop_start=None,
    normalize: bool = True,
    spacing_mm=(1.0, 1.0, 1.0),
) -> Volume:
    """Predict the future FLAIR for one study: crop, normalize, patch, generate, average."""
    t = normalize_time_lag(time_lag_days)
    stack = _prepare_sources(sources, crop_shape, crop_start, normalize)
    side = G.cfg.patch_side
    layout = plan_patch_layout(stack.shape[1:], (side,) * 3)
    dtype = next(G.parameters()).dtype
    x = torch.as_tensor(np.stack(extract_patches(stack, layout)), dtype=dtype)
    years = torch.full((len(layout),), t.years, dtype=dtype)
    was_training = G.training
    G.eval()
    with torch.no_grad():
        out = G(x, years)[:, 0].cpu().numpy()
    G.train(was_training)
    if isinstance(sources[0], Volume):
        spacing_mm = sources[0].spacing_mm
    return aggregate_patches(list(out), layout, spacing_mm)


def predict_samples(G: UNetGenerator, samples: Sequence[Sample]) -> list[Volume]:
    """Predict already-preprocessed samples."""
    return [predict_volume(G, s.source, s.time_lag_days, normalize=False) for s in samples]


def validation_l1(G: UNetGenerator, samples: Sequence[Sample]) -> float:
    if not samples:
        return float("nan")
    errs = [
        float(np.mean(np.abs(p.voxels.astype(np.float64) - s.target.voxels)))
        for p, s in zip(predict_samples(G, samples), samples)
    ]
    return float(np.mean(errs))


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(bundle: ModelBundle, path, fold: Optional[int] = None, extra: Optional[dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    state = {
        "generator": bundle.generator.state_dict(),
        "opt_g": bundle.opt_g.state_dict(),
        "epoch": bundle.epoch,
        "step": bundle.step,
        "torch_rng": torch.get_rng_state(),
    }
    if bundle.discriminator is not None:
        state["discriminator"] = bundle.discriminator.state_dict()
        state["opt_d"] = bundle.opt_d.state_dict()
    torch.save(state, path)
    meta = {
        "config": dataclass_to_dict(bundle.config),
        "epoch": bundle.epoch,
        "step": bundle.step,
        "fold": fold,
        "seed": bundle.config.seed,
        **(extra or {}),
    }
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2))
    return path


def load_checkpoint(path) -> tuple[ModelBundle, dict]:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    cfg = TrainConfig(**meta["config"])
    bundle = build_bundle(cfg)
    state = torch.load(path, weights_only=False)
    bundle.generator.load_state_dict(state["generator"])
    bundle.opt_g.load_state_dict(state["opt_g"])
    if bundle.discriminator is not None:
        bundle.discriminator.load_state_dict(state["discriminator"])
        bundle.opt_d.load_state_dict(state["opt_d"])
    bundle.epoch = state["epoch"]
    bundle.step = state["step"]
    torch.set_rng_state(state["torch_rng"])
    return bundle, meta


# ---------------------------------------------------------------------------
# fitting


def fit(
    train: Sequence[Sample],
    val: Sequence[Sample],
    cfg: TrainConfig,
    out_dir=None,
    resume: Optional[ModelBundle] = None,
    fold: Optional[int] = None,
    checkpoint_extra: Optional[dict] = None,
) -> tuple[ModelBundle, list[dict]]:
    """Train on ``train``; after each epoch record whole-volume validation L1.

    Returns the bundle and the per-epoch log (epoch 0 is the untrained model).
    With ``out_dir`` the log is written as JSON lines and ``best.pt`` /
    ``final.pt`` checkpoints are saved.
    """
    if not train:
        raise ValueError("empty training split")
    if val:
        overlap = {s.participant_id for s in train} & {s.participant_id for s in val}
        if overlap:
            raise ValueError(f"participants in both train and validation: {sorted(overlap)}")
    _ensure_labels(list(train) + list(val), cfg)

    torch.manual_seed(cfg.seed)
    bundle = resume if resume is not None else build_bundle(cfg)
    dtype = bundle.dtype
    stacks = _stacks(train)
    layout = plan_patch_layout(stacks[0].shape[1:], cfg.patch_shape)
    out_dir = Path(out_dir) if out_dir is not None else None
    log_fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_fh = open(out_dir / "metrics.jsonl", "a" if resume is not None else "w")

    log: list[dict] = list(bundle.history)
    best = np.inf

    def emit(rec):
        log.append(rec)
        bundle.history.append(rec)
        if log_fh is not None:
            log_fh.write(json.dumps(rec) + "\n")
            log_fh.flush()

    if bundle.epoch == 0:
        emit({"epoch": 0, "step": 0, "val_l1": validation_l1(bundle.generator, val)})

    pool = ThreadPoolExecutor(max_workers=1) if cfg.prefetch else None
    try:
        start = bundle.epoch + 1
        pending = pool.submit(_epoch_arrays, stacks, cfg, start) if pool else None
        for epoch in range(start, cfg.total_epochs + 1):
            if cfg.max_steps is not None and bundle.step >= cfg.max_steps:
                break
            arrays = pending.result() if pending is not None else _epoch_arrays(stacks, cfg, epoch)
            if pool is not None and epoch < cfg.total_epochs:
                pending = pool.submit(_epoch_arrays, stacks, cfg, epoch + 1)
            _set_lr(bundle.opt_g, lr_at_epoch(epoch, cfg.lr_g, cfg))
            _set_lr(bundle.opt_d, lr_at_epoch(epoch, cfg.lr_d, cfg))
            order = _epoch_order(len(arrays), len(layout), cfg, epoch)
            sums: dict[str, float] = {}
            n = 0
            for b, lo in enumerate(range(0, len(order), cfg.batch_size)):
                if cfg.max_steps is not None and bundle.step >= cfg.max_steps:
                    break
                batch = _make_batch(arrays, order[lo:lo + cfg.batch_size], layout, train, dtype)
                rec = train_step(batch, bundle, epoch, b)
                bundle.step += 1
                n += 1
                for k, v in rec.items():
                    sums[k] = sums.get(k, 0.0) + v
            bundle.epoch = epoch
            record = {
                "epoch": epoch,
                "step": bundle.step,
                "lr_g": lr_at_epoch(epoch, cfg.lr_g, cfg),
                "patch_batches": n,
                **{k: v / max(n, 1) for k, v in sums.items()},
                "val_l1": validation_l1(bundle.generator, val),
            }
            emit(record)
            if out_dir is not None:
                if val and record["val_l1"] < best:
                    best = record["val_l1"]
                    save_checkpoint(bundle, out_dir / "best.pt", fold, checkpoint_extra)
                save_checkpoint(bundle, out_dir / "final.pt", fold, checkpoint_extra)
    finally:
        if pool is not None:
            pool.shutdown(wait=True)
        if log_fh is not None:
            log_fh.close()
    return bundle, log


# ---------------------------------------------------------------------------
# cross-validation


def evaluate_samples(G: UNetGenerator, samples: Sequence[Sample]) -> list[MetricReport]:
    reports = []
    for s, pred in zip(samples, predict_samples(G, samples)):
        vid = f"{s.participant_id}_tp{s.source_timepoint}-tp{s.target_timepoint}"
        reports.append(evaluate_pair(pred.voxels, s.target.voxels, vid))
    return reports


def run_crossval(
    samples: Sequence[Sample], cfg: TrainConfig, folds: FoldSplit, out_dir=None, checkpoint_extra: Optional[dict] = None
) -> dict:
    """Train one model per fold and score its validation samples.

    Returns ``{"rows": [...], "reports": [...]}``; rows hold per-fold and pooled
    mean and standard deviation of PSNR, NMSE and SSIM.
    """
    if folds.k < 2:
        raise ValueError("cross-validation needs k >= 2")
    out_dir = Path(out_dir) if out_dir is not None else None
    rows = []
    all_reports: list[tuple[int, MetricReport]] = []
    for k in range(folds.k):
        train, val = folds.split(samples, k)
        try:
            bundle, _ = fit(train, val, cfg, out_dir / f"fold{k}" if out_dir else None, fold=k, checkpoint_extra=checkpoint_extra)
        except Exception as exc:
            raise RuntimeError(f"fold {k} failed: {exc}") from exc
        reports = evaluate_samples(bundle.generator, val)
        all_reports.extend((k, r) for r in reports)
        rows.append({"fold": str(k), **summarize(reports)})
    rows.append({"fold": "pooled", **summarize(r for _, r in all_reports)})
    result = {
        "rows": rows,
        "reports": [{"fold": k, **r.__dict__} for k, r in all_reports],
    }
    if out_dir is not None:
        write_crossval_report(result, out_dir / "crossval.csv", out_dir / "crossval.json")
    return result


CROSSVAL_COLUMNS = ("fold", "n", "psnr_db_mean", "psnr_db_sd", "nmse_mean", "nmse_sd", "ssim_mean", "ssim_sd")


def write_crossval_report(result: dict, csv_path, json_path) -> None:
    import csv

    csv_path, json_path = Path(csv_path), Path(json_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CROSSVAL_COLUMNS)
        w.writeheader()
        for row in result["rows"]:
            w.writerow({k: row[k] for k in CROSSVAL_COLUMNS})
    json_path.write_text(json.dumps(result, indent=2, default=str))
