"""Run configuration: dataclasses, presets and YAML round-tripping.

A config file is YAML with optional ``preset`` plus ``data``, ``model``,
``train`` and ``eval`` blocks; values in the file override the preset, and
command-line flags override the file.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any, Optional

import yaml

from .models import DiscriminatorConfig, GeneratorConfig, discriminator_for_arch
from .objectives import MODES, LossWeights

ARCHS = ("unet", "gt_gan", "dt_gan", "acgan")
PRESETS = ("desk_scale", "paper_scale")
GAN_LR = 2e-4
UNET_LR = 7e-5


@dataclass
class ModelConfig:
    arch: str = "acgan"
    levels: int = 4
    base_channels: int = 16
    channel_cap: int = 16
    time_channels: Optional[tuple[int, ...]] = None
    d_base_channels: int = 16
    d_downsampling_blocks: int = 2
    d_channel_cap: int = 8
    n_classes: int = 5

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"invalid arch {self.arch!r}; valid values: {', '.join(ARCHS)}")
        if self.time_channels is not None:
            self.time_channels = tuple(self.time_channels)

    @property
    def has_discriminator(self) -> bool:
        return self.arch != "unet"

    def generator_config(self, patch_side: int) -> GeneratorConfig:
        return GeneratorConfig(
            levels=self.levels,
            base_channels=self.base_channels,
            patch_side=patch_side,
            channel_cap=self.channel_cap,
            time_channels=self.time_channels,
        )

    def discriminator_config(self, patch_side: int) -> Optional[DiscriminatorConfig]:
        variant = discriminator_for_arch(self.arch)
        if variant is None:
            return None
        return DiscriminatorConfig(
            variant=variant,
            base_channels=self.d_base_channels,
            n_classes=self.n_classes if variant == "acgan" else 0,
            downsampling_blocks=self.d_downsampling_blocks,
            patch_side=patch_side,
            channel_cap=self.d_channel_cap,
        )


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    patch_shape: tuple[int, int, int] = (24, 24, 24)
    batch_size: int = 3
    epochs_const: int = 20
    epochs_decay: int = 10
    lr_g: Optional[float] = None
    lr_d: float = GAN_LR
    beta1: float = 0.5
    beta2: float = 0.999
    weight_decay: float = 7e-8
    seed: int = 0
    loss_weights: LossWeights = field(default_factory=LossWeights)
    generator_mode: str = "non_saturating"
    augment: bool = True
    max_steps: Optional[int] = None
    prefetch: bool = False
    dtype: str = "float32"

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig(**self.model)
        if isinstance(self.loss_weights, dict):
            self.loss_weights = LossWeights(**self.loss_weights)
        self.patch_shape = tuple(int(p) for p in self.patch_shape)  # type: ignore[assignment]
        if len(set(self.patch_shape)) != 1:
            raise ValueError(f"patch_shape must be cubic, got {self.patch_shape}")
        if self.lr_g is None:
            self.lr_g = UNET_LR if self.model.arch == "unet" else GAN_LR
        if self.lr_g <= 0 or self.lr_d <= 0:
            raise ValueError("learning rates must be > 0")
        if self.epochs_const < 0 or self.epochs_decay < 0 or self.epochs_const + self.epochs_decay < 1:
            raise ValueError("need at least one epoch")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.generator_mode not in MODES:
            raise ValueError(f"generator_mode must be one of {MODES}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    @property
    def arch(self) -> str:
        return self.model.arch

    @property
    def patch_side(self) -> int:
        return self.patch_shape[0]

    @property
    def total_epochs(self) -> int:
        return self.epochs_const + self.epochs_decay


@dataclass
class DataConfig:
    manifest: Optional[str] = None
    crop_shape: Optional[tuple[int, int, int]] = (32, 32, 32)
    crop_start: Optional[tuple[int, int, int]] = None
    fold_override: Optional[str] = None
    k: int = 5

    def __post_init__(self):
        if self.crop_shape is not None:
            self.crop_shape = tuple(int(c) for c in self.crop_shape)  # type: ignore[assignment]
        if self.crop_start is not None:
            self.crop_start = tuple(int(c) for c in self.crop_start)  # type: ignore[assignment]


@dataclass
class EvalConfig:
    metrics_csv: str = "metrics.csv"
    crossval_csv: str = "crossval.csv"
    crossval_json: str = "crossval.json"


@dataclass
class RunConfig:
    preset: str = "desk_scale"
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self) -> dict:
        return _plain(asdict(self))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


DESK_SCALE: dict[str, Any] = {
    "data": {"crop_shape": [32, 32, 32]},
    "train": {
        "patch_shape": [24, 24, 24],
        "epochs_const": 20,
        "epochs_decay": 10,
        "model": {"levels": 4, "base_channels": 16, "d_base_channels": 16, "d_downsampling_blocks": 2},
    },
}

PAPER_SCALE: dict[str, Any] = {
    "data": {"crop_shape": [150, 190, 150]},
    "train": {
        "patch_shape": [128, 128, 128],
        "batch_size": 3,
        "epochs_const": 150,
        "epochs_decay": 50,
        "lr_d": GAN_LR,
        "beta1": 0.5,
        "beta2": 0.999,
        "weight_decay": 7e-8,
        "loss_weights": {"lambda_l1": 300.0},
        "model": {"levels": 6, "base_channels": 32, "d_base_channels": 64, "d_downsampling_blocks": 3},
    },
}

_PRESET_VALUES = {"desk_scale": DESK_SCALE, "paper_scale": PAPER_SCALE}


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _build(cls, values: dict):
    known = {f.name: f for f in fields(cls)}
    unknown = set(values) - set(known)
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**values)


def config_from_dict(raw: Optional[dict] = None, preset: Optional[str] = None) -> RunConfig:
    raw = copy.deepcopy(raw or {})
    preset = preset or raw.pop("preset", None) or "desk_scale"
    raw.pop("preset", None)
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; expected one of {PRESETS}")
    merged = deep_merge(_PRESET_VALUES[preset], raw)
    # a top-level model block is shorthand for train.model
    if "model" in merged:
        merged.setdefault("train", {})
        merged["train"]["model"] = deep_merge(merged["train"].get("model", {}), merged.pop("model"))
    train_raw = dict(merged.get("train", {}))
    model = _build(ModelConfig, train_raw.pop("model", {}))
    weights = _build(LossWeights, train_raw.pop("loss_weights", {}))
    # re-derive lr_g from the arch unless given explicitly
    train = _build(TrainConfig, {**train_raw, "model": model, "loss_weights": weights})
    return RunConfig(
        preset=preset,
        data=_build(DataConfig, merged.get("data", {})),
        train=train,
        eval=_build(EvalConfig, merged.get("eval", {})),
    )


def load_config(path=None, preset: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    raw = {}
    if path is not None:
        raw = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: config must be a mapping")
    if overrides:
        raw = deep_merge(raw, overrides)
    return config_from_dict(raw, preset)


def dump_config(cfg: RunConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
    return path


def dataclass_to_dict(obj) -> dict:
    return _plain(asdict(obj)) if is_dataclass(obj) else dict(obj)
