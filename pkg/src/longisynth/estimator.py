"""scikit-learn style wrappers around preprocessing and the trainer.

``LongitudinalSynthesizer`` exposes ``fit`` / ``predict`` / ``score`` and
``get_params`` / ``set_params`` so it can be cloned, grid-searched or wrapped
like any other estimator. Its ``X`` is a list of :class:`~longisynth.data.Sample`.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .config import ModelConfig, TrainConfig
from .data import Sample, center_crop, normalize_to_signed_unit
from .metrics import evaluate_pair
from .objectives import LossWeights
from .trainer import ModelBundle, fit, load_checkpoint, predict_volume, save_checkpoint
from .validation import check_positive_days
from .volume import Volume


class VolumePreprocessor(TransformerMixin, BaseEstimator):
    """Center-crop then rescale each volume to [-1, 1]. Stateless."""

    def __init__(self, crop_shape=None, crop_start=None, normalize=True):
        self.crop_shape = crop_shape
        self.crop_start = crop_start
        self.normalize = normalize

    def fit(self, X, y=None):
        self.n_volumes_seen_ = len(X)
        return self

    def transform(self, X) -> list[Volume]:
        out = []
        for v in X:
            v = v if isinstance(v, Volume) else Volume(v)
            if self.crop_shape is not None:
                v = center_crop(v, self.crop_shape, self.crop_start)
            if self.normalize:
                v = normalize_to_signed_unit(v)
            out.append(v)
        return out


def _check_samples(X, need_target: bool = True) -> list[Sample]:
    X = list(X)
    if not X:
        raise ValueError("no samples given")
    for s in X:
        if not isinstance(s, Sample):
            raise TypeError(f"expected Sample, got {type(s).__name__}")
        if s.source is None or (need_target and s.target is None):
            raise ValueError(f"sample {s.participant_id} has no loaded volumes")
    return X


class LongitudinalSynthesizer(BaseEstimator):
    """Predicts a future FLAIR volume from earlier modalities and a time lag in days."""

    def __init__(
        self,
        arch="acgan",
        patch_shape=(24, 24, 24),
        levels=4,
        base_channels=16,
        d_base_channels=16,
        d_downsampling_blocks=2,
        n_classes=5,
        batch_size=3,
        epochs_const=20,
        epochs_decay=10,
        lr_g=None,
        lr_d=2e-4,
        weight_decay=7e-8,
        lambda_l1=300.0,
        real_label=0.9,
        generator_mode="non_saturating",
        augment=True,
        max_steps=None,
        seed=0,
        dtype="float32",
    ):
        self.arch = arch
        self.patch_shape = patch_shape
        self.levels = levels
        self.base_channels = base_channels
        self.d_base_channels = d_base_channels
        self.d_downsampling_blocks = d_downsampling_blocks
        self.n_classes = n_classes
        self.batch_size = batch_size
        self.epochs_const = epochs_const
        self.epochs_decay = epochs_decay
        self.lr_g = lr_g
        self.lr_d = lr_d
        self.weight_decay = weight_decay
        self.lambda_l1 = lambda_l1
        self.real_label = real_label
        self.generator_mode = generator_mode
        self.augment = augment
        self.max_steps = max_steps
        self.seed = seed
        self.dtype = dtype

    def to_train_config(self) -> TrainConfig:
        return TrainConfig(
            model=ModelConfig(
                arch=self.arch,
                levels=self.levels,
                base_channels=self.base_channels,
                d_base_channels=self.d_base_channels,
                d_downsampling_blocks=self.d_downsampling_blocks,
                n_classes=self.n_classes,
            ),
            patch_shape=tuple(self.patch_shape),
            batch_size=self.batch_size,
            epochs_const=self.epochs_const,
            epochs_decay=self.epochs_decay,
            lr_g=self.lr_g,
            lr_d=self.lr_d,
            weight_decay=self.weight_decay,
            seed=self.seed,
            loss_weights=LossWeights(lambda_l1=self.lambda_l1, real_label=self.real_label),
            generator_mode=self.generator_mode,
            augment=self.augment,
            max_steps=self.max_steps,
            dtype=self.dtype,
        )

    def fit(self, X: Sequence[Sample], y=None, X_val: Optional[Sequence[Sample]] = None, out_dir=None):
        X = _check_samples(X)
        X_val = _check_samples(X_val) if X_val else []
        self.bundle_, self.history_ = fit(X, X_val, self.to_train_config(), out_dir=out_dir)
        self.volume_shape_ = X[0].target.shape
        return self

    @property
    def generator_(self):
        check_is_fitted(self, "bundle_")
        return self.bundle_.generator

    def predict_volume(self, sources, time_lag_days: int) -> Volume:
        """Predict from 4 preprocessed source volumes at ``time_lag_days`` into the future."""
        check_positive_days(time_lag_days)
        return predict_volume(self.generator_, sources, time_lag_days, normalize=False)

    def predict(self, X: Sequence[Sample]) -> list[Volume]:
        X = _check_samples(X, need_target=False)
        return [self.predict_volume(s.source, s.time_lag_days) for s in X]

    def score(self, X: Sequence[Sample], y=None) -> float:
        """Mean whole-volume SSIM against each sample's target (higher is better)."""
        X = _check_samples(X)
        return float(np.mean([evaluate_pair(p.voxels, s.target.voxels).ssim for p, s in zip(self.predict(X), X)]))

    def save(self, path):
        check_is_fitted(self, "bundle_")
        return save_checkpoint(self.bundle_, path)

    @classmethod
    def from_checkpoint(cls, path) -> "LongitudinalSynthesizer":
        bundle, _ = load_checkpoint(path)
        return cls.from_bundle(bundle)

    @classmethod
    def from_bundle(cls, bundle: ModelBundle) -> "LongitudinalSynthesizer":
        c = bundle.config
        est = cls(
            arch=c.arch,
            patch_shape=c.patch_shape,
            levels=c.model.levels,
            base_channels=c.model.base_channels,
            d_base_channels=c.model.d_base_channels,
            d_downsampling_blocks=c.model.d_downsampling_blocks,
            n_classes=c.model.n_classes,
            batch_size=c.batch_size,
            epochs_const=c.epochs_const,
            epochs_decay=c.epochs_decay,
            lr_g=c.lr_g,
            lr_d=c.lr_d,
            weight_decay=c.weight_decay,
            lambda_l1=c.loss_weights.lambda_l1,
            real_label=c.loss_weights.real_label,
            generator_mode=c.generator_mode,
            augment=c.augment,
            max_steps=c.max_steps,
            seed=c.seed,
            dtype=c.dtype,
        )
        est.bundle_ = bundle
        est.history_ = list(bundle.history)
        return est
