"""Adversarial, reconstruction and auxiliary-classification losses.

All expectations are batch means. Discriminator objectives are written as
quantities to minimize (the negated log-likelihood objectives).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch

from .validation import check_open_unit

MODES = ("non_saturating", "literal")


@dataclass
class LossWeights:
    lambda_l1: float = 300.0
    real_label: float = 0.9
    fake_label: float = 0.0
    lambda_cls: float = 1.0

    def __post_init__(self):
        if self.lambda_l1 < 0:
            raise ValueError("lambda_l1 must be >= 0")
        if not 0.5 < self.real_label <= 1.0:
            raise ValueError("real_label must be in (0.5, 1]")
        if not 0.0 <= self.fake_label < 0.5:
            raise ValueError("fake_label must be in [0, 0.5)")
        if self.lambda_cls < 0:
            raise ValueError("lambda_cls must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


def _t(x) -> torch.Tensor:
    return x if isinstance(x, torch.Tensor) else torch.as_tensor(x, dtype=torch.float64)


def l1_term(pred, target) -> torch.Tensor:
    pred, target = _t(pred), _t(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    return (pred - target).abs().mean()


def _bce(scores: torch.Tensor, label: float) -> torch.Tensor:
    return -(label * torch.log(scores) + (1.0 - label) * torch.log1p(-scores)).mean()


def adversarial_generator_term(fake_scores, mode: str = "non_saturating") -> torch.Tensor:
    fake_scores = _t(fake_scores)
    check_open_unit(fake_scores, "fake_scores")
    if mode == "non_saturating":
        return -torch.log(fake_scores).mean()
    if mode == "literal":
        return torch.log1p(-fake_scores).mean()
    raise ValueError(f"unknown generator loss mode {mode!r}; expected one of {MODES}")


def gan_generator_loss(fake_scores, pred, target, w: LossWeights, mode: str = "non_saturating") -> torch.Tensor:
    """Adversarial term plus ``lambda_l1`` times the mean absolute error.

    ``literal`` uses ``mean log(1 - D)`` as written in the minimax game;
    ``non_saturating`` (default) uses ``mean -log D``.
    """
    return adversarial_generator_term(fake_scores, mode) + w.lambda_l1 * l1_term(pred, target)


def gan_discriminator_loss(real_scores, fake_scores, w: LossWeights) -> torch.Tensor:
    real_scores, fake_scores = _t(real_scores), _t(fake_scores)
    check_open_unit(real_scores, "real_scores")
    check_open_unit(fake_scores, "fake_scores")
    return _bce(real_scores, w.real_label) + _bce(fake_scores, w.fake_label)


def class_cross_entropy(posteriors, c) -> torch.Tensor:
    """Mean ``-log p(c)`` over the batch; ``posteriors`` is (B, n_classes)."""
    posteriors = _t(posteriors)
    if posteriors.dim() == 1:
        posteriors = posteriors[None]
    c = torch.as_tensor(c, dtype=torch.long).reshape(-1)
    n = posteriors.shape[1]
    if c.numel() not in (1, posteriors.shape[0]):
        raise ValueError("class labels do not match batch size")
    if bool((c < 0).any()) or bool((c >= n).any()):
        raise ValueError(f"class index out of range 0..{n - 1}: {c.tolist()}")
    c = c.expand(posteriors.shape[0])
    picked = posteriors.gather(1, c[:, None])[:, 0]
    return -torch.log(picked).mean()


def acgan_discriminator_loss(real_scores, fake_scores, real_posteriors, fake_posteriors, c, w: LossWeights) -> torch.Tensor:
    return gan_discriminator_loss(real_scores, fake_scores, w) + w.lambda_cls * (
        class_cross_entropy(real_posteriors, c) + class_cross_entropy(fake_posteriors, c)
    )


def acgan_generator_loss(fake_scores, fake_posteriors, c, pred, target, w: LossWeights, mode: str = "non_saturating") -> torch.Tensor:
    return gan_generator_loss(fake_scores, pred, target, w, mode) + w.lambda_cls * class_cross_entropy(fake_posteriors, c)
