"""Time-lag handling: normalization, learned spatial expansion and class labels.

The scalar lag in years seeds a 1x1x1 volume that a stack of stride-2
transposed convolutions grows into a one-channel map at patch resolution. The
map is concatenated onto a network's feature maps so different locations can
learn different temporal behaviour.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import torch
from torch import nn

DAYS_PER_YEAR = 365
DEFAULT_SCHEDULE = (8, 8, 8, 8, 4, 2, 1)


@dataclass(frozen=True)
class TimeLag:
    days: int
    years: float


def normalize_time_lag(days) -> TimeLag:
    if isinstance(days, bool) or int(days) != days:
        raise ValueError(f"time lag must be an integer number of days, got {days!r}")
    days = int(days)
    if days <= 0:
        raise ValueError(f"time lag must be > 0 days, got {days}")
    return TimeLag(days, days / DAYS_PER_YEAR)


@dataclass(frozen=True)
class ClassLabel:
    index: int
    nominal_years: int


def class_from_time_lag(days: int, n_classes: int) -> ClassLabel:
    """Round the lag to whole years (ties away from zero), clamp to [1, n_classes]."""
    if days <= 0:
        raise ValueError(f"time lag must be > 0 days, got {days}")
    if n_classes < 1:
        raise ValueError("n_classes must be >= 1")
    years = math.floor(days / DAYS_PER_YEAR + 0.5)
    years = min(max(years, 1), n_classes)
    return ClassLabel(years - 1, years)


def default_schedule(n_layers: int) -> tuple[int, ...]:
    """Scale the default 7-layer channel schedule to ``n_layers`` layers."""
    if n_layers <= len(DEFAULT_SCHEDULE):
        return DEFAULT_SCHEDULE[len(DEFAULT_SCHEDULE) - n_layers:]
    return (DEFAULT_SCHEDULE[0],) * (n_layers - len(DEFAULT_SCHEDULE)) + DEFAULT_SCHEDULE


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


class TimeExpander(nn.Module):
    """Transposed-convolution stack mapping a scalar lag to a ``side``-cubed map.

    Each layer doubles the spatial side (kernel 4, stride 2, padding 1). Sides
    that are not a power of two are produced by expanding to the next power of
    two and center-cropping.
    """

    def __init__(self, side: int, channels: Optional[Sequence[int]] = None):
        super().__init__()
        if side < 1:
            raise ValueError(f"side must be >= 1, got {side}")
        self.side = int(side)
        self.full_side = _next_pow2(self.side)
        n_layers = int(math.log2(self.full_side))
        channels = tuple(channels) if channels is not None else default_schedule(n_layers)
        if len(channels) != n_layers:
            raise ValueError(f"side {side} needs {n_layers} layers, channel schedule has {len(channels)}")
        if channels and channels[-1] != 1:
            raise ValueError("channel schedule must end in 1")
        self.channels = channels
        layers = []
        c_in = 1
        for c_out in channels:
            layers.append(nn.ConvTranspose3d(c_in, c_out, kernel_size=4, stride=2, padding=1))
            c_in = c_out
        self.layers = nn.ModuleList(layers)
        self.reset_parameters()

    def reset_parameters(self):
        # fan-in aware init: from a 1-voxel seed, a tiny N(0, 0.02) init would shrink the map
        # geometrically with depth and leave the time path untrainable
        for layer in self.layers:
            fan_in = layer.in_channels * 8
            nn.init.normal_(layer.weight, 0.0, math.sqrt(2.0 / (1 + 0.2**2)) / math.sqrt(fan_in))
            nn.init.zeros_(layer.bias)

    def forward(self, years: torch.Tensor) -> torch.Tensor:
        """``years``: shape (B,) or (B, 1). Returns (B, 1, side, side, side)."""
        x = years.reshape(-1, 1, 1, 1, 1).to(self._dtype())
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = nn.functional.leaky_relu(x, 0.2)
        if self.full_side != self.side:
            lo = (self.full_side - self.side) // 2
            x = x[:, :, lo:lo + self.side, lo:lo + self.side, lo:lo + self.side]
        return x

    def _dtype(self):
        for p in self.parameters():
            return p.dtype
        return torch.get_default_dtype()


def expand_time_map(t: TimeLag, expander: TimeExpander) -> torch.Tensor:
    """Expand one time lag into its (1, S, S, S) map."""
    years = torch.tensor([t.years], dtype=expander._dtype())
    return expander(years)[0]


def concat_time_channel(features: torch.Tensor, tm: torch.Tensor) -> torch.Tensor:
    """Append the time map as the last channel.

    Works on unbatched (C, X, Y, Z) or batched (B, C, X, Y, Z) tensors; ``tm`` has
    a single channel in the matching layout.
    """
    channel_dim = features.dim() - 4
    if channel_dim not in (0, 1):
        raise ValueError(f"features must be 4D or 5D, got {features.dim()}D")
    if features.shape[channel_dim] < 1:
        raise ValueError("features must have at least one channel")
    if tm.dim() != features.dim() or tm.shape[channel_dim] != 1:
        raise ValueError(f"time map must be single-channel with {features.dim()} dims, got {tuple(tm.shape)}")
    if tm.shape[-3:] != features.shape[-3:]:
        raise ValueError(f"spatial shape mismatch: features {tuple(features.shape[-3:])} vs time map {tuple(tm.shape[-3:])}")
    if channel_dim == 1 and tm.shape[0] != features.shape[0]:
        raise ValueError("batch size mismatch between features and time map")
    return torch.cat([features, tm.to(features.dtype)], dim=channel_dim)
