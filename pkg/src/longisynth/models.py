"""3D U-Net generator and PatchGAN discriminators with time-map conditioning."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import torch
from torch import nn

from .time_conditioning import TimeExpander, TimeLag, concat_time_channel

VARIANTS = ("plain", "time_conditioned", "acgan")


@dataclass
class GeneratorConfig:
    levels: int = 6
    base_channels: int = 16
    in_channels: int = 4
    out_channels: int = 1
    patch_side: int = 128
    channel_cap: int = 16
    time_channels: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        div = 2 ** (self.levels - 1)
        if self.patch_side % div:
            raise ValueError(
                f"patch_side {self.patch_side} is not divisible by 2**(levels-1) = {div}"
            )
        if self.time_channels is not None:
            self.time_channels = tuple(self.time_channels)

    @property
    def widths(self) -> list[int]:
        cap = self.channel_cap * self.base_channels
        return [min(self.base_channels * 2**i, cap) for i in range(self.levels)]

    @property
    def resolution_ladder(self) -> list[int]:
        return [self.patch_side // 2**i for i in range(self.levels)]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DiscriminatorConfig:
    variant: str = "plain"
    in_channels: int = 5
    base_channels: int = 16
    n_classes: int = 0
    downsampling_blocks: int = 3
    patch_side: int = 128
    channel_cap: int = 8
    time_channels: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown discriminator variant {self.variant!r}; expected one of {VARIANTS}")
        if self.variant == "acgan" and self.n_classes < 2:
            raise ValueError("acgan discriminator needs n_classes >= 2")
        if self.downsampling_blocks < 1:
            raise ValueError("downsampling_blocks must be >= 1")
        if self.time_channels is not None:
            self.time_channels = tuple(self.time_channels)

    def score_side(self) -> int:
        return score_grid_side(self.patch_side, self.downsampling_blocks)

    def to_dict(self) -> dict:
        return asdict(self)


def conv_out(n: int, kernel: int, stride: int, padding: int) -> int:
    return (n + 2 * padding - kernel) // stride + 1


def score_grid_side(side: int, downsampling_blocks: int) -> int:
    """Side of the PatchGAN score grid: stride-2 blocks, then two stride-1 kernel-4 convs."""
    for _ in range(downsampling_blocks):
        side = conv_out(side, 4, 2, 1)
    for _ in range(2):
        side = conv_out(side, 4, 1, 1)
    return side


def _block(c_in, c_out, kernel=3, stride=1, padding=1, norm=True) -> nn.Sequential:
    layers: list[nn.Module] = [nn.Conv3d(c_in, c_out, kernel, stride, padding)]
    if norm:
        layers.append(nn.BatchNorm3d(c_out))
    layers.append(nn.LeakyReLU(0.2))
    return nn.Sequential(*layers)


def init_weights(module: nn.Module, std: float = 0.02) -> None:
    """Gaussian init for conv layers; time expanders keep their own init."""
    for m in module.modules():
        if isinstance(m, TimeExpander):
            m.reset_parameters()
        elif isinstance(m, (nn.Conv3d, nn.ConvTranspose3d)) and not _inside_expander(module, m):
            nn.init.normal_(m.weight, 0.0, std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm3d):
            nn.init.normal_(m.weight, 1.0, std)
            nn.init.zeros_(m.bias)


def _inside_expander(root: nn.Module, target: nn.Module) -> bool:
    for m in root.modules():
        if isinstance(m, TimeExpander) and any(target is l for l in m.layers):
            return True
    return False


class UNetGenerator(nn.Module):
    """Multi-level 3D U-Net; the time map joins after the first conv block."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        w = cfg.widths
        self.stem = _block(cfg.in_channels, w[0])
        self.expander = TimeExpander(cfg.patch_side, cfg.time_channels)
        self.stem2 = _block(w[0] + 1, w[0])
        self.down = nn.ModuleList(
            nn.Sequential(_block(w[i - 1], w[i], 4, 2, 1), _block(w[i], w[i]))
            for i in range(1, cfg.levels)
        )
        self.up = nn.ModuleList(
            nn.Sequential(
                nn.ConvTranspose3d(w[i], w[i - 1], 4, 2, 1),
                nn.BatchNorm3d(w[i - 1]),
                nn.LeakyReLU(0.2),
            )
            for i in range(1, cfg.levels)
        )
        self.merge = nn.ModuleList(_block(2 * w[i - 1], w[i - 1]) for i in range(1, cfg.levels))
        self.head = nn.Conv3d(w[0], cfg.out_channels, kernel_size=1)

    def time_map(self, years: torch.Tensor) -> torch.Tensor:
        return self.expander(years)

    def forward(self, source: torch.Tensor, years: torch.Tensor) -> torch.Tensor:
        side = self.cfg.patch_side
        if source.dim() != 5 or tuple(source.shape[1:]) != (self.cfg.in_channels, side, side, side):
            raise ValueError(
                f"generator expects (B, {self.cfg.in_channels}, {side}, {side}, {side}), got {tuple(source.shape)}"
            )
        x = self.stem(source)
        x = self.stem2(concat_time_channel(x, self.expander(years)))
        skips = [x]
        for down in self.down:
            x = down(x)
            skips.append(x)
        skips.pop()
        for up, merge in zip(reversed(self.up), reversed(self.merge)):
            x = up(x)
            x = merge(torch.cat([x, skips.pop()], dim=1))
        return torch.tanh(self.head(x))


class PatchDiscriminator(nn.Module):
    """Conditional PatchGAN over (source, candidate) with optional time map or class head."""

    def __init__(self, cfg: DiscriminatorConfig):
        super().__init__()
        self.cfg = cfg
        b = cfg.base_channels
        cap = cfg.channel_cap * b
        self.first = _block(cfg.in_channels, b, 4, 2, 1, norm=False)
        self.expander = None
        c = b
        if cfg.variant == "time_conditioned":
            self.expander = TimeExpander(conv_out(cfg.patch_side, 4, 2, 1), cfg.time_channels)
            c += 1
        blocks = []
        width = b
        for i in range(1, cfg.downsampling_blocks):
            width = min(b * 2**i, cap)
            blocks.append(_block(c, width, 4, 2, 1))
            c = width
        width = min(width * 2, cap)
        blocks.append(_block(c, width, 4, 1, 1))
        self.trunk = nn.Sequential(*blocks)
        self.out = nn.Conv3d(width, 1, 4, 1, 1)
        self.classifier = nn.Linear(width, cfg.n_classes) if cfg.variant == "acgan" else None

    @property
    def needs_time(self) -> bool:
        return self.cfg.variant == "time_conditioned"

    def forward(self, source: torch.Tensor, candidate: torch.Tensor, years: Optional[torch.Tensor] = None):
        if self.needs_time and years is None:
            raise ValueError("time_conditioned discriminator requires a time lag")
        if not self.needs_time and years is not None:
            raise ValueError(f"{self.cfg.variant} discriminator does not accept a time lag")
        if source.shape[-3:] != candidate.shape[-3:]:
            raise ValueError("source and candidate spatial shapes differ")
        x = torch.cat([source, candidate], dim=1)
        if x.shape[1] != self.cfg.in_channels:
            raise ValueError(f"discriminator expects {self.cfg.in_channels} channels, got {x.shape[1]}")
        x = self.first(x)
        if self.expander is not None:
            x = concat_time_channel(x, self.expander(years))
        feats = self.trunk(x)
        scores = torch.sigmoid(self.out(feats))
        posterior = None
        if self.classifier is not None:
            posterior = torch.softmax(self.classifier(feats.mean(dim=(2, 3, 4))), dim=1)
        return scores, posterior


def build_generator(cfg: GeneratorConfig, seed: Optional[int] = None) -> UNetGenerator:
    if seed is not None:
        torch.manual_seed(seed)
    g = UNetGenerator(cfg)
    init_weights(g)
    return g


def build_discriminator(cfg: DiscriminatorConfig, seed: Optional[int] = None) -> PatchDiscriminator:
    if seed is not None:
        torch.manual_seed(seed)
    d = PatchDiscriminator(cfg)
    init_weights(d)
    return d


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def _years_tensor(t, dtype) -> torch.Tensor:
    years = t.years if isinstance(t, TimeLag) else float(t)
    return torch.tensor([years], dtype=dtype)


def _param_dtype(module: nn.Module):
    return next(module.parameters()).dtype


def generator_forward(G: UNetGenerator, source, t: TimeLag) -> np.ndarray:
    """Run ``G`` on one unbatched (4, S, S, S) source; returns (1, S, S, S)."""
    dtype = _param_dtype(G)
    x = torch.as_tensor(np.asarray(source), dtype=dtype)
    if x.dim() != 4:
        raise ValueError(f"source must be (4, S, S, S), got {tuple(x.shape)}")
    with torch.no_grad():
        out = G(x[None], _years_tensor(t, dtype))
    return out[0].cpu().numpy()


def discriminator_forward(D: PatchDiscriminator, source, candidate, t: Optional[TimeLag] = None):
    """Score one unbatched pair; returns (score grid, class posterior or None)."""
    dtype = _param_dtype(D)
    src = torch.as_tensor(np.asarray(source), dtype=dtype)[None]
    cand = torch.as_tensor(np.asarray(candidate), dtype=dtype)[None]
    years = _years_tensor(t, dtype) if t is not None else None
    with torch.no_grad():
        scores, posterior = D(src, cand, years)
    return scores[0, 0].cpu().numpy(), (posterior[0].cpu().numpy() if posterior is not None else None)


def discriminator_for_arch(arch: str) -> Optional[str]:
    return {"unet": None, "gt_gan": "plain", "dt_gan": "time_conditioned", "acgan": "acgan"}[arch]
