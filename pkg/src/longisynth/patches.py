"""Overlapping patch decomposition and mean aggregation."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

from .validation import check_shape3
from .volume import Volume


@dataclass(frozen=True)
class PatchLayout:
    patch_shape: tuple[int, int, int]
    offsets_per_axis: tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]
    full_shape: tuple[int, int, int]

    @property
    def offsets(self) -> list[tuple[int, int, int]]:
        """Patch corner offsets in lexicographic order."""
        return list(product(*self.offsets_per_axis))

    def __len__(self) -> int:
        return int(np.prod([len(o) for o in self.offsets_per_axis]))

    def slices(self, i: int) -> tuple[slice, slice, slice]:
        o = self.offsets[i]
        return tuple(slice(s, s + p) for s, p in zip(o, self.patch_shape))  # type: ignore[return-value]

    def coverage(self) -> np.ndarray:
        count = np.zeros(self.full_shape, dtype=np.int32)
        for i in range(len(self)):
            count[self.slices(i)] += 1
        return count


def _axis_offsets(full: int, patch: int) -> tuple[int, ...]:
    if patch == full:
        return (0,)
    # {0, full - patch} whenever two patches cover the axis; otherwise evenly spaced extra offsets
    n = max(2, -(-full // patch))
    return tuple(int(round(x)) for x in np.linspace(0, full - patch, n))


def plan_patch_layout(full_shape, patch_shape) -> PatchLayout:
    """Per axis, place patches at ``0`` and ``full - patch`` (a single offset if equal).

    When two patches cannot cover an axis, evenly spaced offsets are added in between.
    """
    full = check_shape3(full_shape, "full_shape")
    patch = check_shape3(patch_shape, "patch_shape")
    if any(p > f for p, f in zip(patch, full)):
        raise ValueError(f"patch shape {patch} exceeds full shape {full}")
    offsets = tuple(_axis_offsets(f, p) for f, p in zip(full, patch))
    return PatchLayout(patch, offsets, full)  # type: ignore[arg-type]


def extract_patches(v, layout: PatchLayout) -> list[np.ndarray]:
    """Cut ``v`` (a Volume or an array whose last three axes are spatial) into patches."""
    arr = v.voxels if isinstance(v, Volume) else np.asarray(v)
    if tuple(arr.shape[-3:]) != layout.full_shape:
        raise ValueError(f"volume shape {arr.shape[-3:]} does not match layout {layout.full_shape}")
    lead = (slice(None),) * (arr.ndim - 3)
    return [arr[lead + layout.slices(i)].copy() for i in range(len(layout))]


def aggregate_patches(patches: Sequence[np.ndarray], layout: PatchLayout, spacing_mm=(1.0, 1.0, 1.0)) -> Volume:
    """Average overlapping patches back into a full volume."""
    if len(patches) != len(layout):
        raise ValueError(f"expected {len(layout)} patches, got {len(patches)}")
    acc = np.zeros(layout.full_shape, dtype=np.float64)
    for i, p in enumerate(patches):
        p = np.asarray(p)
        if p.ndim == 4 and p.shape[0] == 1:
            p = p[0]
        if tuple(p.shape) != layout.patch_shape:
            raise ValueError(f"patch {i} has shape {p.shape}, expected {layout.patch_shape}")
        acc[layout.slices(i)] += p
    acc /= layout.coverage()
    return Volume(acc.astype(np.float32), spacing_mm)
