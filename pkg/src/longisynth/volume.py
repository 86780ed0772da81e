from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .validation import check_array3d


@dataclass
class Volume:
    """A 3D scalar grid with voxel spacing and its intensity range."""

    voxels: np.ndarray
    spacing_mm: tuple[float, float, float] = (1.0, 1.0, 1.0)
    intensity_range: tuple[float, float] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.voxels = check_array3d(self.voxels)
        spacing = tuple(float(s) for s in self.spacing_mm)
        if len(spacing) != 3 or any(s <= 0 for s in spacing):
            raise ValueError(f"spacing_mm must be 3 positive reals, got {self.spacing_mm!r}")
        self.spacing_mm = spacing
        if self.intensity_range is None:
            self.intensity_range = (float(self.voxels.min()), float(self.voxels.max()))

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.voxels.shape)  # type: ignore[return-value]

    def with_voxels(self, voxels: np.ndarray) -> "Volume":
        return Volume(voxels, self.spacing_mm)
