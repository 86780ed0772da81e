"""Input validation helpers shared by the estimators and pipeline functions."""

from __future__ import annotations

from typing import Sequence

import numpy as np


def check_shape3(shape: Sequence[int], name: str = "shape") -> tuple[int, int, int]:
    """Coerce ``shape`` to a tuple of three positive ints or raise ``ValueError``."""
    try:
        out = tuple(int(s) for s in shape)
    except TypeError as exc:
        raise ValueError(f"{name} must be a sequence of 3 integers, got {shape!r}") from exc
    if len(out) != 3 or any(s <= 0 for s in out):
        raise ValueError(f"{name} must be 3 positive integers, got {shape!r}")
    return out  # type: ignore[return-value]


def check_array3d(voxels, name: str = "voxels", dtype=np.float32) -> np.ndarray:
    arr = np.asarray(voxels, dtype=dtype)
    if arr.ndim != 3:
        raise ValueError(f"{name} must be a 3D array, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_positive_days(days) -> int:
    if isinstance(days, bool) or int(days) != days:
        raise ValueError(f"time lag must be an integer number of days, got {days!r}")
    days = int(days)
    if days <= 0:
        raise ValueError(f"time lag must be > 0 days, got {days}")
    return days


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "inputs") -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what} shape mismatch: {a.shape} vs {b.shape}")


def check_open_unit(scores, name: str = "scores") -> None:
    """Raise if any score falls outside the open interval (0, 1)."""
    if hasattr(scores, "detach"):
        scores = scores.detach()
    lo = float(scores.min())
    hi = float(scores.max())
    if not (lo > 0.0 and hi < 1.0):
        raise ValueError(f"{name} must lie in (0, 1), got range [{lo}, {hi}]")
