"""Shared random rotation + isotropic scaling applied to every volume of a sample."""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from scipy import ndimage
from scipy.spatial.transform import Rotation

from .data import Sample

MAX_ANGLE_DEG = 12.0
SCALE_RANGE = (0.9, 1.1)
FILL_VALUE = -1.0


def affine_matrix(angles_deg, scale: float) -> np.ndarray:
    """Forward map: rotate by the xyz Euler ``angles_deg``, then scale isotropically."""
    rot = Rotation.from_euler("xyz", angles_deg, degrees=True).as_matrix()
    return scale * rot


def warp_volume(arr: np.ndarray, forward: np.ndarray, cval: float = FILL_VALUE) -> np.ndarray:
    """Resample ``arr`` under ``forward`` about the volume center (trilinear)."""
    center = (np.asarray(arr.shape, dtype=np.float64) - 1.0) / 2.0
    inv = np.linalg.inv(forward)
    # affine_transform maps output coords to input coords: in = inv @ (out - c) + c
    offset = center - inv @ center
    out = ndimage.affine_transform(
        arr.astype(np.float64), inv, offset=offset, order=1, mode="constant", cval=cval
    )
    return out.astype(np.float32)


def draw_transform(rng: np.random.Generator):
    angles = rng.uniform(-MAX_ANGLE_DEG, MAX_ANGLE_DEG, size=3)
    scale = rng.uniform(*SCALE_RANGE)
    return angles, float(scale)


def augment_array(stack: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Apply one random transform to every channel of a (C, X, Y, Z) stack."""
    angles, scale = draw_transform(rng)
    forward = affine_matrix(angles, scale)
    return np.stack([warp_volume(ch, forward) for ch in stack])


def augment_sample(s: Sample, rng: np.random.Generator, angles_deg=None, scale=None) -> Sample:
    """Return a copy of ``s`` with one shared spatial transform applied to all 5 volumes.

    Rotation angles and scale are drawn from ``rng`` unless given explicitly.
    """
    if not s.is_loaded:
        raise ValueError("augment_sample needs a materialized sample")
    if angles_deg is None or scale is None:
        drawn_angles, drawn_scale = draw_transform(rng)
        angles_deg = drawn_angles if angles_deg is None else angles_deg
        scale = drawn_scale if scale is None else scale
    forward = affine_matrix(angles_deg, scale)
    source = tuple(v.with_voxels(warp_volume(v.voxels, forward)) for v in s.source)
    target = s.target.with_voxels(warp_volume(s.target.voxels, forward))
    return replace(s, source=source, target=target)
