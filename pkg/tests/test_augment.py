import numpy as np
import pytest

from longisynth.augment import affine_matrix, augment_array, augment_sample, warp_volume
from longisynth.data import Sample
from longisynth.volume import Volume


def _sphere(side, r):
    c = (side - 1) / 2
    g = np.indices((side,) * 3) - c
    return np.where(np.sqrt((g**2).sum(0)) <= r, 1.0, -1.0).astype(np.float32)


def _sample(rng, side=16):
    vols = [Volume(rng.uniform(-1, 1, size=(side,) * 3).astype(np.float32)) for _ in range(5)]
    return Sample("p", 1, 3, 730, 1, tuple(vols[:4]), vols[4])


def test_identity_transform(rng):
    s = _sample(rng)
    out = augment_sample(s, rng, angles_deg=(0, 0, 0), scale=1.0)
    for a, b in zip(out.source + (out.target,), s.source + (s.target,)):
        np.testing.assert_allclose(a.voxels, b.voxels, atol=1e-5)


def test_scale_grows_sphere_radius():
    side, r = 40, 8
    out = warp_volume(_sphere(side, r), affine_matrix((0, 0, 0), 1.1))
    # radius from the thresholded volume, via the sphere volume formula
    measured = (3 * (out > 0).sum() / (4 * np.pi)) ** (1 / 3)
    assert abs(measured - 1.1 * r) <= 1.0
    along_axis = (out[:, side // 2, side // 2] > 0).sum() / 2
    assert abs(along_axis - 1.1 * r) <= 1.0


def test_rotation_preserves_centered_sphere():
    v = _sphere(32, 7)
    out = warp_volume(v, affine_matrix((12, -12, 5), 1.0))
    assert abs(int((out > 0).sum()) - int((v > 0).sum())) / (v > 0).sum() < 0.03


def test_fill_value_is_background():
    v = np.ones((16, 16, 16), dtype=np.float32)
    out = warp_volume(v, affine_matrix((0, 0, 12), 0.9))
    assert out.min() == pytest.approx(-1.0)


def test_deterministic_and_label_safe(rng):
    s = _sample(rng)
    a = augment_sample(s, np.random.default_rng(5))
    b = augment_sample(s, np.random.default_rng(5))
    for x, y in zip(a.source + (a.target,), b.source + (b.target,)):
        assert np.array_equal(x.voxels, y.voxels)
    assert (a.time_lag_days, a.class_label) == (s.time_lag_days, s.class_label)


def test_transform_shared_across_channels(rng):
    base = _sphere(20, 5)
    stack = np.stack([base] * 5)
    out = augment_array(stack, np.random.default_rng(2))
    for ch in out[1:]:
        assert np.array_equal(ch, out[0])


def test_requires_loaded_sample(rng):
    s = Sample("p", 1, 2, 365, 0)
    with pytest.raises(ValueError):
        augment_sample(s, rng)
