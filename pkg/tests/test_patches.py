import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from longisynth.patches import aggregate_patches, extract_patches, plan_patch_layout
from longisynth.volume import Volume


def test_full_scale_layout_offsets():
    layout = plan_patch_layout((150, 190, 150), (128, 128, 128))
    assert layout.offsets_per_axis == ((0, 22), (0, 62), (0, 22))
    assert len(layout) == 8


def test_degenerate_and_oversized_layouts():
    layout = plan_patch_layout((24, 24, 24), (24, 24, 24))
    assert layout.offsets == [(0, 0, 0)]
    with pytest.raises(ValueError):
        plan_patch_layout((150, 150, 150), (160, 128, 128))


def test_identity_layout_returns_volume(rng):
    v = rng.normal(size=(6, 7, 8)).astype(np.float32)
    (p,) = extract_patches(Volume(v), plan_patch_layout(v.shape, v.shape))
    np.testing.assert_array_equal(p, v)


def test_corner_values_are_offset_indices():
    shape = (10, 12, 9)
    v = np.arange(np.prod(shape), dtype=np.float64).reshape(shape)
    layout = plan_patch_layout(shape, (6, 6, 6))
    patches = extract_patches(v, layout)
    assert len(patches) == 8
    for (ox, oy, oz), p in zip(layout.offsets, patches):
        assert p[0, 0, 0] == np.ravel_multi_index((ox, oy, oz), shape)
    # lexicographic order of offsets
    assert layout.offsets == sorted(layout.offsets)


def test_extract_shape_mismatch():
    layout = plan_patch_layout((10, 10, 10), (6, 6, 6))
    with pytest.raises(ValueError):
        extract_patches(np.zeros((10, 10, 11)), layout)


def test_aggregate_means():
    layout = plan_patch_layout((4, 4, 4), (4, 4, 4))
    both = type(layout)(layout.patch_shape, ((0, 0), (0,), (0,)), layout.full_shape)
    out = aggregate_patches([np.zeros((4, 4, 4)), np.ones((4, 4, 4))], both)
    np.testing.assert_allclose(out.voxels, 0.5)
    layout8 = plan_patch_layout((32, 32, 32), (24, 24, 24))
    out = aggregate_patches([np.full((24, 24, 24), 3.0)] * 8, layout8)
    np.testing.assert_allclose(out.voxels, 3.0)
    assert set(np.unique(layout8.coverage())) == {1, 2, 4, 8}


def test_aggregate_count_and_shape_errors():
    layout = plan_patch_layout((32, 32, 32), (24, 24, 24))
    with pytest.raises(ValueError):
        aggregate_patches([np.zeros((24, 24, 24))] * 7, layout)
    with pytest.raises(ValueError):
        aggregate_patches([np.zeros((24, 24, 23))] * 8, layout)


def test_aggregate_accepts_channel_axis():
    layout = plan_patch_layout((8, 8, 8), (6, 6, 6))
    v = np.random.default_rng(0).normal(size=(1, 8, 8, 8)).astype(np.float32)
    out = aggregate_patches(extract_patches(v, layout), layout)
    np.testing.assert_allclose(out.voxels, v[0], atol=1e-6)


@st.composite
def shapes(draw):
    full = tuple(draw(st.integers(1, 20)) for _ in range(3))
    patch = tuple(draw(st.integers(1, f)) for f in full)
    return full, patch


@settings(max_examples=60, deadline=None)
@given(shapes(), st.integers(0, 2**32 - 1))
def test_round_trip(cfg, seed):
    full, patch = cfg
    v = np.random.default_rng(seed).uniform(-1, 1, size=full).astype(np.float32)
    layout = plan_patch_layout(full, patch)
    out = aggregate_patches(extract_patches(Volume(v), layout), layout)
    np.testing.assert_allclose(out.voxels, v, atol=1e-6)
