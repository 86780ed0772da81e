import hashlib
import math

import numpy as np
import pytest

from longisynth.data import build_sample_pairs, load_manifest, normalize_to_signed_unit
from longisynth.phantom import (
    ISBI_PROFILE,
    LesionSpec,
    ParticipantSpec,
    PhantomConfig,
    TISSUE_INTENSITY,
    brain_mask,
    generate_cohort,
    lesion_volume,
    load_brain_mask,
    load_truth,
    participant_specs,
    profile_from_string,
    render_study,
    tissue_fractions,
)
from longisynth.volume import Volume
from longisynth.volume_io import read_volume

CENTER = (15.5, 15.5, 15.5)


def _single(lesion, days=(0, 365, 730)):
    return ParticipantSpec("p01", lesion.kind, list(days), [lesion], 1)


def _digest(d):
    h = hashlib.sha256()
    for p in sorted(d.rglob("*")):
        if p.is_file():
            h.update(p.name.encode())
            h.update(read_volume(p).voxels.tobytes() if p.name.startswith("tp") else p.read_bytes())
    return h.hexdigest()


def test_isbi_shape_pair_count():
    specs = participant_specs(PhantomConfig(profile=ISBI_PROFILE))
    assert len(specs) == 19
    n = [len(s.days) for s in specs]
    assert sum(k * (k - 1) // 2 for k in n) == 139


def test_same_seed_bit_identical(tmp_path):
    cfg = PhantomConfig(profile=((2, 2),), seed=7, side=24, semi_axes=(10, 11, 9))
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    generate_cohort(cfg, a)
    generate_cohort(cfg, b)
    assert _digest(a) == _digest(b)


def test_missing_out_dir(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope"):
        generate_cohort(PhantomConfig(profile=((1, 2),)), tmp_path / "nope")


def test_rendered_radius_follows_rule():
    cfg = PhantomConfig()
    spec = _single(LesionSpec(CENTER, r0=3.0, rate=1.0))
    frac = tissue_fractions(spec, 730, cfg)[3]
    # equivalent-sphere radius of the partial-volume lesion map
    r = (3 * frac.sum() / (4 * math.pi)) ** (1 / 3)
    assert abs(r - 5.0) <= 0.5
    assert frac[15, 15, 15] == 1.0


def test_sphere_lesion_volume_oracle():
    cfg = PhantomConfig(noise=0.0)
    spec = _single(LesionSpec(CENTER, r0=4.0, rate=0.0), days=(0,))
    flair = normalize_to_signed_unit(Volume(render_study(spec, 1, cfg)["FLAIR"])).voxels
    wm, les = TISSUE_INTENSITY[2, 3], TISSUE_INTENSITY[3, 3]
    lo, hi = TISSUE_INTENSITY[:, 3].min(), TISSUE_INTENSITY[:, 3].max()
    threshold = 2 * ((wm + les) / 2 - lo) / (hi - lo) - 1
    count = lesion_volume(flair, threshold, brain_mask(cfg))
    analytic = 4 / 3 * math.pi * 4**3
    assert abs(count - analytic) / analytic < 0.15
    assert lesion_volume(flair, flair.max() + 1) == 0


def test_growth_lesion_count_increases():
    cfg = PhantomConfig(noise=0.0)
    spec = _single(LesionSpec(CENTER, r0=2.0, rate=1.0))
    counts = [lesion_volume(render_study(spec, tp, cfg)["FLAIR"], 0.7) for tp in (1, 2, 3)]
    assert counts[0] < counts[1] < counts[2]


def test_remission_and_atrophy():
    cfg = PhantomConfig(noise=0.0)
    rem = _single(LesionSpec(CENTER, r0=3.0, rate=-1.0, kind="remission"))
    atr = _single(LesionSpec(CENTER, r0=3.0, rate=-1.0, kind="atrophy"))
    r1, r3 = (render_study(rem, tp, cfg)["FLAIR"] for tp in (1, 3))
    a3 = render_study(atr, 3, cfg)["FLAIR"]
    assert lesion_volume(r3, 0.7) < lesion_volume(r1, 0.7)
    # the vacated region reads as healthy white matter after remission, darker after atrophy
    assert a3[15, 15, 17] < r3[15, 15, 17]


@pytest.fixture(scope="module")
def cohort(tmp_path_factory):
    d = tmp_path_factory.mktemp("ph")
    cfg = PhantomConfig(profile=((3, 3), (1, 4)), seed=5)
    return d, cfg, generate_cohort(cfg, d)


def test_manifest_valid_and_consistent(cohort):
    d, cfg, manifest = cohort
    records = load_manifest(manifest)
    assert len(records) == 3 * 3 + 4
    assert len(build_sample_pairs(records)) == 3 * 3 + 6
    specs = {s.participant_id: s for s in participant_specs(cfg)}
    truth = load_truth(d)
    assert [p["participant_id"] for p in truth["participants"]] == sorted(specs)
    for rec in records:
        expected = render_study(specs[rec.participant_id], rec.timepoint_index, cfg)
        for m, path in rec.modality_paths.items():
            assert np.array_equal(read_volume(path).voxels, expected[m])
    assert np.array_equal(load_brain_mask(d), brain_mask(cfg))


def test_signal_exceeds_noise(cohort):
    d, cfg, _ = cohort
    for spec in participant_specs(cfg):
        frac_last = tissue_fractions(spec, spec.days[-1], cfg)
        frac_first = tissue_fractions(spec, 0, cfg)
        changed = (np.maximum(frac_last[3], frac_first[3]) > 0.5)
        src = render_study(spec, 1, cfg)["FLAIR"]
        tgt = render_study(spec, len(spec.days), cfg)["FLAIR"]
        assert np.abs(tgt - src)[changed].mean() > 5 * cfg.noise


def test_profile_from_string():
    assert profile_from_string("14x4,4x5,1x6") == ISBI_PROFILE


def test_lesion_spec_validation():
    with pytest.raises(ValueError):
        LesionSpec(CENTER, r0=0.0, rate=1.0)
    with pytest.raises(ValueError):
        LesionSpec(CENTER, r0=1.0, rate=1.0, kind="bogus")
    assert LesionSpec(CENTER, r0=2.0, rate=-1.0).radius(5) == 0.0


def test_lesion_overflow():
    with pytest.raises(ValueError, match="lesion overflow"):
        participant_specs(PhantomConfig(profile=((1, 6),), growth_rate=(5.0, 6.0), kind_weights={"growth": 1.0}))
