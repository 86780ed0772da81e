import numpy as np
import pytest
from sklearn.base import clone

from longisynth import LongitudinalSynthesizer, VolumePreprocessor
from longisynth.volume import Volume

TINY = dict(levels=2, base_channels=2, d_base_channels=2, d_downsampling_blocks=1, n_classes=3,
            batch_size=24, epochs_const=1, epochs_decay=0, augment=False)


def test_params_and_clone():
    est = LongitudinalSynthesizer(arch="dt_gan", seed=5)
    c = clone(est)
    assert c.get_params() == est.get_params()
    assert c.set_params(lambda_l1=10.0).lambda_l1 == 10.0
    assert est.to_train_config().loss_weights.lambda_l1 == 300.0


def test_preprocessor(rng):
    vols = [rng.normal(size=(10, 10, 10)) for _ in range(2)]
    out = VolumePreprocessor(crop_shape=(8, 8, 8)).fit_transform(vols)
    assert all(isinstance(v, Volume) and v.shape == (8, 8, 8) for v in out)
    assert all(v.voxels.min() == -1 and v.voxels.max() == 1 for v in out)


def test_fit_predict_score_save(small_cohort, tmp_path):
    samples = small_cohort["samples"]
    train = [s for s in samples if s.participant_id != "sub06"]
    val = [s for s in samples if s.participant_id == "sub06"]
    est = LongitudinalSynthesizer(arch="acgan", **TINY).fit(train, X_val=val)
    preds = est.predict(val)
    assert len(preds) == len(val) and preds[0].shape == val[0].target.shape
    assert -1 <= est.score(val) <= 1
    assert [r["epoch"] for r in est.history_] == [0, 1]
    est.save(tmp_path / "m.pt")
    back = LongitudinalSynthesizer.from_checkpoint(tmp_path / "m.pt")
    # the checkpoint stores the resolved learning rate rather than the arch default marker
    assert back.get_params() == {**est.get_params(), "lr_g": 2e-4}
    np.testing.assert_array_equal(back.predict(val[:1])[0].voxels, preds[0].voxels)
    with pytest.raises(ValueError):
        est.predict_volume(val[0].source, 0)


def test_unfitted_and_bad_input():
    est = LongitudinalSynthesizer()
    with pytest.raises(Exception):
        est.generator_
    with pytest.raises(TypeError):
        est.fit([object()])
