import pytest

from longisynth.config import config_from_dict, dump_config, load_config


def test_paper_scale_values():
    c = config_from_dict(preset="paper_scale")
    t = c.train
    assert c.data.crop_shape == [150, 190, 150] or tuple(c.data.crop_shape) == (150, 190, 150)
    assert t.patch_shape == (128, 128, 128)
    assert (t.batch_size, t.epochs_const, t.epochs_decay) == (3, 150, 50)
    assert (t.beta1, t.beta2, t.weight_decay) == (0.5, 0.999, 7e-8)
    assert t.loss_weights.lambda_l1 == 300
    assert (t.lr_g, t.lr_d) == (2e-4, 2e-4)
    assert t.model.levels == 6
    assert t.model.discriminator_config(128).score_side() == 14
    unet = config_from_dict({"train": {"model": {"arch": "unet"}}}, preset="paper_scale")
    assert unet.train.lr_g == 7e-5


def test_paper_scale_round_trip(tmp_path):
    c = config_from_dict(preset="paper_scale")
    dump_config(c, tmp_path / "c.yaml")
    assert load_config(tmp_path / "c.yaml").to_dict() == c.to_dict()


def test_overrides_and_errors(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("model:\n  arch: dt_gan\ntrain:\n  seed: 4\n")
    c = load_config(p, overrides={"train": {"seed": 9}})
    assert c.train.arch == "dt_gan" and c.train.seed == 9 and c.preset == "desk_scale"
    with pytest.raises(ValueError, match="unknown"):
        config_from_dict({"train": {"bogus": 1}})
    with pytest.raises(ValueError):
        config_from_dict(preset="huge")
    with pytest.raises(ValueError):
        config_from_dict({"train": {"patch_shape": [24, 24, 16]}})
