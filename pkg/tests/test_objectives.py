import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from longisynth.objectives import (
    LossWeights,
    acgan_discriminator_loss,
    acgan_generator_loss,
    adversarial_generator_term,
    class_cross_entropy,
    gan_discriminator_loss,
    gan_generator_loss,
    l1_term,
)

NO_SMOOTH = LossWeights(real_label=1.0)
TOL = 1e-10


def test_l1_term():
    x = torch.tensor([0.3, -0.7, 0.1], dtype=torch.float64)
    assert l1_term(x, x).item() == 0
    assert l1_term(x + 0.5, x).item() == pytest.approx(0.5, abs=TOL)
    assert l1_term([0.2, -0.4], [0.0, 0.0]).item() == pytest.approx(0.3, abs=TOL)
    with pytest.raises(ValueError):
        l1_term([1.0, 2.0], [1.0])


def test_generator_loss_oracles():
    w = LossWeights()
    y = torch.zeros(4, dtype=torch.float64)
    half = torch.full((2, 3), 0.5, dtype=torch.float64)
    assert gan_generator_loss(half, y, y, w).item() == pytest.approx(math.log(2), abs=TOL)
    assert gan_generator_loss(half, y, y, w, mode="literal").item() == pytest.approx(math.log(0.5), abs=TOL)
    near_one = torch.full((3,), 1 - 1e-12, dtype=torch.float64)
    assert gan_generator_loss(near_one, y, y, w).item() < 1e-11
    scores = torch.tensor([0.2, 0.7], dtype=torch.float64)
    pred = torch.tensor([0.1, -0.3, 0.2, 0.0], dtype=torch.float64)
    expected = -(math.log(0.2) + math.log(0.7)) / 2
    assert gan_generator_loss(scores, pred, y, LossWeights(lambda_l1=0)).item() == pytest.approx(expected, abs=TOL)
    expected_lit = (math.log(0.8) + math.log(0.3)) / 2 + 300 * 0.15
    assert gan_generator_loss(scores, pred, y, w, mode="literal").item() == pytest.approx(expected_lit, abs=TOL)
    with pytest.raises(ValueError):
        gan_generator_loss(scores, pred, y, w, mode="bogus")


def test_scores_outside_open_interval_rejected():
    y = torch.zeros(2, dtype=torch.float64)
    with pytest.raises(ValueError):
        gan_generator_loss(torch.tensor([0.0, 0.5]), y, y, LossWeights())
    with pytest.raises(ValueError):
        gan_discriminator_loss(torch.tensor([1.0]), torch.tensor([0.5]), LossWeights())


def test_discriminator_loss_oracles():
    w = LossWeights(real_label=0.9)
    r = torch.full((8,), 0.9, dtype=torch.float64)
    f = torch.full((8,), 0.1, dtype=torch.float64)
    expected = -(0.9 * math.log(0.9) + 0.1 * math.log(0.1)) - math.log(0.9)
    assert gan_discriminator_loss(r, f, w).item() == pytest.approx(expected, abs=TOL)
    assert expected == pytest.approx(0.3251 + 0.1054, abs=1e-4)  # four-decimal hand sum
    half = torch.full((4,), 0.5, dtype=torch.float64)
    assert gan_discriminator_loss(half, half, NO_SMOOTH).item() == pytest.approx(2 * math.log(2), abs=TOL)
    floor = -(0.9 * math.log(0.9) + 0.1 * math.log(0.1))
    tiny = torch.full((4,), 1e-15, dtype=torch.float64)
    assert gan_discriminator_loss(r, tiny, w).item() == pytest.approx(floor, abs=1e-12)


def _eq2_objective(real, fake):
    # E[log D(x, y)] + E[log(1 - D(x, G(x, t)))] by explicit loops
    a = sum(math.log(v) for v in real) / len(real)
    b = sum(math.log(1 - v) for v in fake) / len(fake)
    return a + b


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(1e-6, 1 - 1e-6), min_size=2, max_size=8),
    st.lists(st.floats(1e-6, 1 - 1e-6), min_size=2, max_size=8),
)
def test_discriminator_loss_is_negated_objective(real, fake):
    got = gan_discriminator_loss(torch.tensor(real, dtype=torch.float64), torch.tensor(fake, dtype=torch.float64), NO_SMOOTH)
    assert got.item() == pytest.approx(-_eq2_objective(real, fake), abs=TOL)


def test_class_cross_entropy_oracles():
    assert class_cross_entropy(torch.tensor([[0.0, 1.0, 0.0]], dtype=torch.float64), 1).item() == 0
    assert class_cross_entropy(torch.full((2, 4), 0.25, dtype=torch.float64), [0, 3]).item() == pytest.approx(math.log(4), abs=TOL)
    assert class_cross_entropy([0.7, 0.2, 0.1], 0).item() == pytest.approx(-math.log(0.7), abs=TOL)
    with pytest.raises(ValueError):
        class_cross_entropy([0.7, 0.2, 0.1], 3)


def test_acgan_losses():
    w = LossWeights()
    y = torch.zeros(3, dtype=torch.float64)
    half = torch.full((3,), 0.5, dtype=torch.float64)
    post = torch.tensor([[0.25, 0.75]], dtype=torch.float64)
    got = acgan_generator_loss(half, post, 1, y, y, w).item()
    assert got == pytest.approx(math.log(2) - math.log(0.75), abs=TOL)
    assert got == pytest.approx(0.9808, abs=5e-5)
    uni = torch.full((1, 2), 0.5, dtype=torch.float64)
    assert acgan_generator_loss(half, uni, 0, y, y, w).item() == pytest.approx(2 * math.log(2), abs=TOL)
    onehot = torch.tensor([[0.0, 1.0]], dtype=torch.float64)
    assert acgan_generator_loss(half, onehot, 1, y, y, w).item() == pytest.approx(gan_generator_loss(half, y, y, w).item(), abs=TOL)
    r, f = torch.full((2,), 0.8, dtype=torch.float64), torch.full((2,), 0.3, dtype=torch.float64)
    uni4 = torch.full((1, 4), 0.25, dtype=torch.float64)
    d = acgan_discriminator_loss(r, f, uni4, uni4, 2, w).item()
    assert d == pytest.approx(gan_discriminator_loss(r, f, w).item() + 2 * math.log(4), abs=TOL)
    assert acgan_discriminator_loss(r, f, onehot, onehot, 1, w).item() == pytest.approx(gan_discriminator_loss(r, f, w).item(), abs=TOL)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 0.98), min_size=1, max_size=8), st.floats(0.001, 0.01))
def test_monotone_incentive(scores, bump):
    s = torch.tensor(scores, dtype=torch.float64)
    for mode in ("non_saturating", "literal"):
        assert adversarial_generator_term(s + bump, mode) < adversarial_generator_term(s, mode)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 0.99), min_size=2, max_size=8), st.floats(0.51, 1.0))
def test_losses_finite_non_negative(scores, real_label):
    s = torch.tensor(scores, dtype=torch.float64)
    w = LossWeights(real_label=real_label)
    y = torch.zeros(2, dtype=torch.float64)
    for v in (gan_discriminator_loss(s, s.flip(0), w), gan_generator_loss(s, y + 0.1, y, w)):
        assert math.isfinite(v.item()) and v.item() >= 0


def test_toy_gradients_match_finite_differences():
    # 1-parameter G: y_hat = tanh(a x); 1-parameter D: sigmoid(b * (x + y))
    x = torch.tensor([0.4, -0.8], dtype=torch.float64)
    y = torch.tensor([0.5, -0.2], dtype=torch.float64)
    w = LossWeights(lambda_l1=3.0)

    def losses(a, b):
        fake = torch.tanh(a * x)
        d_real = torch.sigmoid(b * (x + y))
        d_fake = torch.sigmoid(b * (x + fake))
        return gan_generator_loss(d_fake, fake, y, w), gan_discriminator_loss(d_real, d_fake, w)

    a0, b0, h = 0.7, -0.4, 1e-6
    for which in (0, 1):
        for wrt in ("a", "b"):
            a = torch.tensor(a0, dtype=torch.float64, requires_grad=True)
            b = torch.tensor(b0, dtype=torch.float64, requires_grad=True)
            losses(a, b)[which].backward()
            grad = (a if wrt == "a" else b).grad.item()
            da, db = (h, 0) if wrt == "a" else (0, h)
            with torch.no_grad():
                hi = losses(torch.tensor(a0 + da, dtype=torch.float64), torch.tensor(b0 + db, dtype=torch.float64))[which]
                lo = losses(torch.tensor(a0 - da, dtype=torch.float64), torch.tensor(b0 - db, dtype=torch.float64))[which]
            fd = (hi - lo).item() / (2 * h)
            assert grad == pytest.approx(fd, rel=1e-6), (which, wrt)


def test_loss_weights_validation():
    for kw in ({"lambda_l1": -1}, {"real_label": 0.5}, {"fake_label": 0.5}, {"lambda_cls": -0.1}):
        with pytest.raises(ValueError):
            LossWeights(**kw)
