import math

import pytest
import torch

from allweather.codes import WeatherCode, enumerate_codes
from allweather.discriminator import (
    PROB_EPS,
    WeatherDiscriminator,
    detection_probs,
    discriminator_forward,
)
from allweather.errors import ShapeError
from allweather.losses import (
    LossReport,
    PerceptualExtractor,
    labels_from_codes,
    loss_discriminator,
    loss_restoration_dis,
    perceptual_loss,
    total_restoration_loss,
)


def scalar_multilabel_ce(p, t):
    # independent evaluation: plain python floats, term by term
    return sum(-(ti * math.log(pi) + (1 - ti) * math.log(1 - pi)) for pi, ti in zip(p, t))


def scalar_confusion(p):
    return sum(-math.log(1 - pi) for pi in p)


def t(vals):
    return torch.tensor([vals], dtype=torch.float64)


def test_discriminator_output_contract():
    torch.manual_seed(0)
    disc = WeatherDiscriminator()
    import numpy as np

    img = np.random.default_rng(0).random((64, 64, 3)).astype(np.float32)
    p = discriminator_forward(img, disc)
    assert p.shape == (5,)
    assert ((p > 0) & (p < 1)).all()
    np.testing.assert_array_equal(p, discriminator_forward(img, disc))


def test_loss_discriminator_half_point():
    p = t([0.5] * 5)
    for labels in ([1, 0, 0, 0, 0], [1, 1, 1, 1, 1], [0, 0, 0, 0, 0]):
        v = float(loss_discriminator(p, t(labels)))
        assert v == pytest.approx(5 * math.log(2), abs=1e-12)


def test_loss_discriminator_perfect_prediction():
    p = t([1 - PROB_EPS, PROB_EPS, PROB_EPS, PROB_EPS, PROB_EPS])
    v = float(loss_discriminator(p, t([1, 0, 0, 0, 0])))
    assert v == pytest.approx(0.0, abs=1e-5)


def test_loss_discriminator_scalar_oracle():
    probs = [0.9, 0.1, 0.1, 0.1, 0.1]
    labels = [1, 0, 0, 0, 0]
    v = float(loss_discriminator(t(probs), t(labels)))
    assert v == pytest.approx(scalar_multilabel_ce(probs, labels), abs=1e-12)
    assert v == pytest.approx(5 * -math.log(0.9), abs=1e-9)


def test_loss_restoration_dis_values():
    assert float(loss_restoration_dis(t([0.5] * 5))) == pytest.approx(5 * math.log(2), abs=1e-12)
    near_zero = float(loss_restoration_dis(t([PROB_EPS] * 5)))
    assert near_zero == pytest.approx(0.0, abs=1e-5)
    probs = [0.9, 0.1, 0.1, 0.1, 0.1]
    v = float(loss_restoration_dis(t(probs)))
    assert v == pytest.approx(scalar_confusion(probs), abs=1e-12)
    assert v == pytest.approx(-math.log(0.1) - 4 * math.log(0.9), abs=1e-9)


def test_symmetric_point_identity_exact():
    # at p = 0.5 the discriminator CE and the confusion term agree exactly,
    # independent of the labels
    p = t([0.5] * 5)
    for labels in ([0, 1, 0, 1, 0], [1, 1, 1, 1, 1]):
        assert float(loss_discriminator(p, t(labels))) == float(loss_restoration_dis(p))


def test_losses_nonnegative_random():
    g = torch.Generator().manual_seed(1)
    for _ in range(20):
        p = torch.rand(3, 5, generator=g).double()
        labels = (torch.rand(3, 5, generator=g) > 0.5).double()
        assert float(loss_discriminator(p, labels)) >= 0
        assert float(loss_restoration_dis(p)) >= 0


def test_loss_shape_mismatch():
    with pytest.raises(ShapeError):
        loss_discriminator(t([0.5] * 5), torch.zeros(1, 4))


def test_perceptual_loss_zero_and_symmetry():
    ex = PerceptualExtractor()
    g = torch.Generator().manual_seed(2)
    r = torch.rand(1, 3, 32, 32, generator=g)
    c = torch.rand(1, 3, 32, 32, generator=g)
    assert float(perceptual_loss(r, r, ex)) == 0.0
    assert float(perceptual_loss(r, c, ex)) == pytest.approx(float(perceptual_loss(c, r, ex)), rel=1e-6)


def test_perceptual_loss_matches_stored_feature_recomputation():
    ex = PerceptualExtractor(seed=123)
    g = torch.Generator().manual_seed(3)
    r = torch.rand(1, 3, 32, 32, generator=g)
    c = torch.rand(1, 3, 32, 32, generator=g)
    feats_r = [f.clone() for f in ex.features(r)]
    feats_c = [f.clone() for f in ex.features(c)]
    expected = sum(float(((a - b) ** 2).mean()) for a, b in zip(feats_r, feats_c))
    assert float(perceptual_loss(r, c, ex)) == pytest.approx(expected, rel=1e-6)
    # extractor weights are a pure function of the seed
    ex2 = PerceptualExtractor(seed=123)
    assert float(perceptual_loss(r, c, ex2)) == float(perceptual_loss(r, c, ex))


def test_total_restoration_loss_reference_points():
    g = torch.Generator().manual_seed(4)
    c = torch.rand(1, 3, 16, 16, generator=g)

    rep = total_restoration_loss(c, c, t([PROB_EPS] * 5), lambda_dis=0.1)
    assert rep.total == pytest.approx(0.0, abs=1e-5)

    rep = total_restoration_loss(c, c, t([0.5] * 5), lambda_dis=0.1)
    assert rep.total == pytest.approx(0.1 * 5 * math.log(2), abs=1e-6)

    r = c.clone() + 0.25
    rep = total_restoration_loss(r, c, t([PROB_EPS] * 5), lambda_dis=0.1, extractor=None)
    assert rep.total == pytest.approx(0.25, abs=1e-5)


def test_loss_report_identity():
    rep = LossReport(l1=0.5, dis=2.0, per=0.25, map=0.1, total=0.5 + 0.1 * 2.0 + 0.25,
                     lambda_dis=0.1)
    assert rep.total == pytest.approx(rep.l1 + rep.lambda_dis * rep.dis + rep.per)


def test_total_matches_identity_for_random_inputs():
    g = torch.Generator().manual_seed(5)
    ex = PerceptualExtractor()
    for lam in (0.0, 0.01, 0.1, 0.2):
        r = torch.rand(2, 3, 16, 16, generator=g)
        c = torch.rand(2, 3, 16, 16, generator=g)
        p = torch.rand(2, 5, generator=g).clamp(0.01, 0.99)
        rep = total_restoration_loss(r, c, p, lambda_dis=lam, extractor=ex)
        assert rep.total == pytest.approx(rep.l1 + lam * rep.dis + rep.per, rel=1e-6)


def test_labels_from_codes_bijection():
    codes = enumerate_codes()
    labels = labels_from_codes(codes)
    assert labels.shape == (31, 5)
    for code, row in zip(codes, labels):
        assert tuple(int(v) for v in row) == tuple(int(b) for b in code.bits)
        assert WeatherCode.from_bits([bool(v) for v in row]) == code


def test_detection_probs_clamped():
    torch.manual_seed(6)
    disc = WeatherDiscriminator(base_width=8)
    x = torch.rand(2, 3, 32, 32) * 100  # extreme inputs
    with torch.no_grad():
        p = detection_probs(disc, x)
    assert float(p.min()) >= PROB_EPS
    assert float(p.max()) <= 1 - PROB_EPS
