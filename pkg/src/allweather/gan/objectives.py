"""Adversarial objective algebra for the weather generator and its critics.

The six scalar terms are the two source-adversarial values (realism and
pairing) and the four type-classification negative log-likelihoods (real and
fake, per critic). The combined objectives are fixed linear forms with
weights alpha = 1 (realism), beta = 2 (pairing) and lambda_cls = 3:

    L_G  = alpha * (-adv_rd + lambda_cls * cls_f_rd)
         + beta  * (-adv_pd + lambda_cls * cls_f_pd)
    L_RD = alpha * ( adv_rd + lambda_cls * cls_r_rd)
    L_PD = beta  * ( adv_pd + lambda_cls * cls_r_pd)

As with any saturating GAN form the critics ascend their adversarial value
while the generator descends the fake-side term; the training loop handles
those directions, everything here is value algebra shared with the logs and
the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from allweather.discriminator import clamp_probs


@dataclass(frozen=True)
class ObjectiveWeights:
    alpha: float = 1.0
    beta: float = 2.0
    lambda_cls: float = 3.0


@dataclass(frozen=True)
class GANTerms:
    adv_rd: float
    cls_r_rd: float
    cls_f_rd: float
    adv_pd: float
    cls_r_pd: float
    cls_f_pd: float


def source_adv_value(p_real, p_fake):
    """log p(real judged real) + log(1 - p(fake judged real))."""
    p_real = clamp_probs(torch.as_tensor(p_real, dtype=torch.float64))
    p_fake = clamp_probs(torch.as_tensor(p_fake, dtype=torch.float64))
    return float(p_real.log().mean() + (1.0 - p_fake).log().mean())


def class_nll_value(p_correct):
    """-log p(correct type)."""
    p = clamp_probs(torch.as_tensor(p_correct, dtype=torch.float64))
    return float(-p.log().mean())


def objectives(terms: GANTerms, weights: ObjectiveWeights = ObjectiveWeights()):
    """(L_G, L_RD, L_PD) from the six scalar terms."""
    a, b, lam = weights.alpha, weights.beta, weights.lambda_cls
    l_g = a * (-terms.adv_rd + lam * terms.cls_f_rd) + b * (-terms.adv_pd + lam * terms.cls_f_pd)
    l_rd = a * (terms.adv_rd + lam * terms.cls_r_rd)
    l_pd = b * (terms.adv_pd + lam * terms.cls_r_pd)
    return l_g, l_rd, l_pd


# -------------------------- network-level terms -----------------------------

def _type_nll(cls_logits: torch.Tensor, types: torch.Tensor) -> torch.Tensor:
    """-log softmax probability of the labelled type (5-way)."""
    logp = F.log_softmax(cls_logits, dim=-1)
    picked = logp.gather(1, types[:, None]).squeeze(1)
    return (-picked).mean()


def _src_adv(real_logit: torch.Tensor, fake_logit: torch.Tensor) -> torch.Tensor:
    p_real = clamp_probs(torch.sigmoid(real_logit))
    p_fake = clamp_probs(torch.sigmoid(fake_logit))
    return p_real.log().mean() + (1.0 - p_fake).log().mean()


def rd_losses(e, d, t, t_hat, rd):
    """Realism-critic terms: (adv_rd, cls_r_rd, cls_f_rd).

    e: real-world degraded batch with type labels t_hat; d: generated batch
    conditioned on types t. Probabilities are eps-clamped before every log.
    """
    real_src, real_cls = rd(e)
    fake_src, fake_cls = rd(d)
    return (
        _src_adv(real_src, fake_src),
        _type_nll(real_cls, t_hat),
        _type_nll(fake_cls, t),
    )


def pd_losses(c, h, d, t, t_hat, pd):
    """Pairing-critic terms: (adv_pd, cls_r_pd, cls_f_pd).

    Genuine pairs (c, h) carry labels t_hat; generated pairs (c, d) carry the
    conditioning types t. The critic always consumes channel-concatenated
    pairs.
    """
    real_src, real_cls = pd(c, h)
    fake_src, fake_cls = pd(c, d)
    return (
        _src_adv(real_src, fake_src),
        _type_nll(real_cls, t_hat),
        _type_nll(fake_cls, t),
    )
