"""Restoration training objectives.

The discriminator is fit with a five-class multilabel cross-entropy over
which degradations the restored image still shows; the restorer combines a
pixel L1 term, the adversarial confusion term (push every detection
probability toward zero) weighted by lambda_dis, and a perceptual distance
under a frozen feature extractor. The mapping head's cosine objective is
tracked separately since it trains the mapping network alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from allweather.discriminator import clamp_probs
from allweather.errors import ShapeError

DEFAULT_LAMBDA_DIS = 0.1
LAMBDA_DIS_SWEEP = (0.01, 0.05, 0.10, 0.15, 0.20)

PERCEPTUAL_SEED = 7775777


def loss_discriminator(p: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
    """Multilabel cross-entropy summed over the 5 classes (mean over batchex)."""
    if p.shape != t.shape:
        raise ShapeError(f"probability/label shape mismatch {p.shape} vs {t.shape}")
    p = clamp_probs(p)
    per_class = -(t * p.log() + (1.0 - t) * (1.0 - p).log())
    return per_class.sum(dim=-1).mean()


def loss_restoration_dis(p: torch.Tensor) -> torch.Tensor:
    """Confusion term: -sum log(1 - p_i) over the 5 classes (mean over batch)."""
    p = clamp_probs(p)
    return (-(1.0 - p).log()).sum(dim=-1).mean()


class PerceptualExtractor(nn.Module):
    """Frozen random 3-stage convolutional pyramid with fixed seeded weights.

    Stands in for a pretrained feature network at desk scale; the weights are
    a pure function of the seed, so the loss is a stable, deterministic
    distance. Swap in a pretrained extractor by replacing this module.
    """

    def __init__(self, seed: int = PERCEPTUAL_SEED):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        chans = [3, 16, 32, 64]
        stages = []
        for cin, cout in zip(chans, chans[1:]):
            conv = nn.Conv2d(cin, cout, 3, stride=2, padding=1)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * 0.2)
                conv.bias.zero_()
            stages.append(nn.Sequential(conv, nn.GELU()))
        self.stages = nn.ModuleList(stages)
        for p in self.parameters():
            p.requires_grad_(False)

    def features(self, x: torch.Tensor) -> list[torch.Tensor]:
        out = []
        for stage in self.stages:
            x = stage(x)
            out.append(x)
        return out


def perceptual_loss(r: torch.Tensor, c: torch.Tensor, extractor: PerceptualExtractor) -> torch.Tensor:
    """Mean squared feature distance summed over the extractor's 3 stages."""
    if r.shape != c.shape:
        raise ShapeError(f"shape mismatch {r.shape} vs {c.shape}")
    total = r.new_zeros(())
    for fr, fc in zip(extractor.features(r), extractor.features(c)):
        total = total + (fr - fc).pow(2).mean()
    return total


@dataclass(frozen=True)
class LossReport:
    l1: float
    dis: float
    per: float
    map: float
    total: float
    lambda_dis: float


def restoration_loss_terms(
    r: torch.Tensor,
    c: torch.Tensor,
    p: torch.Tensor,
    *,
    lambda_dis: float = DEFAULT_LAMBDA_DIS,
    extractor: PerceptualExtractor | None = None,
):
    """Differentiable (total, l1, dis, per) tensors for one batch."""
    if r.shape != c.shape:
        raise ShapeError(f"shape mismatch {r.shape} vs {c.shape}")
    l1 = (r - c).abs().mean()
    dis = loss_restoration_dis(p)
    per = perceptual_loss(r, c, extractor) if extractor is not None else r.new_zeros(())
    total = l1 + per
    if lambda_dis != 0.0:
        total = total + lambda_dis * dis
    return total, l1, dis, per


def total_restoration_loss(
    r: torch.Tensor,
    c: torch.Tensor,
    p: torch.Tensor,
    *,
    lambda_dis: float = DEFAULT_LAMBDA_DIS,
    extractor: PerceptualExtractor | None = None,
    map_value: float = 0.0,
) -> LossReport:
    total, l1, dis, per = restoration_loss_terms(
        r, c, p, lambda_dis=lambda_dis, extractor=extractor
    )
    return LossReport(
        l1=float(l1),
        dis=float(dis),
        per=float(per),
        map=float(map_value),
        total=float(total),
        lambda_dis=lambda_dis,
    )


def labels_from_codes(codes, dtype=torch.float32) -> torch.Tensor:
    """WeatherCode list -> [B, 5] multilabel targets in code bit order."""
    return torch.tensor([[float(b) for b in code.bits] for code in codes], dtype=dtype)
