"""Alternating adversarial update: discriminator first, restorer second.

The discriminator learns to name the degradations still visible in the
(detached) restored output; the restorer then minimizes its combined loss,
whose confusion term pushes all five detection probabilities toward zero.
In feature-level mode the discriminator reads the encoder's bottleneck
features instead of the restored image. Each update touches only its own
parameter set.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from allweather.discriminator import WeatherDiscriminator, detection_probs
from allweather.errors import ConfigError, DivergenceError
from allweather.losses import (
    LossReport,
    PerceptualExtractor,
    loss_discriminator,
    restoration_loss_terms,
)
from allweather.network import RestorationNetwork, mapping_loss

MODES = ("output-space", "feature-level")


@dataclass
class TrainingBundle:
    """Everything adversarial_step needs besides the batch itself."""

    restorer: RestorationNetwork
    discriminator: WeatherDiscriminator
    book: torch.Tensor
    extractor: PerceptualExtractor | None = None
    lambda_dis: float = 0.1
    mode: str = "output-space"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "feature-level":
            want = self.restorer.config.bottleneck_channels
            if self.discriminator.in_channels != want:
                raise ConfigError(
                    f"feature-level discriminator needs {want} input channels, "
                    f"got {self.discriminator.in_channels}"
                )


@dataclass
class Optimizers:
    restorer: torch.optim.Optimizer   # encoder/decoder/fusion parameters
    mapping: torch.optim.Optimizer    # mapping-network parameters
    discriminator: torch.optim.Optimizer


def split_restorer_params(net: RestorationNetwork):
    """(non-mapping, mapping) parameter lists for the two optimizers."""
    mapping_ids = {id(p) for p in net.mapping.parameters()}
    main = [p for p in net.parameters() if id(p) not in mapping_ids]
    return main, list(net.mapping.parameters())


def warmup_step(batch, bundle: TrainingBundle, opts: Optimizers, step: int) -> float:
    """Mapping-network-only update; all other parameters stay untouched."""
    d, _, _, rv_target = batch
    f_mi, _ = bundle.restorer.encode(d)
    pred = bundle.restorer.mapping(f_mi.detach())
    loss = mapping_loss(pred, rv_target)
    if not torch.isfinite(loss):
        raise DivergenceError(step, f"mapping warmup diverged at step {step}")
    opts.mapping.zero_grad()
    loss.backward()
    opts.mapping.step()
    return float(loss)


def adversarial_step(batch, bundle: TrainingBundle, opts: Optimizers, step: int = 0):
    """One discriminator update then one restorer update on a batch.

    batch = (degraded, clean, labels, rv_target) with images as [B, 3, H, W]
    tensors, labels as [B, 5] floats and rv_target the codebook encoding of
    the clean images. Returns (LossReport, discriminator loss).
    """
    d, c, labels, rv_target = batch
    restorer, disc = bundle.restorer, bundle.discriminator

    out_raw, mapping, f_mi = restorer(d, bundle.book)
    r_img = out_raw.clamp(0.0, 1.0)
    disc_input = f_mi if bundle.mode == "feature-level" else r_img

    # --- discriminator update (Eq-style multilabel CE on detached outputs) ---
    p_detached = detection_probs(disc, disc_input.detach())
    d_loss = loss_discriminator(p_detached, labels)
    if not torch.isfinite(d_loss):
        raise DivergenceError(step, f"discriminator loss non-finite at step {step}")
    opts.discriminator.zero_grad()
    d_loss.backward()
    opts.discriminator.step()

    # --- restorer update: pixel + confusion + perceptual, plus mapping loss ---
    p_live = detection_probs(disc, disc_input)
    total, l1, dis, per = restoration_loss_terms(
        out_raw, c, p_live, lambda_dis=bundle.lambda_dis, extractor=bundle.extractor
    )
    m_loss = mapping_loss(mapping.predicted, rv_target)
    combined = total + m_loss
    if not torch.isfinite(combined):
        raise DivergenceError(step, f"restorer loss non-finite at step {step}")

    opts.restorer.zero_grad()
    opts.mapping.zero_grad()
    combined.backward()
    opts.restorer.step()
    opts.mapping.step()

    report = LossReport(
        l1=float(l1),
        dis=float(dis),
        per=float(per),
        map=float(m_loss),
        total=float(total),
        lambda_dis=bundle.lambda_dis,
    )
    return report, float(d_loss)
