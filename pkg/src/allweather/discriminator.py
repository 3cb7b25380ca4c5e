"""Multilabel weather discriminator: which degradations does an image show?

A small strided-conv classifier with global average pooling and five sigmoid
outputs, one per weather type. The same architecture serves three roles: the
adversarial output-space discriminator, its feature-level variant (consuming
bottleneck features instead of images), and the independently trained
detectability probe used for evaluation.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

from allweather.codes import NUM_WEATHER_TYPES
from allweather.images import validate_image

PROB_EPS = 1e-7


class WeatherDiscriminator(nn.Module):
    def __init__(self, in_channels: int = 3, base_width: int = 48):
        super().__init__()
        w = base_width
        self.trunk = nn.Sequential(
            nn.Conv2d(in_channels, w, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(w, w * 2, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(w * 2, w * 4, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(w * 4, w * 4, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2),
        )
        self.head = nn.Conv2d(w * 4, NUM_WEATHER_TYPES, 1)
        self.in_channels = in_channels
        self.trained = False

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """[B, C, H, W] -> [B, 5] logits."""
        return self.head(self.trunk(x)).mean(dim=(2, 3))


def clamp_probs(p: torch.Tensor) -> torch.Tensor:
    """Keep probabilities inside (0, 1) before any log."""
    return p.clamp(PROB_EPS, 1.0 - PROB_EPS)


def detection_probs(model: WeatherDiscriminator, x: torch.Tensor) -> torch.Tensor:
    """[B, C, H, W] -> [B, 5] per-weather detection probabilities."""
    return clamp_probs(torch.sigmoid(model(x)))


def discriminator_forward(img: np.ndarray, model: WeatherDiscriminator) -> np.ndarray:
    """Single-image surface: [H, W, 3] -> 5 probabilities in (0, 1)."""
    validate_image(img, multiple_of=1)
    model.eval()
    with torch.no_grad():
        x = torch.from_numpy(np.ascontiguousarray(img, dtype=np.float32)).permute(2, 0, 1)[None]
        p = detection_probs(model, x)
    return p[0].numpy()
