"""Generator and critics for conditional weather synthesis.

The generator encodes a clean image, concatenates a content code and a type
embedding onto the bottleneck feature map, and decodes with per-block
multiplicative style modulation; its output is a residual on the input so the
background survives by construction. Two critics watch it: the realism critic
consumes single images and judges real-versus-generated weather, the pairing
critic consumes channel-concatenated (clean, degraded) pairs and judges
whether the pair is a genuine correspondence. Both expose a source head and a
5-way condition-type head from a shared trunk.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn

from allweather.codes import NUM_WEATHER_TYPES
from allweather.errors import ParameterError, ShapeError
from allweather.images import validate_image

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class GeneratorConfig:
    content_dim: int = 64
    style_dim: int = 64
    type_dim: int = 16
    channels: int = 32


class StyleModulation(nn.Module):
    """Multiplicative per-channel gain derived from the style code."""

    def __init__(self, style_dim: int, channels: int):
        super().__init__()
        self.affine = nn.Linear(style_dim, channels)
        nn.init.zeros_(self.affine.bias)

    def forward(self, x, z_s):
        gain = 1.0 + self.affine(z_s)
        return x * gain[:, :, None, None]


class ConditionGenerator(nn.Module):
    def __init__(self, config: GeneratorConfig | None = None):
        super().__init__()
        self.config = config or GeneratorConfig()
        g = self.config.channels
        act = nn.LeakyReLU(0.2)
        self.encoder = nn.Sequential(
            nn.Conv2d(3, g, 3, padding=1), act,
            nn.Conv2d(g, g * 2, 3, stride=2, padding=1), act,
            nn.Conv2d(g * 2, g * 4, 3, stride=2, padding=1), act,
        )
        self.type_embedding = nn.Embedding(NUM_WEATHER_TYPES, self.config.type_dim)
        self.content_proj = nn.Linear(self.config.content_dim, self.config.content_dim)
        fused = g * 4 + self.config.content_dim + self.config.type_dim
        self.bottleneck = nn.Sequential(nn.Conv2d(fused, g * 4, 3, padding=1), act)

        self.up1 = nn.Sequential(nn.Upsample(scale_factor=2, mode="nearest"),
                                 nn.Conv2d(g * 4, g * 2, 3, padding=1))
        self.style1 = StyleModulation(self.config.style_dim, g * 2)
        self.up2 = nn.Sequential(nn.Upsample(scale_factor=2, mode="nearest"),
                                 nn.Conv2d(g * 2, g, 3, padding=1))
        self.style2 = StyleModulation(self.config.style_dim, g)
        self.act = act
        self.head = nn.Conv2d(g, 3, 3, padding=1)
        self.trained = False

    def forward(self, c: torch.Tensor, t: torch.Tensor, z_c: torch.Tensor,
                z_s: torch.Tensor) -> torch.Tensor:
        """Clean batch + type indices + latent codes -> degraded batch in [0,1]."""
        if c.shape[-1] % 4 or c.shape[-2] % 4:
            raise ShapeError(f"generator needs dims divisible by 4, got {tuple(c.shape[-2:])}")
        feat = self.encoder(c)
        b, _, h, w = feat.shape
        content = self.content_proj(z_c)[:, :, None, None].expand(-1, -1, h, w)
        typemap = self.type_embedding(t)[:, :, None, None].expand(-1, -1, h, w)
        x = self.bottleneck(torch.cat([feat, content, typemap], dim=1))
        x = self.act(self.style1(self.up1(x), z_s))
        x = self.act(self.style2(self.up2(x), z_s))
        delta = self.head(x)
        return (c + delta).clamp(0.0, 1.0)


class _DualHeadCritic(nn.Module):
    """Shared conv trunk with a source head and a condition-type head."""

    def __init__(self, in_channels: int, base_width: int = 32):
        super().__init__()
        w = base_width
        act = nn.LeakyReLU(0.2)
        self.trunk = nn.Sequential(
            nn.Conv2d(in_channels, w, 3, stride=2, padding=1), act,
            nn.Conv2d(w, w * 2, 3, stride=2, padding=1), act,
            nn.Conv2d(w * 2, w * 4, 3, stride=2, padding=1), act,
            nn.Conv2d(w * 4, w * 4, 3, stride=2, padding=1), act,
        )
        self.src_head = nn.Conv2d(w * 4, 1, 1)
        self.cls_head = nn.Conv2d(w * 4, NUM_WEATHER_TYPES, 1)


class RealismDiscriminator(_DualHeadCritic):
    """Real-world weather versus generated weather, on single images."""

    def __init__(self, base_width: int = 32):
        super().__init__(in_channels=3, base_width=base_width)

    def forward(self, x: torch.Tensor):
        if x.shape[1] != 3:
            raise ShapeError(f"realism critic takes single images, got {x.shape[1]} channels")
        f = self.trunk(x)
        return self.src_head(f).mean(dim=(1, 2, 3)), self.cls_head(f).mean(dim=(2, 3))


class PairingDiscriminator(_DualHeadCritic):
    """Genuine (clean, degraded) pairs versus generated pairs."""

    def __init__(self, base_width: int = 32):
        super().__init__(in_channels=6, base_width=base_width)

    def forward(self, clean: torch.Tensor, degraded: torch.Tensor):
        if clean.shape != degraded.shape:
            raise ShapeError(f"pair shapes differ: {clean.shape} vs {degraded.shape}")
        f = self.trunk(torch.cat([clean, degraded], dim=1))
        return self.src_head(f).mean(dim=(1, 2, 3)), self.cls_head(f).mean(dim=(2, 3))


# ------------------------------ functional ----------------------------------

def generate(
    c_img: np.ndarray,
    type_index: int,
    z_c: np.ndarray,
    z_s: np.ndarray,
    model: ConditionGenerator,
) -> np.ndarray:
    """Single-image surface over the generator."""
    validate_image(c_img, multiple_of=4)
    if not 0 <= type_index < NUM_WEATHER_TYPES:
        raise ParameterError(f"type index {type_index} outside [0, 5)")
    model.eval()
    with torch.no_grad():
        c = torch.from_numpy(np.ascontiguousarray(c_img, dtype=np.float32)).permute(2, 0, 1)[None]
        t = torch.tensor([type_index])
        out = model(
            c,
            t,
            torch.from_numpy(np.ascontiguousarray(z_c, dtype=np.float32))[None],
            torch.from_numpy(np.ascontiguousarray(z_s, dtype=np.float32))[None],
        )
    return out[0].permute(1, 2, 0).numpy()


def save_generator_checkpoint(path, model: ConditionGenerator) -> None:
    torch.save(
        {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "kind": "generator",
            "config": asdict(model.config),
            "trained": model.trained,
            "state": model.state_dict(),
        },
        path,
    )


def load_generator_checkpoint(path) -> ConditionGenerator:
    blob = torch.load(path, map_location="cpu", weights_only=False)
    if blob.get("kind") != "generator":
        raise ParameterError(f"{path} is not a generator checkpoint")
    if blob.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ParameterError(f"unsupported generator checkpoint version")
    model = ConditionGenerator(GeneratorConfig(**blob["config"]))
    model.load_state_dict(blob["state"])
    model.trained = bool(blob.get("trained", False))
    model.eval()
    return model
