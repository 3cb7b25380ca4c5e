"""U-shaped restoration network with codebook-aided bottleneck features.

A degraded image passes a 3x3 stem, four blend-block encoder levels (spatial
halved and channels doubled at each boundary), then a mapping head predicts
per-cell vectors that are nearest-neighbor matched onto the frozen codebook.
The matched vectors are concatenated with the bottleneck features and decoded
by the symmetric blend-block decoder with skip connections back to a restored
image.

The mapping head is supervised toward the codebook encoding of the clean
image with a cosine objective; the matched vectors are detached before the
decoder so the restoration losses never backpropagate through the
non-differentiable matching step.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn as nn

from allweather.blocks import BlendBlock, Downsample, Upsample
from allweather.errors import ConfigError, ParameterError, ShapeError
from allweather.images import validate_image
from allweather.vq import Codebook, nearest_code_indices

logger = logging.getLogger(__name__)

NUM_LEVELS = 4
CHECKPOINT_FORMAT_VERSION = 1

# counts zero-norm cells ever seen by mapping_loss (diagnostic only)
ZERO_NORM_EVENTS = {"count": 0}


@dataclass
class NetworkConfig:
    base_channels: int = 32
    block_counts: tuple = (2, 4, 6, 4, 4, 2, 2, 2)   # enc 1-4 then dec 4-1
    heads_per_level: tuple = (1, 2, 4, 8)
    attention_reduction: int = 2
    code_dim: int = 256
    mapping_blocks: int = 2
    rv_mode: str = "quantized"  # bottleneck vectors: "quantized" or "raw"

    def __post_init__(self):
        if len(self.block_counts) != 2 * NUM_LEVELS:
            raise ConfigError(f"need {2 * NUM_LEVELS} block counts, got {self.block_counts}")
        if len(self.heads_per_level) != NUM_LEVELS:
            raise ConfigError(f"need {NUM_LEVELS} head counts, got {self.heads_per_level}")
        if self.rv_mode not in ("quantized", "raw"):
            raise ConfigError(f"rv_mode must be 'quantized' or 'raw', got {self.rv_mode!r}")
        for lvl in range(NUM_LEVELS):
            ch = self.level_channels(lvl)
            heads = self.heads_per_level[lvl]
            if ch % heads:
                raise ConfigError(f"level {lvl}: {ch} channels not divisible by {heads} heads")
            if (ch // heads) % 2:
                raise ConfigError(f"level {lvl}: per-head channels {ch // heads} must be even")

    def level_channels(self, level: int) -> int:
        return self.base_channels * (2**level)

    @property
    def bottleneck_channels(self) -> int:
        return self.level_channels(NUM_LEVELS - 1)


def tiny_test_config(code_dim: int = 16) -> NetworkConfig:
    """Smallest useful instantiation for tests and smoke runs."""
    return NetworkConfig(
        base_channels=8,
        block_counts=(1, 1, 2, 1, 1, 1, 1, 1),
        heads_per_level=(1, 2, 4, 8),
        code_dim=code_dim,
    )


@dataclass(frozen=True)
class MappingOutput:
    predicted: torch.Tensor   # [B, N_z, h, w] raw mapping-head output
    matched: torch.Tensor     # [B, N_z, h, w] nearest codebook vectors
    indices: torch.Tensor     # [B, h, w] codebook rows


class MappingNetwork(nn.Module):
    """Bottleneck feature -> codebook-space vector field."""

    def __init__(self, config: NetworkConfig):
        super().__init__()
        ch = config.bottleneck_channels
        heads = config.heads_per_level[-1]
        self.blocks = nn.Sequential(
            *[BlendBlock(ch, heads, config.attention_reduction) for _ in range(config.mapping_blocks)]
        )
        self.proj = nn.Conv2d(ch, config.code_dim, 1)

    def forward(self, f_mi):
        return self.proj(self.blocks(f_mi))


class RestorationNetwork(nn.Module):
    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        c = config.base_channels
        heads = config.heads_per_level
        r = config.attention_reduction
        n = config.block_counts

        def stage(level, count):
            ch = config.level_channels(level)
            return nn.Sequential(*[BlendBlock(ch, heads[level], r) for _ in range(count)])

        self.stem = nn.Conv2d(3, c, 3, padding=1)
        self.enc = nn.ModuleList([stage(lvl, n[lvl]) for lvl in range(NUM_LEVELS)])
        self.down = nn.ModuleList([Downsample(config.level_channels(lvl)) for lvl in range(NUM_LEVELS - 1)])

        self.mapping = MappingNetwork(config)
        bott = config.bottleneck_channels
        self.rv_fuse = nn.Conv2d(bott + config.code_dim, bott, 1)

        self.dec = nn.ModuleList(
            [stage(NUM_LEVELS - 1 - i, n[NUM_LEVELS + i]) for i in range(NUM_LEVELS)]
        )
        self.up = nn.ModuleList(
            [Upsample(config.level_channels(lvl)) for lvl in range(NUM_LEVELS - 1, 0, -1)]
        )
        self.skip_fuse = nn.ModuleList(
            [
                nn.Conv2d(2 * config.level_channels(lvl), config.level_channels(lvl), 1)
                for lvl in range(NUM_LEVELS - 2, -1, -1)
            ]
        )
        self.head = nn.Conv2d(c, 3, 3, padding=1)

    def encode(self, d: torch.Tensor):
        """[B, 3, H, W] -> bottleneck features [B, 8C, H/8, W/8] and 3 skips."""
        if d.shape[-1] % 8 or d.shape[-2] % 8:
            raise ShapeError(f"spatial dims {tuple(d.shape[-2:])} not divisible by 8")
        x = self.stem(d)
        skips = []
        for lvl in range(NUM_LEVELS - 1):
            x = self.enc[lvl](x)
            skips.append(x)
            x = self.down[lvl](x)
        f_mi = self.enc[-1](x)
        return f_mi, skips

    def map_features(self, f_mi: torch.Tensor, book: torch.Tensor) -> MappingOutput:
        """Predict codebook-space vectors and match them onto the codebook."""
        if book.shape[1] != self.config.code_dim:
            raise ShapeError(f"codebook dim {book.shape[1]} != configured {self.config.code_dim}")
        pred = self.mapping(f_mi)
        b, nz, h, w = pred.shape
        flat = pred.detach().permute(0, 2, 3, 1).reshape(-1, nz)
        idx = nearest_code_indices(flat, book)
        matched = book[idx].reshape(b, h, w, nz).permute(0, 3, 1, 2)
        return MappingOutput(predicted=pred, matched=matched, indices=idx.reshape(b, h, w))

    def decode(self, fused: torch.Tensor, skips) -> torch.Tensor:
        x = self.dec[0](fused)
        for i, (up, fuse, skip) in enumerate(zip(self.up, self.skip_fuse, reversed(skips))):
            x = up(x)
            x = fuse(torch.cat([x, skip], dim=1))
            x = self.dec[i + 1](x)
        return self.head(x)

    def forward(self, d: torch.Tensor, book: torch.Tensor, rv_mode: str | None = None):
        """Full restoration pass; returns unclamped output plus internals."""
        rv_mode = rv_mode or self.config.rv_mode
        f_mi, skips = self.encode(d)
        mapping = self.map_features(f_mi, book)
        f_rv = mapping.predicted if rv_mode == "raw" else mapping.matched
        fused = self.rv_fuse(torch.cat([f_mi, f_rv], dim=1))
        out = self.decode(fused, skips)
        return out, mapping, f_mi


def mapping_loss(predicted: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean over cells of (1 - cosine similarity); zero-norm cells count as cos 0."""
    if predicted.shape != target.shape:
        raise ShapeError(f"shape mismatch {tuple(predicted.shape)} vs {tuple(target.shape)}")
    dot = (predicted * target).sum(dim=1)
    norm_p = predicted.pow(2).sum(dim=1).sqrt()
    norm_t = target.pow(2).sum(dim=1).sqrt()
    zero = (norm_p == 0) | (norm_t == 0)
    if bool(zero.any()):
        n = int(zero.sum())
        ZERO_NORM_EVENTS["count"] += n
        logger.warning("mapping loss met %d zero-norm cells (cosine treated as 0)", n)
    denom = (norm_p * norm_t).clamp_min(torch.finfo(predicted.dtype).tiny)
    cos = torch.where(zero, torch.zeros_like(dot), dot / denom)
    return (1.0 - cos).mean()


# ----------------------------- image-level API ------------------------------

def restore(img: np.ndarray, model: RestorationNetwork, book: Codebook) -> np.ndarray:
    """Degraded image -> restored image, clamped to [0, 1]."""
    validate_image(img)
    model.eval()
    with torch.no_grad():
        d = torch.from_numpy(np.ascontiguousarray(img, dtype=np.float32)).permute(2, 0, 1)[None]
        out, _, _ = model(d, book.torch_vectors())
    return out[0].permute(1, 2, 0).clamp(0, 1).numpy()


def make_restore_fn(model: RestorationNetwork, book: Codebook):
    """Bind model and codebook into an Image -> Image callable."""
    return lambda img: restore(img, model, book)


def save_network_checkpoint(path, model: RestorationNetwork) -> None:
    torch.save(
        {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "kind": "restoration",
            "config": asdict(model.config),
            "state": model.state_dict(),
        },
        path,
    )


def load_network_checkpoint(path) -> RestorationNetwork:
    blob = torch.load(path, map_location="cpu", weights_only=False)
    if blob.get("kind") != "restoration":
        raise ParameterError(f"{path} is not a restoration checkpoint")
    if blob.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ParameterError(f"unsupported checkpoint version {blob.get('format_version')}")
    cfg = blob["config"]
    cfg["block_counts"] = tuple(cfg["block_counts"])
    cfg["heads_per_level"] = tuple(cfg["heads_per_level"])
    model = RestorationNetwork(NetworkConfig(**cfg))
    model.load_state_dict(blob["state"])
    model.eval()
    return model
