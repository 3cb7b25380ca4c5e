"""Vector-quantized autoencoder providing the reconstruction-vector codebook.

The encoder compresses an image by a factor of 8 per side into N_z-dim latent
vectors; each vector is replaced by its Euclidean nearest codebook entry (ties
broken toward the lowest index); the decoder reconstructs the image from the
quantized grid. Training uses the straight-through estimator with
reconstruction, codebook and commitment terms. The trained codebook is frozen
and consumed by the restoration network as a repository of clean visual atoms.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from allweather.errors import DivergenceError, ParameterError, ShapeError
from allweather.images import validate_image

logger = logging.getLogger(__name__)

DOWNSAMPLE_FACTOR = 8
CHECKPOINT_FORMAT_VERSION = 1


def nearest_code_indices(z: torch.Tensor, codebook: torch.Tensor, chunk: int = 4096) -> torch.Tensor:
    """Index of the nearest codebook row for each vector in z [N, D].

    Distances are computed by explicit differencing (no matmul expansion) so
    exactly symmetric ties stay exact; among tied entries the lowest index
    wins regardless of backend argmin behavior.
    """
    if z.shape[-1] != codebook.shape[-1]:
        raise ShapeError(
            f"vector dim {z.shape[-1]} != codebook dim {codebook.shape[-1]}"
        )
    k = codebook.shape[0]
    arange = torch.arange(k, device=z.device)
    out = torch.empty(z.shape[0], dtype=torch.long, device=z.device)
    for start in range(0, z.shape[0], chunk):
        zs = z[start : start + chunk]
        d = (zs.unsqueeze(1) - codebook.unsqueeze(0)).pow(2).sum(-1)  # [n, K]
        dmin = d.min(dim=1, keepdim=True).values
        candidates = torch.where(d == dmin, arange, k)
        out[start : start + chunk] = candidates.min(dim=1).values
    return out


@dataclass(frozen=True)
class Codebook:
    """K learned vectors of dimension N_z."""

    vectors: np.ndarray  # [K, N_z] float32

    def __post_init__(self):
        v = self.vectors
        if v.ndim != 2 or v.shape[0] < 2:
            raise ParameterError(f"codebook needs [K>=2, N_z] vectors, got {v.shape}")
        if not np.isfinite(v).all():
            raise ParameterError("codebook contains non-finite vectors")

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def torch_vectors(self, dtype=torch.float32) -> torch.Tensor:
        return torch.from_numpy(self.vectors).to(dtype)

    def to_binary(self) -> bytes:
        """Flat little-endian float32 dump, row major."""
        return np.ascontiguousarray(self.vectors, dtype="<f4").tobytes()

    @classmethod
    def from_binary(cls, blob: bytes, dim: int) -> "Codebook":
        flat = np.frombuffer(blob, dtype="<f4")
        if flat.size % dim:
            raise ParameterError(f"binary size {flat.size} not divisible by dim {dim}")
        return cls(flat.reshape(-1, dim).astype(np.float32))

    def warn_if_duplicates(self) -> int:
        uniq = np.unique(self.vectors, axis=0).shape[0]
        dupes = self.size - uniq
        if dupes:
            warnings.warn(f"codebook has {dupes} bit-identical vector pairs")
        return dupes


@dataclass(frozen=True)
class QuantizedGrid:
    indices: np.ndarray    # [h, w] int64 in [0, K)
    quantized: np.ndarray  # [h, w, N_z] float32, rows copied from the codebook


@dataclass
class VQConfig:
    codebook_size: int = 512
    code_dim: int = 256
    channels: int = 32
    # training
    steps: int = 2000
    batch_size: int = 8
    lr: float = 1e-3
    commitment_weight: float = 0.25
    dead_code_interval: int = 100
    seed: int = 0
    log_every: int = 50


class VQAutoencoder(nn.Module):
    """Encoder/codebook/decoder triple with straight-through quantization."""

    def __init__(self, config: VQConfig):
        super().__init__()
        self.config = config
        ch, nz = config.channels, config.code_dim
        self.encoder = nn.Sequential(
            nn.Conv2d(3, ch, 3, padding=1), nn.GELU(),
            nn.Conv2d(ch, ch * 2, 3, stride=2, padding=1), nn.GELU(),
            nn.Conv2d(ch * 2, ch * 4, 3, stride=2, padding=1), nn.GELU(),
            nn.Conv2d(ch * 4, ch * 4, 3, stride=2, padding=1), nn.GELU(),
            nn.Conv2d(ch * 4, nz, 3, padding=1),
        )
        self.embedding = nn.Embedding(config.codebook_size, nz)
        nn.init.uniform_(self.embedding.weight, -1.0, 1.0)
        up = lambda cin, cout: nn.Sequential(
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(cin, cout, 3, padding=1),
        )
        self.decoder = nn.Sequential(
            nn.Conv2d(nz, ch * 4, 3, padding=1), nn.GELU(),
            up(ch * 4, ch * 4), nn.GELU(),
            up(ch * 4, ch * 2), nn.GELU(),
            up(ch * 2, ch), nn.GELU(),
            nn.Conv2d(ch, 3, 3, padding=1),
        )

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        """[B, 3, H, W] -> [B, N_z, H/8, W/8]."""
        if x.shape[-1] % DOWNSAMPLE_FACTOR or x.shape[-2] % DOWNSAMPLE_FACTOR:
            raise ShapeError(f"spatial dims {x.shape[-2:]} not divisible by 8")
        return self.encoder(x)

    def quantize_latent(self, z: torch.Tensor):
        """Nearest-neighbor match each latent cell onto the codebook.

        Returns (straight-through z_q, hard z_q, indices); the straight-through
        tensor forwards quantized values but routes gradients to the encoder
        as if quantization were the identity.
        """
        b, nz, h, w = z.shape
        flat = z.permute(0, 2, 3, 1).reshape(-1, nz)
        idx = nearest_code_indices(flat, self.embedding.weight.detach())
        zq = self.embedding(idx).reshape(b, h, w, nz).permute(0, 3, 1, 2)
        ste = z + (zq - z).detach()
        return ste, zq, idx.reshape(b, h, w)

    def decode(self, zq: torch.Tensor) -> torch.Tensor:
        """[B, N_z, h, w] -> [B, 3, 8h, 8w] (unclamped)."""
        return self.decoder(zq)

    def codebook(self) -> Codebook:
        return Codebook(self.embedding.weight.detach().cpu().numpy().astype(np.float32).copy())


# ------------------------- functional surface -------------------------------

def _img_to_tensor(img: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(img, dtype=np.float32)).permute(2, 0, 1)[None]


def vq_encode(img: np.ndarray, model: VQAutoencoder) -> np.ndarray:
    """Clean image -> latent grid [H/8, W/8, N_z]."""
    validate_image(img)
    model.eval()
    with torch.no_grad():
        z = model.encode(_img_to_tensor(img))
    return z[0].permute(1, 2, 0).numpy()


def quantize(grid: np.ndarray, book: Codebook) -> QuantizedGrid:
    """Replace each latent vector by its nearest codebook entry."""
    grid = np.asarray(grid, dtype=np.float32)
    if grid.ndim != 3:
        raise ShapeError(f"expected [h, w, N_z] grid, got {grid.shape}")
    if grid.shape[2] != book.dim:
        raise ShapeError(f"grid dim {grid.shape[2]} != codebook dim {book.dim}")
    h, w, nz = grid.shape
    flat = torch.from_numpy(grid.reshape(-1, nz))
    idx = nearest_code_indices(flat, book.torch_vectors()).numpy().reshape(h, w)
    return QuantizedGrid(indices=idx, quantized=book.vectors[idx])


def vq_decode(quantized: np.ndarray | QuantizedGrid, model: VQAutoencoder) -> np.ndarray:
    """Quantized grid -> reconstructed image, clamped to [0, 1]."""
    if isinstance(quantized, QuantizedGrid):
        quantized = quantized.quantized
    quantized = np.asarray(quantized, dtype=np.float32)
    if quantized.ndim != 3:
        raise ShapeError(f"expected [h, w, N_z] grid, got {quantized.shape}")
    model.eval()
    with torch.no_grad():
        zq = torch.from_numpy(quantized).permute(2, 0, 1)[None]
        x = model.decode(zq)
    return x[0].permute(1, 2, 0).clamp(0, 1).numpy()


# ------------------------------- training -----------------------------------

def perplexity(indices: torch.Tensor, codebook_size: int) -> float:
    """exp(entropy) of code usage; at most the codebook size."""
    counts = torch.bincount(indices.reshape(-1), minlength=codebook_size).double()
    probs = counts / counts.sum()
    nz = probs[probs > 0]
    return float(torch.exp(-(nz * nz.log()).sum()))


def train_vq(cleans, config: VQConfig):
    """Fit the autoencoder and codebook on clean images.

    `cleans` is a list of [H, W, 3] float images or a manifest exposing
    `load_pair`/`clean_path`. Returns (model, codebook, log) where log holds
    one row per logged step with reconstruction loss and codebook perplexity.
    """
    images = _collect_cleans(cleans)
    if len(images) < 16:
        raise ParameterError(f"VQ training needs >= 16 clean images, got {len(images)}")

    torch.manual_seed(config.seed)
    model = VQAutoencoder(config)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(1,)))

    data = torch.stack([_img_to_tensor(im)[0] for im in images])
    usage = torch.zeros(config.codebook_size, dtype=torch.long)
    log = []

    model.train()
    for step in range(config.steps):
        sel = rng.integers(0, len(images), size=config.batch_size)
        batch = data[torch.from_numpy(sel)]

        z = model.encode(batch)
        ste, zq, idx = model.quantize_latent(z)
        recon = model.decode(ste)

        recon_loss = F.mse_loss(recon, batch)
        codebook_loss = F.mse_loss(zq, z.detach())
        commit_loss = F.mse_loss(z, zq.detach())
        loss = recon_loss + codebook_loss + config.commitment_weight * commit_loss

        if not torch.isfinite(loss):
            raise DivergenceError(step, f"VQ training diverged at step {step}")

        opt.zero_grad()
        loss.backward()
        opt.step()

        usage += torch.bincount(idx.reshape(-1), minlength=config.codebook_size)
        if (step + 1) % config.dead_code_interval == 0:
            _reseed_dead_codes(model, z, usage, rng)
            usage.zero_()

        if step % config.log_every == 0 or step == config.steps - 1:
            log.append(
                {
                    "step": step,
                    "loss": float(loss.detach()),
                    "recon": float(recon_loss.detach()),
                    "perplexity": perplexity(idx, config.codebook_size),
                }
            )

    model.eval()
    book = model.codebook()
    book.warn_if_duplicates()
    return model, book, log


def _collect_cleans(cleans) -> list[np.ndarray]:
    if hasattr(cleans, "records"):
        paths = []
        for rec in cleans.records:
            p = cleans.clean_path(rec)
            if p not in paths:
                paths.append(p)
        from allweather.images import load_png

        return [load_png(p) for p in paths]
    return [validate_image(im) for im in cleans]


def _reseed_dead_codes(model: VQAutoencoder, z: torch.Tensor, usage: torch.Tensor,
                       rng: np.random.Generator) -> int:
    """Re-seed entries unused over the last interval from encoder outputs."""
    dead = torch.nonzero(usage == 0).flatten()
    if dead.numel() == 0:
        return 0
    flat = z.detach().permute(0, 2, 3, 1).reshape(-1, z.shape[1])
    pick = rng.integers(0, flat.shape[0], size=dead.numel())
    with torch.no_grad():
        model.embedding.weight[dead] = flat[torch.from_numpy(pick)]
    logger.debug("reseeded %d dead codebook entries", dead.numel())
    return int(dead.numel())


# ------------------------------ persistence ---------------------------------

def save_vq_checkpoint(path, model: VQAutoencoder) -> None:
    torch.save(
        {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "kind": "vq",
            "config": asdict(model.config),
            "state": model.state_dict(),
        },
        path,
    )


def load_vq_checkpoint(path) -> VQAutoencoder:
    blob = torch.load(path, map_location="cpu", weights_only=False)
    if blob.get("kind") != "vq":
        raise ParameterError(f"{path} is not a VQ checkpoint")
    if blob.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ParameterError(f"unsupported VQ checkpoint version {blob.get('format_version')}")
    model = VQAutoencoder(VQConfig(**blob["config"]))
    model.load_state_dict(blob["state"])
    model.eval()
    return model
