"""Recursive hybrid generation: one generator call per set code bit.

Stages run in the fixed digit order; each stage redraws both latent codes
from its own seeded stream and conditions on that stage's single type only,
so a five-bit code means exactly five sequential generator calls, each
consuming the previous stage's output.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from allweather.codes import WeatherCode, require_nonzero
from allweather.data import DatasetManifest, DatasetRecord, record_seed
from allweather.errors import UntrainedModelError
from allweather.gan.networks import ConditionGenerator, generate
from allweather.images import save_png, validate_image


def stage_seed(seed: int, stage: int) -> int:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stage,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def stage_latents(seed: int, stage: int, content_dim: int, style_dim: int):
    """(z_c, z_s) drawn from the stage's own stream, plus its derived seed."""
    sseed = stage_seed(seed, stage)
    rng = np.random.default_rng(np.random.SeedSequence(sseed))
    z_c = rng.standard_normal(content_dim).astype(np.float32)
    z_s = rng.standard_normal(style_dim).astype(np.float32)
    return z_c, z_s, sseed


def gen_hybrid(
    c_img: np.ndarray,
    code: WeatherCode,
    seed: int,
    model: ConditionGenerator,
    *,
    require_trained: bool = True,
):
    """Degrade a clean image with every weather named by the code.

    Returns (degraded image, per-stage seed list). The seed list lines up
    with the set bits in application order and enables exact regeneration.
    """
    validate_image(c_img, multiple_of=4)
    require_nonzero(code)
    if require_trained and not model.trained:
        raise UntrainedModelError("generator has not been trained")

    out = c_img
    seeds = []
    cfg = model.config
    for stage, active in enumerate(code.bits):
        if not active:
            continue
        z_c, z_s, sseed = stage_latents(seed, stage, cfg.content_dim, cfg.style_dim)
        out = generate(out, stage, z_c, z_s, model)
        seeds.append(sseed)
    return out, seeds


def build_gan_dataset(
    cleans: list[np.ndarray],
    codes: list[WeatherCode],
    samples_per_code: int,
    master_seed: int,
    out_dir: Path | str,
    model: ConditionGenerator,
) -> DatasetManifest:
    """Generator-backed twin of the analytic dataset builder.

    Same manifest schema plus per-stage latent seeds on every record.
    """
    out_dir = Path(out_dir)
    os.makedirs(out_dir / "clean", exist_ok=True)
    os.makedirs(out_dir / "degraded", exist_ok=True)

    clean_rel = []
    for ci, img in enumerate(cleans):
        validate_image(img)
        rel = f"clean/clean_{ci:04d}.png"
        save_png(img, out_dir / rel)
        clean_rel.append(rel)

    records = []
    idx = 0
    for ci, img in enumerate(cleans):
        for code in codes:
            for si in range(samples_per_code):
                seed = record_seed(master_seed, idx)
                degraded, seeds = gen_hybrid(img, code, seed, model)
                rel = f"degraded/c{ci:04d}_{code.to_string()}_s{si}.png"
                save_png(degraded, out_dir / rel)
                records.append(
                    DatasetRecord(clean_rel[ci], rel, code, seed, stage_seeds=tuple(seeds))
                )
                idx += 1

    manifest = DatasetManifest(records, root=out_dir)
    manifest.save(out_dir / "manifest.jsonl")
    return manifest
