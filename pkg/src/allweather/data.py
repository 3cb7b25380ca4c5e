"""Dataset fabrication: clean-scene synthesis, manifests, paired rendering.

A manifest is a JSON-lines file, one record per line with keys `clean`,
`degraded`, `code` (5-char bitstring) and `seed` (decimal string). Paths are
stored relative to the manifest's directory so dataset folders stay portable.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from allweather.codes import WeatherCode
from allweather.degrade import compose_condition
from allweather.errors import ParameterError
from allweather.images import clamp01, load_png, save_png, validate_image


def generate_clean_image(size: int, rng: np.random.Generator) -> np.ndarray:
    """Procedural outdoor-ish scene: sky gradient, blocks, soft texture."""
    if size % 8:
        raise ParameterError(f"clean image size {size} must be a multiple of 8")
    h = w = size
    top = rng.uniform(0.45, 0.85, size=3)
    bottom = rng.uniform(0.15, 0.55, size=3)
    ramp = np.linspace(0.0, 1.0, h)[:, None, None]
    img = top * (1 - ramp) + bottom * ramp
    img = np.broadcast_to(img, (h, w, 3)).copy()

    for _ in range(rng.integers(3, 7)):
        bw = int(rng.uniform(0.1, 0.35) * w)
        bh = int(rng.uniform(0.2, 0.6) * h)
        x0 = int(rng.uniform(0, w - bw))
        y0 = h - bh
        color = rng.uniform(0.1, 0.9, size=3)
        img[y0:h, x0:x0 + bw] = color

    for _ in range(rng.integers(1, 4)):
        r = rng.uniform(0.04, 0.12) * w
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        yy, xx = np.mgrid[0:h, 0:w]
        disk = ((yy - cy) ** 2 + (xx - cx) ** 2) < r * r
        img[disk] = rng.uniform(0.2, 0.95, size=3)

    noise = rng.normal(0.0, 1.0, size=(h, w, 1))
    noise = ndimage.gaussian_filter(noise, sigma=(2.0, 2.0, 0))
    img = img + 0.04 * noise
    return clamp01(img).astype(np.float32)


def generate_clean_set(count: int, size: int, seed: int) -> list[np.ndarray]:
    """Seeded batch of procedural clean scenes."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    return [generate_clean_image(size, rng) for _ in range(count)]


@dataclass(frozen=True)
class DatasetRecord:
    clean: str       # path relative to the manifest directory
    degraded: str
    code: WeatherCode
    seed: int
    stage_seeds: tuple[int, ...] | None = None  # generator-backed records only

    def to_json(self) -> str:
        d = {
            "clean": self.clean,
            "degraded": self.degraded,
            "code": self.code.to_string(),
            "seed": str(self.seed),
        }
        if self.stage_seeds is not None:
            d["stage_seeds"] = [str(s) for s in self.stage_seeds]
        return json.dumps(d)

    @classmethod
    def from_json(cls, line: str) -> "DatasetRecord":
        d = json.loads(line)
        stage_seeds = d.get("stage_seeds")
        return cls(
            clean=d["clean"],
            degraded=d["degraded"],
            code=WeatherCode.from_string(d["code"]),
            seed=int(d["seed"]),
            stage_seeds=tuple(int(s) for s in stage_seeds) if stage_seeds is not None else None,
        )


class DatasetManifest:
    """Ordered record list plus the directory paths resolve against."""

    def __init__(self, records: list[DatasetRecord], root: Path | str = "."):
        self.records = list(records)
        self.root = Path(root)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def clean_path(self, rec: DatasetRecord) -> Path:
        return self.root / rec.clean

    def degraded_path(self, rec: DatasetRecord) -> Path:
        return self.root / rec.degraded

    def load_pair(self, rec: DatasetRecord) -> tuple[np.ndarray, np.ndarray]:
        """(clean, degraded) float images for one record."""
        for path in (self.clean_path(rec), self.degraded_path(rec)):
            if not path.exists():
                raise FileNotFoundError(f"manifest refers to missing file {path}")
        return load_png(self.clean_path(rec)), load_png(self.degraded_path(rec))

    def codes_present(self) -> list[WeatherCode]:
        return sorted({rec.code for rec in self.records})

    def save(self, path: Path | str) -> None:
        path = Path(path)
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(rec.to_json() + "\n")

    @classmethod
    def load(cls, path: Path | str) -> "DatasetManifest":
        path = Path(path)
        with open(path) as fh:
            records = [DatasetRecord.from_json(line) for line in fh if line.strip()]
        return cls(records, root=path.parent)


def record_seed(master_seed: int, record_index: int) -> int:
    """Per-record render seed derived from the dataset master seed."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(record_index,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def build_dataset(
    cleans: list[np.ndarray],
    codes: list[WeatherCode],
    samples_per_code: int,
    master_seed: int,
    out_dir: Path | str,
    *,
    regime: str = "paired",
) -> DatasetManifest:
    """Render |cleans| x |codes| x samples_per_code degraded pairs to disk.

    Record order is fixed by the nested input order (clean, code, sample),
    never by completion order. The same master seed reproduces the dataset
    byte for byte.
    """
    if samples_per_code < 1:
        raise ParameterError("samples_per_code must be >= 1")
    out_dir = Path(out_dir)
    clean_dir = out_dir / "clean"
    degraded_dir = out_dir / "degraded"
    os.makedirs(clean_dir, exist_ok=True)
    os.makedirs(degraded_dir, exist_ok=True)

    # degrade the 8-bit-quantized cleans so records regenerate exactly from disk
    clean_rel = []
    stored = []
    for ci, img in enumerate(cleans):
        validate_image(img)
        rel = f"clean/clean_{ci:04d}.png"
        _write_checked(img, out_dir / rel)
        clean_rel.append(rel)
        stored.append(from_uint8(to_uint8(img)))

    records = []
    idx = 0
    for ci, img in enumerate(stored):
        for code in codes:
            for si in range(samples_per_code):
                seed = record_seed(master_seed, idx)
                degraded = compose_condition(img, code, seed, regime=regime)
                rel = f"degraded/c{ci:04d}_{code.to_string()}_s{si}.png"
                _write_checked(degraded, out_dir / rel)
                records.append(DatasetRecord(clean_rel[ci], rel, code, seed))
                idx += 1

    manifest = DatasetManifest(records, root=out_dir)
    manifest.save(out_dir / "manifest.jsonl")
    return manifest


def _write_checked(img: np.ndarray, path: Path) -> None:
    try:
        save_png(img, path)
    except OSError as exc:
        raise OSError(f"failed writing {path}: {exc}") from exc
