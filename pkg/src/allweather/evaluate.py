"""Manifest-level evaluation: grouped quality reports and the detectability probe.

Reports follow the multiplicity grouping of the 31 codes: per-code PSNR/SSIM
means, Single/Double/Triple/Quadruple/Pentuple group means (arithmetic means
over member codes' means), and the overall average over codes. The probe is a
separately trained weather classifier; comparing its mean detection
probability on restored versus degraded images measures how degradation-
agnostic the restored outputs are (lower on restored is better).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
import torch

from allweather.codes import GROUP_NAMES, WeatherCode
from allweather.data import DatasetManifest
from allweather.discriminator import WeatherDiscriminator, detection_probs
from allweather.errors import UntrainedModelError
from allweather.losses import labels_from_codes
from allweather.metrics import psnr, ssim

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalReport:
    per_code: dict          # code string -> {"psnr":, "ssim":, "count":}
    groups: dict            # group name -> {"psnr":, "ssim":, "codes":} or None
    average: dict           # {"psnr":, "ssim":}
    mode: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "mode": self.mode,
                "per_code": self.per_code,
                "groups": self.groups,
                "average": self.average,
            },
            indent=2,
            sort_keys=True,
        )

    def to_text(self) -> str:
        lines = [f"{'code':<8}{'n':>4}  {'psnr(dB)':>9}  {'ssim':>7}"]
        for code, row in self.per_code.items():
            lines.append(
                f"{code:<8}{row['count']:>4}  {row['psnr']:>9.3f}  {row['ssim']:>7.4f}"
            )
        lines.append("")
        lines.append(f"{'group':<11}{'codes':>6}  {'psnr(dB)':>9}  {'ssim':>7}")
        for name in GROUP_NAMES:
            row = self.groups.get(name)
            if row is None:
                lines.append(f"{name:<11}{0:>6}  {'-':>9}  {'-':>7}")
            else:
                lines.append(
                    f"{name:<11}{row['codes']:>6}  {row['psnr']:>9.3f}  {row['ssim']:>7.4f}"
                )
        lines.append(
            f"{'average':<11}{len(self.per_code):>6}  "
            f"{self.average['psnr']:>9.3f}  {self.average['ssim']:>7.4f}"
        )
        return "\n".join(lines) + "\n"


def evaluate(restore_fn, manifest: DatasetManifest, *, mode: str = "rgb") -> EvalReport:
    """Score a restorer over a manifest.

    `restore_fn` maps a degraded image to a restored image; the strings
    "identity" (returns the degraded input) and "oracle" (returns the clean
    target) select the reference baselines.
    """
    missing = [
        str(p)
        for rec in manifest
        for p in (manifest.clean_path(rec), manifest.degraded_path(rec))
        if not p.exists()
    ]
    if missing:
        raise FileNotFoundError("manifest records missing files: " + ", ".join(missing))

    per_code_values: dict[str, list[tuple[float, float]]] = {}
    for rec in manifest:
        clean, degraded = manifest.load_pair(rec)
        if restore_fn == "identity":
            restored = degraded
        elif restore_fn == "oracle":
            restored = clean
        else:
            restored = restore_fn(degraded)
        values = (psnr(restored, clean, mode=mode), ssim(restored, clean, mode=mode))
        per_code_values.setdefault(rec.code.to_string(), []).append(values)

    per_code = {
        code: {
            "psnr": float(np.mean([v[0] for v in vals])),
            "ssim": float(np.mean([v[1] for v in vals])),
            "count": len(vals),
        }
        for code, vals in sorted(per_code_values.items())
    }

    groups = {}
    for gi, name in enumerate(GROUP_NAMES, start=1):
        members = [
            row for code, row in per_code.items()
            if WeatherCode.from_string(code).popcount() == gi
        ]
        if not members:
            groups[name] = None
            logger.warning("group %s has no codes in this manifest", name)
        else:
            groups[name] = {
                "psnr": float(np.mean([m["psnr"] for m in members])),
                "ssim": float(np.mean([m["ssim"] for m in members])),
                "codes": len(members),
            }

    average = {
        "psnr": float(np.mean([row["psnr"] for row in per_code.values()])),
        "ssim": float(np.mean([row["ssim"] for row in per_code.values()])),
    }
    return EvalReport(per_code=per_code, groups=groups, average=average, mode=mode)


# ----------------------------- detectability --------------------------------

@dataclass(frozen=True)
class ProbeReport:
    restored_per_class: list    # 5 mean detection probabilities
    degraded_per_class: list
    restored_mean: float
    degraded_mean: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "restored_per_class": self.restored_per_class,
                "degraded_per_class": self.degraded_per_class,
                "restored_mean": self.restored_mean,
                "degraded_mean": self.degraded_mean,
            },
            indent=2,
            sort_keys=True,
        )

    def to_text(self) -> str:
        header = f"{'set':<10}" + "".join(f"{w:>11}" for w in
                                          ("haze", "rainstreak", "snow", "night", "raindrop"))
        rows = [header + f"{'mean':>9}"]
        for name, per_class, mean in (
            ("restored", self.restored_per_class, self.restored_mean),
            ("degraded", self.degraded_per_class, self.degraded_mean),
        ):
            rows.append(f"{name:<10}" + "".join(f"{v:>11.4f}" for v in per_class) + f"{mean:>9.4f}")
        return "\n".join(rows) + "\n"


def _stack_images(images) -> torch.Tensor:
    arrs = [np.ascontiguousarray(im, dtype=np.float32) for im in images]
    return torch.from_numpy(np.stack(arrs)).permute(0, 3, 1, 2)


def train_probe(
    manifest: DatasetManifest,
    *,
    seed: int = 0,
    steps: int = 300,
    batch_size: int = 8,
    lr: float = 2e-4,
    base_width: int = 32,
) -> WeatherDiscriminator:
    """Fit an independent weather classifier on a manifest's degraded images."""
    torch.manual_seed(seed)
    probe = WeatherDiscriminator(in_channels=3, base_width=base_width)
    opt = torch.optim.Adam(probe.parameters(), lr=lr)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(17,)))

    images = []
    codes = []
    for rec in manifest:
        _, degraded = manifest.load_pair(rec)
        images.append(degraded)
        codes.append(rec.code)
    data = _stack_images(images)
    labels = labels_from_codes(codes)

    bce = torch.nn.BCEWithLogitsLoss()
    probe.train()
    for _ in range(steps):
        sel = torch.from_numpy(rng.integers(0, len(images), size=batch_size))
        logits = probe(data[sel])
        loss = bce(logits, labels[sel])
        opt.zero_grad()
        loss.backward()
        opt.step()
    probe.eval()
    probe.trained = True
    return probe


def detectability_probe(restored_set, degraded_set, probe: WeatherDiscriminator) -> ProbeReport:
    """Mean per-class detection probability on each image set."""
    if not probe.trained:
        raise UntrainedModelError("probe classifier has not been trained")
    probe.eval()

    def set_stats(images):
        with torch.no_grad():
            p = detection_probs(probe, _stack_images(images))
        per_class = p.mean(dim=0)
        return [float(v) for v in per_class], float(per_class.mean())

    r_class, r_mean = set_stats(restored_set)
    d_class, d_mean = set_stats(degraded_set)
    return ProbeReport(
        restored_per_class=r_class,
        degraded_per_class=d_class,
        restored_mean=r_mean,
        degraded_mean=d_mean,
    )


def restored_and_degraded_sets(manifest: DatasetManifest, restore_fn):
    """(restored, degraded) image lists for a manifest under a restorer."""
    restored, degraded = [], []
    for rec in manifest:
        clean, d = manifest.load_pair(rec)
        restored.append(clean if restore_fn == "oracle" else
                        d if restore_fn == "identity" else restore_fn(d))
        degraded.append(d)
    return restored, degraded
