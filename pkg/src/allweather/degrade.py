"""Analytic, seeded weather operators and the hybrid-condition compositor.

Five operators cover the weather types: haze via the atmospheric scattering
model, rain streaks as screen-blended oriented line kernels, snow as
alpha-composited soft particle sprites, night as gamma-plus-gain darkening,
and raindrops as locally warped blurred disks. A hybrid condition applies the
operators for every set code bit in the fixed order haze -> rain streak ->
snow -> night -> raindrop, each stage consuming the previous stage's output.

All randomness flows from a 64-bit seed; identical (image, code, seed) calls
are bit-identical. Each operator has an identity parameter point (zero
scattering, zero particles, gamma 1 / scale 1) used by the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from allweather.codes import WEATHER_TYPES, WeatherCode, require_nonzero
from allweather.errors import ParameterError
from allweather.images import clamp01, validate_image

DEPTH_MODES = ("constant", "vertical")


@dataclass(frozen=True)
class HazeParams:
    beta: float = 1.0                        # scattering coefficient, >= 0
    airlight: tuple[float, float, float] = (0.85, 0.85, 0.9)
    depth_mode: str = "vertical"

    def __post_init__(self):
        if self.beta < 0:
            raise ParameterError(f"haze beta must be >= 0, got {self.beta}")
        if len(self.airlight) != 3 or any(not 0 <= a <= 1 for a in self.airlight):
            raise ParameterError(f"airlight must be 3 values in [0,1], got {self.airlight}")
        if self.depth_mode not in DEPTH_MODES:
            raise ParameterError(f"depth_mode must be one of {DEPTH_MODES}")


@dataclass(frozen=True)
class RainstreakParams:
    count: int = 60
    length_px: float = 10.0
    angle_deg: float = 15.0
    intensity: float = 0.5

    def __post_init__(self):
        if self.count < 0:
            raise ParameterError("rain streak count must be >= 0")
        if self.length_px <= 0:
            raise ParameterError("rain streak length must be > 0")
        if not 0 <= self.intensity <= 1:
            raise ParameterError("rain streak intensity must be in [0,1]")


@dataclass(frozen=True)
class SnowParams:
    flake_count: int = 100
    size_range_px: tuple[float, float] = (1.0, 3.0)
    opacity: float = 0.7

    def __post_init__(self):
        lo, hi = self.size_range_px
        if self.flake_count < 0:
            raise ParameterError("flake count must be >= 0")
        if lo <= 0 or hi < lo:
            raise ParameterError(f"bad flake size range {self.size_range_px}")
        if not 0 <= self.opacity <= 1:
            raise ParameterError("snow opacity must be in [0,1]")


@dataclass(frozen=True)
class NightParams:
    gamma: float = 2.0        # >= 1 darkens midtones
    illumination_scale: float = 0.45  # in (0, 1]

    def __post_init__(self):
        if self.gamma < 1:
            raise ParameterError("night gamma must be >= 1")
        if not 0 < self.illumination_scale <= 1:
            raise ParameterError("illumination scale must be in (0,1]")


@dataclass(frozen=True)
class RaindropParams:
    drop_count: int = 6
    radius_range_px: tuple[float, float] = (3.0, 6.0)
    refraction_strength: float = 0.6

    def __post_init__(self):
        lo, hi = self.radius_range_px
        if self.drop_count < 0:
            raise ParameterError("drop count must be >= 0")
        if lo <= 0 or hi < lo:
            raise ParameterError(f"bad drop radius range {self.radius_range_px}")
        if not 0 <= self.refraction_strength <= 1:
            raise ParameterError("refraction strength must be in [0,1]")


@dataclass(frozen=True)
class DegradationParams:
    """Concrete parameter record for all five operators."""

    haze: HazeParams = field(default_factory=HazeParams)
    rainstreak: RainstreakParams = field(default_factory=RainstreakParams)
    snow: SnowParams = field(default_factory=SnowParams)
    night: NightParams = field(default_factory=NightParams)
    raindrop: RaindropParams = field(default_factory=RaindropParams)

    def identity(self) -> "DegradationParams":
        """Parameter point at which every operator is the identity map."""
        return DegradationParams(
            haze=replace(self.haze, beta=0.0),
            rainstreak=replace(self.rainstreak, count=0),
            snow=replace(self.snow, flake_count=0),
            night=replace(self.night, gamma=1.0, illumination_scale=1.0),
            raindrop=replace(self.raindrop, drop_count=0),
        )


# Uniform sampling ranges per weather type. The "paired" and "realworld"
# regimes are deliberately disjoint so held-out conditions look statistically
# different from the paired training set.
_PARAM_RANGES = {
    "paired": {
        "haze": {"beta": (0.6, 1.4), "airlight": (0.75, 0.95)},
        "rainstreak": {"count": (40, 90), "length_px": (7.0, 13.0),
                       "angle_deg": (-30.0, 30.0), "intensity": (0.35, 0.7)},
        "snow": {"flake_count": (60, 140), "size_lo": (1.0, 1.8),
                 "size_hi": (2.2, 3.2), "opacity": (0.5, 0.9)},
        "night": {"gamma": (1.5, 2.4), "illumination_scale": (0.35, 0.6)},
        "raindrop": {"drop_count": (4, 9), "radius_lo": (3.0, 4.0),
                     "radius_hi": (4.5, 6.0), "refraction_strength": (0.4, 0.9)},
    },
    "realworld": {
        "haze": {"beta": (1.5, 2.3), "airlight": (0.6, 0.74)},
        "rainstreak": {"count": (95, 150), "length_px": (13.5, 19.0),
                       "angle_deg": (31.0, 50.0), "intensity": (0.72, 0.9)},
        "snow": {"flake_count": (150, 240), "size_lo": (1.9, 2.4),
                 "size_hi": (3.4, 4.6), "opacity": (0.3, 0.48)},
        "night": {"gamma": (2.5, 3.2), "illumination_scale": (0.2, 0.33)},
        "raindrop": {"drop_count": (10, 14), "radius_lo": (4.2, 5.0),
                     "radius_hi": (6.2, 8.0), "refraction_strength": (0.91, 1.0)},
    },
}


def sample_weather_params(weather: str, rng: np.random.Generator, regime: str = "paired"):
    """Draw one operator's parameters uniformly from the regime's ranges."""
    if regime not in _PARAM_RANGES:
        raise ParameterError(f"unknown sampling regime {regime!r}")
    r = _PARAM_RANGES[regime][weather]
    u = rng.uniform
    if weather == "haze":
        base = u(*r["airlight"])
        air = (base, base, min(1.0, base + 0.05))
        return HazeParams(beta=u(*r["beta"]), airlight=air, depth_mode="vertical")
    if weather == "rainstreak":
        return RainstreakParams(
            count=int(rng.integers(r["count"][0], r["count"][1] + 1)),
            length_px=u(*r["length_px"]),
            angle_deg=u(*r["angle_deg"]),
            intensity=u(*r["intensity"]),
        )
    if weather == "snow":
        return SnowParams(
            flake_count=int(rng.integers(r["flake_count"][0], r["flake_count"][1] + 1)),
            size_range_px=(u(*r["size_lo"]), u(*r["size_hi"])),
            opacity=u(*r["opacity"]),
        )
    if weather == "night":
        return NightParams(gamma=u(*r["gamma"]), illumination_scale=u(*r["illumination_scale"]))
    if weather == "raindrop":
        return RaindropParams(
            drop_count=int(rng.integers(r["drop_count"][0], r["drop_count"][1] + 1)),
            radius_range_px=(u(*r["radius_lo"]), u(*r["radius_hi"])),
            refraction_strength=u(*r["refraction_strength"]),
        )
    raise ParameterError(f"unknown weather type {weather!r}")


def sample_params(rng: np.random.Generator, regime: str = "paired") -> DegradationParams:
    """Draw a full five-operator parameter record (one rng stream, fixed order)."""
    return DegradationParams(*(sample_weather_params(w, rng, regime) for w in WEATHER_TYPES))


# --------------------------------------------------------------------------
# Operators. Each takes a validated float image and returns a new clamped one.
# --------------------------------------------------------------------------

def depth_proxy(h: int, w: int, mode: str) -> np.ndarray:
    """Scene depth stand-in: constant, or deeper toward the top of the frame."""
    if mode == "constant":
        return np.ones((h, w))
    if mode == "vertical":
        return np.linspace(1.0, 0.2, h)[:, None] * np.ones((1, w))
    raise ParameterError(f"unknown depth mode {mode!r}")


def haze_overlay(img: np.ndarray, transmission: np.ndarray, airlight) -> np.ndarray:
    """Atmospheric scattering: out = img * t + airlight * (1 - t)."""
    t = np.asarray(transmission)[..., None]
    a = np.asarray(airlight, dtype=img.dtype).reshape(1, 1, 3)
    return clamp01(img * t + a * (1.0 - t))


def add_haze(img: np.ndarray, p: HazeParams, rng: np.random.Generator) -> np.ndarray:
    h, w = img.shape[:2]
    t = np.exp(-p.beta * depth_proxy(h, w, p.depth_mode))
    return haze_overlay(img, t, p.airlight)


def add_rainstreaks(img: np.ndarray, p: RainstreakParams, rng: np.random.Generator) -> np.ndarray:
    if p.count == 0:
        return img.copy()
    h, w = img.shape[:2]
    mask = np.zeros((h, w))
    theta = np.deg2rad(90.0 - p.angle_deg)  # 0 deg = vertical fall
    dy, dx = np.sin(theta), np.cos(theta)
    half = p.length_px / 2.0
    ts = np.arange(-half, half, 0.5)
    falloff = 1.0 - np.abs(ts) / (half + 1.0)
    for _ in range(p.count):
        cy = rng.uniform(0, h)
        cx = rng.uniform(0, w)
        ys = np.round(cy + ts * dy).astype(int)
        xs = np.round(cx + ts * dx).astype(int)
        keep = (ys >= 0) & (ys < h) & (xs >= 0) & (xs < w)
        np.maximum.at(mask, (ys[keep], xs[keep]), falloff[keep])
    mask = ndimage.gaussian_filter(mask, sigma=0.4)
    streaks = np.clip(mask, 0.0, 1.0)[..., None] * p.intensity
    # screen blend toward white so streaks brighten without clipping structure
    return clamp01(1.0 - (1.0 - img) * (1.0 - streaks))


def add_snow(img: np.ndarray, p: SnowParams, rng: np.random.Generator) -> np.ndarray:
    if p.flake_count == 0:
        return img.copy()
    h, w = img.shape[:2]
    alpha = np.zeros((h, w))
    lo, hi = p.size_range_px
    scales = np.linspace(lo, hi, 3)  # near/mid/far flake sizes
    for _ in range(p.flake_count):
        r = scales[rng.integers(0, 3)] * rng.uniform(0.85, 1.15)
        cy = rng.uniform(0, h)
        cx = rng.uniform(0, w)
        y0, y1 = max(0, int(cy - 2 * r)), min(h, int(cy + 2 * r) + 1)
        x0, x1 = max(0, int(cx - 2 * r)), min(w, int(cx + 2 * r) + 1)
        if y0 >= y1 or x0 >= x1:
            continue
        yy, xx = np.mgrid[y0:y1, x0:x1]
        d2 = (yy - cy) ** 2 + (xx - cx) ** 2
        sprite = p.opacity * np.exp(-d2 / (2.0 * (r / 1.8) ** 2))
        patch = alpha[y0:y1, x0:x1]
        np.maximum(patch, sprite, out=patch)
    alpha = np.clip(alpha, 0.0, 1.0)[..., None]
    return clamp01(img * (1.0 - alpha) + 1.0 * alpha)


def add_night(img: np.ndarray, p: NightParams, rng: np.random.Generator) -> np.ndarray:
    return clamp01(p.illumination_scale * np.power(img, p.gamma))


def add_raindrops(img: np.ndarray, p: RaindropParams, rng: np.random.Generator) -> np.ndarray:
    if p.drop_count == 0:
        return img.copy()
    h, w = img.shape[:2]
    out = img.copy()
    blurred = np.stack(
        [ndimage.gaussian_filter(img[..., c], sigma=1.2) for c in range(3)], axis=-1
    )
    lo, hi = p.radius_range_px
    for _ in range(p.drop_count):
        r = rng.uniform(lo, hi)
        cy = rng.uniform(r, max(r, h - r))
        cx = rng.uniform(r, max(r, w - r))
        y0, y1 = max(0, int(cy - r) - 1), min(h, int(cy + r) + 2)
        x0, x1 = max(0, int(cx - r) - 1), min(w, int(cx + r) + 2)
        if y0 >= y1 or x0 >= x1:
            continue
        yy, xx = np.mgrid[y0:y1, x0:x1].astype(float)
        d2 = (yy - cy) ** 2 + (xx - cx) ** 2
        inside = d2 < r * r
        if not inside.any():
            continue
        # lens warp: magnify toward the drop center, continuous at the rim
        shrink = 1.0 - p.refraction_strength * (1.0 - d2 / (r * r))
        src_y = cy + (yy - cy) * shrink
        src_x = cx + (xx - cx) * shrink
        coords = np.stack([src_y[inside], src_x[inside]])
        for c in range(3):
            sampled = ndimage.map_coordinates(blurred[..., c], coords, order=1, mode="nearest")
            channel = out[y0:y1, x0:x1, c]
            channel[inside] = sampled
    return clamp01(out)


_OPERATORS = {
    "haze": add_haze,
    "rainstreak": add_rainstreaks,
    "snow": add_snow,
    "night": add_night,
    "raindrop": add_raindrops,
}


def apply_weather(img: np.ndarray, weather: str, params: DegradationParams, seed: int) -> np.ndarray:
    """Apply a single weather operator with the given parameter record."""
    img = validate_image(img)
    if weather not in _OPERATORS:
        raise ParameterError(f"unknown weather type {weather!r}, expected one of {WEATHER_TYPES}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    return _OPERATORS[weather](img, getattr(params, weather), rng)


def stage_rng(seed: int, stage: int) -> np.random.Generator:
    """Independent rng stream for one composition stage of one record."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stage,)))


def compose_condition(
    img: np.ndarray,
    code: WeatherCode,
    seed: int,
    *,
    params: DegradationParams | None = None,
    regime: str = "paired",
) -> np.ndarray:
    """Fabricate the hybrid condition named by `code` from a clean image.

    Each set bit's operator runs exactly once, in the fixed digit order, on
    the previous stage's output. Stage parameters are sampled uniformly from
    the regime's ranges unless a fixed record is passed. Output is clamped to
    [0, 1] after every stage.
    """
    img = validate_image(img)
    require_nonzero(code)
    out = img
    for stage, (weather, active) in enumerate(zip(WEATHER_TYPES, code.bits)):
        if not active:
            continue
        rng = stage_rng(seed, stage)
        stage_params = getattr(params, weather) if params is not None else \
            sample_weather_params(weather, rng, regime)
        out = clamp01(_OPERATORS[weather](out, stage_params, rng))
    return out
