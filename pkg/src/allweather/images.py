"""Image array helpers: validation, PNG I/O, 8-bit quantization, luma."""

from __future__ import annotations

import numpy as np
from PIL import Image as PILImage

from allweather.errors import ShapeError

# Encoder/decoder stacks downsample three times, so sides must divide by 8.
SPATIAL_FACTOR = 8


def validate_image(img: np.ndarray, *, multiple_of: int = SPATIAL_FACTOR) -> np.ndarray:
    """Check an [H, W, 3] float image in [0, 1] and return it unchanged."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"expected [H, W, 3] image, got shape {img.shape}")
    h, w = img.shape[:2]
    if h % multiple_of or w % multiple_of:
        raise ShapeError(f"image dims {h}x{w} must be multiples of {multiple_of}")
    if not np.issubdtype(img.dtype, np.floating):
        raise ShapeError(f"expected float image, got dtype {img.dtype}")
    if not np.isfinite(img).all():
        raise ShapeError("image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ShapeError("image values outside [0, 1]")
    return img


def clamp01(img: np.ndarray) -> np.ndarray:
    return np.clip(img, 0.0, 1.0)


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Quantize a [0,1] float image to 8 bits (round half away from zero)."""
    return (np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def from_uint8(arr: np.ndarray) -> np.ndarray:
    return arr.astype(np.float32) / 255.0


def save_png(img: np.ndarray, path) -> None:
    PILImage.fromarray(to_uint8(img), mode="RGB").save(path, format="PNG")


def load_png(path) -> np.ndarray:
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("RGB"))
    return from_uint8(arr)


def luma(img: np.ndarray) -> np.ndarray:
    """Y channel of an RGB image (BT.601 weights)."""
    return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]
