# File: imaging.py

from pathlib import Path

import numpy as np
from PIL import Image

from errors import ValidationError


def as_image_buffer(image) -> np.ndarray:
    """8-bit sRGB raster as an (H, W, 3) uint8 array."""
    if isinstance(image, Image.Image):
        image = np.asarray(image.convert("RGB"))
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError(f"🚨 Expected an H×W×3 image, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        raise ValidationError(f"🚨 Expected 8-bit samples, got {arr.dtype}")
    return arr


def load_image(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.array(img.convert("RGB"), dtype=np.uint8)


def save_image(image, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(as_image_buffer(image)).save(path, format="PNG")
    return path


def to_pil(image) -> Image.Image:
    return Image.fromarray(as_image_buffer(image))


def from_pil(img: Image.Image) -> np.ndarray:
    return np.array(img.convert("RGB"), dtype=np.uint8)


def clip8(x) -> np.ndarray:
    return np.clip(np.rint(x), 0, 255).astype(np.uint8)
