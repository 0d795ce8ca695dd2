# File: features.py

import logging
from dataclasses import dataclass, asdict

import numpy as np
from scipy import ndimage

from imaging import as_image_buffer

logger = logging.getLogger(__name__)

# ITU-R BT.601
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class LowLevelFeatures:
    luminance: float
    contrast: float
    chrominance: float
    blur: float
    spatial_information: float

    def as_dict(self) -> dict:
        return asdict(self)


def luma(image) -> np.ndarray:
    """BT.601 luma on the 0-255 scale, float64."""
    return as_image_buffer(image).astype(np.float64) @ LUMA_WEIGHTS


def chroma(image) -> tuple:
    """Centered (Cb, Cr) on the 0-255 scale."""
    rgb = as_image_buffer(image).astype(np.float64)
    y = rgb @ LUMA_WEIGHTS
    cb = (rgb[..., 2] - y) / 1.772
    cr = (rgb[..., 0] - y) / 1.402
    return cb, cr


def low_level_features(image) -> LowLevelFeatures:
    """
    Luminance and contrast are the mean and std of luma. Chrominance is the
    mean Cb/Cr magnitude. Blur is the variance of the Laplacian of luma on a
    unit scale (higher = sharper). Spatial information is the std of the Sobel
    gradient magnitude.
    """
    y = luma(image)
    cb, cr = chroma(image)
    unit = y / 255.0
    lap = ndimage.laplace(unit, mode="reflect")
    gx = ndimage.sobel(y, axis=1, mode="reflect")
    gy = ndimage.sobel(y, axis=0, mode="reflect")
    feats = LowLevelFeatures(
        luminance=float(y.mean()),
        contrast=float(y.std()),
        chrominance=float(np.hypot(cb, cr).mean()),
        blur=float(lap.var()),
        spatial_information=float(np.hypot(gx, gy).std()),
    )
    return feats
