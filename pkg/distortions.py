# File: distortions.py

import io
import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from PIL import Image, ImageEnhance, ImageFilter
from scipy import ndimage

from errors import RegistryError, ValidationError
from imaging import as_image_buffer, clip8, from_pil, load_image, save_image, to_pil
from stats_eval import psnr

logger = logging.getLogger(__name__)

CATEGORIES = ("Blur", "Luminance", "Chrominance", "Noise", "Compression", "Spatial", "Others")
LEVELS = (1, 2, 3, 4, 5)

TAG_VALUES = {
    "sim2real": ("real", "simulation"),
    "perspective": ("first", "third"),
    "main_object": ("tool", "container", "food", "deformable", "articulated"),
    "background": ("tabletop", "kitchen", "laboratory", "household", "simulated"),
}


@dataclass(frozen=True)
class DistortionSpec:
    id: int
    name: str
    category: str
    table: tuple
    level: Optional[int] = None
    note: str = ""

    @property
    def params(self) -> list:
        """Level parameters; the whole table while the level is unset."""
        if self.level is None:
            return list(self.table)
        return [self.table[self.level - 1]]

    def at_level(self, level: int) -> "DistortionSpec":
        if int(level) not in LEVELS:
            raise ValidationError(f"🚨 Distortion level must be 1..5, got {level!r}")
        return replace(self, level=int(level))


# ──────────────────────────────────────────────────────────────────────────────
# CORRUPTION KERNELS (uint8 in, uint8 out; strength = one level parameter)
# ──────────────────────────────────────────────────────────────────────────────
def _per_channel(img: np.ndarray, fn) -> np.ndarray:
    x = img.astype(np.float64)
    return np.stack([fn(x[..., c]) for c in range(3)], axis=-1)


def _gaussian_blur(img, radius, rng):
    return from_pil(to_pil(img).filter(ImageFilter.GaussianBlur(radius=radius)))


def _lens_blur(img, radius, rng):
    r = int(radius)
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    kernel = (xx ** 2 + yy ** 2 <= r * r + 0.5).astype(np.float64)
    kernel /= kernel.sum()
    return clip8(_per_channel(img, lambda ch: ndimage.convolve(ch, kernel, mode="nearest")))


def _motion_blur(img, length, rng):
    size = int(length) | 1
    kernel = np.zeros((size, size))
    kernel[size // 2, :] = 1.0
    kernel = ndimage.rotate(kernel, rng.uniform(0.0, 180.0), reshape=False, order=1)
    kernel = np.clip(kernel, 0.0, None)
    if kernel.sum() <= 0:
        kernel = np.zeros((size, size))
        kernel[size // 2, :] = 1.0
    kernel /= kernel.sum()
    return clip8(_per_channel(img, lambda ch: ndimage.convolve(ch, kernel, mode="nearest")))


def _tone(fn):
    def apply(img, s, rng):
        return clip8(fn(img.astype(np.float64) / 255.0, s) * 255.0)
    return apply


def _color_shift(img, px, rng):
    out = img.astype(np.float64)
    out[..., 1] = ndimage.shift(out[..., 1], (0.0, px), order=1, mode="nearest")
    out[..., 2] = ndimage.shift(out[..., 2], (px / 2.0, 0.0), order=1, mode="nearest")
    return clip8(out)


def _color_saturation(img, factor, rng):
    return from_pil(ImageEnhance.Color(to_pil(img)).enhance(factor))


def _color_quantization(img, colors, rng):
    pal = to_pil(img).quantize(colors=int(colors), method=Image.Quantize.MEDIANCUT,
                               dither=Image.Dither.NONE)
    return from_pil(pal)


def _noise_field(img, rng):
    return rng.standard_normal(img.shape)


def _gaussian_noise(img, sigma, rng):
    return clip8(img.astype(np.float64) + sigma * _noise_field(img, rng))


def _impulse_noise(img, amount, rng):
    hit = rng.random(img.shape[:2]) < amount
    salt = rng.random(img.shape[:2]) < 0.5
    out = img.copy()
    out[hit & salt] = 255
    out[hit & ~salt] = 0
    return out


def _multiplicative_noise(img, s, rng):
    x = img.astype(np.float64)
    return clip8(x * (1.0 + s * _noise_field(img, rng)))


def _gaussian_denoise(img, sigma, rng):
    noisy = clip8(img.astype(np.float64) + sigma * _noise_field(img, rng))
    return clip8(ndimage.gaussian_filter(noisy.astype(np.float64), sigma=(1.0, 1.0, 0.0), mode="reflect"))


def _median_denoise(img, sigma, rng):
    noisy = clip8(img.astype(np.float64) + sigma * _noise_field(img, rng))
    return ndimage.median_filter(noisy, size=(3, 3, 1), mode="reflect")


def _jpeg(img, quality, rng):
    buf = io.BytesIO()
    to_pil(img).save(buf, format="JPEG", quality=int(quality))
    buf.seek(0)
    with Image.open(buf) as out:
        return from_pil(out)


def _jpeg2000(img, rate, rng):
    h, w = img.shape[:2]
    resolutions = max(1, min(6, int(np.floor(np.log2(min(h, w)))) + 1))
    buf = io.BytesIO()
    try:
        to_pil(img).save(buf, format="JPEG2000", quality_mode="rates",
                         quality_layers=[float(rate)], num_resolutions=resolutions, irreversible=True)
    except (OSError, ValueError) as e:
        # tiny rasters the JPEG 2000 encoder rejects get baseline JPEG at a matched quality
        logger.debug(f"JPEG2000 encode failed on {w}x{h} ({e}); using JPEG")
        return _jpeg(img, int(np.clip(1500.0 / rate, 5, 75)), rng)
    buf.seek(0)
    with Image.open(buf) as out:
        return from_pil(out)


def _grayscale_quantization(img, levels, rng):
    step = 256.0 / levels
    return clip8(np.floor(img.astype(np.float64) / step) * step + step / 2.0)


def _block_grid(img) -> tuple:
    h, w = img.shape[:2]
    block = max(1, min(h, w) // 16)
    rows, cols = -(-h // block), -(-w // block)
    return block, rows, cols


def _chosen_blocks(img, frac, rng):
    """Blocks in a seed-fixed order; higher fractions take a superset."""
    block, rows, cols = _block_grid(img)
    order = rng.permutation(rows * cols)
    count = max(1, int(round(frac * rows * cols)))
    for k in order[:count]:
        r, c = divmod(int(k), cols)
        yield k, slice(r * block, (r + 1) * block), slice(c * block, (c + 1) * block)


def _lost_macro_block(img, frac, rng):
    out = img.copy()
    for _, ys, xs in _chosen_blocks(img, frac, rng):
        out[ys, xs] = 128
    return out


def _pixelate(img, factor, rng):
    h, w = img.shape[:2]
    small = to_pil(img).resize((max(1, round(w * factor)), max(1, round(h * factor))), Image.Resampling.BOX)
    return from_pil(small.resize((w, h), Image.Resampling.NEAREST))


def _jitter(img, amount, rng):
    h, w = img.shape[:2]
    offsets = np.rint(rng.uniform(-1.0, 1.0, size=(2, h, w)) * amount).astype(int)
    yy, xx = np.mgrid[0:h, 0:w]
    return img[np.clip(yy + offsets[0], 0, h - 1), np.clip(xx + offsets[1], 0, w - 1)]


def _non_eccentricity_patch(img, frac, rng):
    h, w = img.shape[:2]
    block, rows, cols = _block_grid(img)
    shifts = rng.integers(-2 * block, 2 * block + 1, size=(rows * cols, 2))
    out = img.copy()
    for k, ys, xs in _chosen_blocks(img, frac, rng):
        bh, bw = out[ys, xs].shape[:2]
        sy = int(np.clip(ys.start + shifts[k, 0], 0, h - bh))
        sx = int(np.clip(xs.start + shifts[k, 1], 0, w - bw))
        out[ys, xs] = img[sy:sy + bh, sx:sx + bw]
    return out


def _block_interpolation(img, frac, rng):
    out = img.astype(np.float64)
    for _, ys, xs in _chosen_blocks(img, frac, rng):
        patch = out[ys, xs]
        bh, bw = patch.shape[:2]
        c00, c01, c10, c11 = patch[0, 0], patch[0, -1], patch[-1, 0], patch[-1, -1]
        wy = np.linspace(0.0, 1.0, bh)[:, None, None]
        wx = np.linspace(0.0, 1.0, bw)[None, :, None]
        out[ys, xs] = ((1 - wy) * ((1 - wx) * c00 + wx * c01)
                       + wy * ((1 - wx) * c10 + wx * c11))
    return clip8(out)


def _color_block(img, frac, rng):
    _, rows, cols = _block_grid(img)
    colors = rng.integers(0, 256, size=(rows * cols, 3), dtype=np.uint8)
    out = img.copy()
    for k, ys, xs in _chosen_blocks(img, frac, rng):
        out[ys, xs] = colors[k]
    return out


def _sharpness_change(img, factor, rng):
    return from_pil(ImageEnhance.Sharpness(to_pil(img)).enhance(factor))


def _contrast_change(img, factor, rng):
    return from_pil(ImageEnhance.Contrast(to_pil(img)).enhance(factor))


def _elastic_warp(img, alpha, rng):
    h, w = img.shape[:2]
    fields = []
    for _ in range(2):
        f = ndimage.gaussian_filter(rng.uniform(-1.0, 1.0, size=(h, w)), sigma=4.0, mode="reflect")
        peak = np.abs(f).max()
        fields.append(f / peak * alpha if peak > 0 else f)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    coords = [yy + fields[0], xx + fields[1]]
    out = _per_channel(img, lambda ch: ndimage.map_coordinates(ch, coords, order=1, mode="reflect"))
    return clip8(out)


def _haze(img, s, rng):
    airlight = 0.85 * 255.0
    return clip8(img.astype(np.float64) * (1.0 - s) + airlight * s)


# ──────────────────────────────────────────────────────────────────────────────
# REGISTRY
# ──────────────────────────────────────────────────────────────────────────────
# (id, name, category, per-level parameter, kernel, note)
_REGISTRY = [
    (1,  "Gaussian blur",          "Blur",        (0.8, 1.6, 2.4, 3.6, 5.0),        _gaussian_blur,
     "isotropic Gaussian, radius px"),
    (2,  "lens blur",              "Blur",        (1, 2, 3, 5, 7),                  _lens_blur,
     "disk (defocus) kernel, radius px"),
    (3,  "motion blur",            "Blur",        (3, 5, 9, 13, 19),                _motion_blur,
     "line kernel at a seeded angle, length px"),
    (4,  "brighten",               "Luminance",   (0.3, 0.6, 1.0, 1.5, 2.2),        _tone(lambda x, s: x ** (1.0 / (1.0 + s))),
     "gamma curve lifting mid-tones, exponent 1/(1+s)"),
    (5,  "darken",                 "Luminance",   (0.3, 0.6, 1.0, 1.5, 2.2),        _tone(lambda x, s: x ** (1.0 + s)),
     "gamma curve lowering mid-tones, exponent 1+s"),
    (6,  "mean brighten",          "Luminance",   (0.05, 0.1, 0.15, 0.2, 0.3),      _tone(lambda x, s: x + s),
     "constant offset added to every sample"),
    (7,  "mean darken",            "Luminance",   (0.05, 0.1, 0.15, 0.2, 0.3),      _tone(lambda x, s: x - s),
     "constant offset subtracted from every sample"),
    (8,  "maximum brighten",       "Luminance",   (0.1, 0.2, 0.35, 0.5, 0.7),       _tone(lambda x, s: x * (1.0 + s)),
     "gain above one, saturating highlights"),
    (9,  "maximum darken",         "Luminance",   (0.1, 0.2, 0.3, 0.45, 0.6),       _tone(lambda x, s: x * (1.0 - s)),
     "gain below one, compressing the peak"),
    (10, "color shift",            "Chrominance", (1, 3, 6, 10, 15),                _color_shift,
     "green/blue channel misregistration, px"),
    (11, "color saturation",       "Chrominance", (0.7, 0.5, 0.3, 0.15, 0.0),       _color_saturation,
     "saturation factor, lower is stronger"),
    (12, "color quantization",     "Chrominance", (64, 32, 16, 8, 4),               _color_quantization,
     "median-cut palette size"),
    (13, "Gaussian noise",         "Noise",       (5, 10, 18, 28, 40),              _gaussian_noise,
     "additive white Gaussian, sigma on 0-255"),
    (14, "impulse noise",          "Noise",       (0.01, 0.03, 0.06, 0.1, 0.15),    _impulse_noise,
     "salt and pepper, pixel fraction"),
    (15, "multiplicative noise",   "Noise",       (0.05, 0.1, 0.18, 0.28, 0.4),     _multiplicative_noise,
     "speckle x·(1+n), sigma of n"),
    (16, "Gaussian denoise",       "Noise",       (10, 15, 22, 30, 40),             _gaussian_denoise,
     "Gaussian noise then Gaussian smoothing, noise sigma"),
    (17, "median denoise",         "Noise",       (10, 15, 22, 30, 40),             _median_denoise,
     "Gaussian noise then 3×3 median, noise sigma"),
    (18, "JPEG compression",       "Compression", (75, 45, 25, 12, 5),              _jpeg,
     "baseline JPEG quality"),
    (19, "JPEG2000 compression",   "Compression", (20, 50, 100, 200, 400),          _jpeg2000,
     "JPEG 2000 compression ratio"),
    (20, "grayscale quantization", "Compression", (64, 32, 16, 8, 4),               _grayscale_quantization,
     "uniform intensity levels per channel"),
    (21, "lost macro block",       "Spatial",     (0.02, 0.05, 0.1, 0.17, 0.25),    _lost_macro_block,
     "fraction of blocks replaced by mid-gray"),
    (22, "pixelate",               "Spatial",     (0.6, 0.45, 0.3, 0.2, 0.1),       _pixelate,
     "box-downscale factor, lower is stronger"),
    (23, "jitter",                 "Spatial",     (1, 2, 3, 4, 6),                  _jitter,
     "per-pixel random displacement, px"),
    (24, "non-eccentricity patch", "Spatial",     (0.05, 0.1, 0.18, 0.27, 0.4),     _non_eccentricity_patch,
     "fraction of blocks copied from nearby offsets"),
    (25, "block interpolation",    "Spatial",     (0.05, 0.1, 0.18, 0.27, 0.4),     _block_interpolation,
     "fraction of blocks replaced by bilinear corner fill"),
    (26, "color block",            "Spatial",     (0.01, 0.03, 0.06, 0.1, 0.15),    _color_block,
     "fraction of blocks replaced by random colors"),
    (27, "sharpness change",       "Others",      (2, 4, 7, 11, 16),                _sharpness_change,
     "over-sharpening factor"),
    (28, "contrast change",        "Others",      (0.75, 0.55, 0.4, 0.28, 0.18),    _contrast_change,
     "contrast factor, lower is stronger"),
    (29, "elastic warp",           "Others",      (1, 2, 3.5, 5, 7),                _elastic_warp,
     "smooth random displacement field, peak px (geometric warps live here)"),
    (30, "haze",                   "Others",      (0.15, 0.3, 0.45, 0.6, 0.75),     _haze,
     "blend toward a bright airlight, blend weight"),
]

_KERNELS: dict = {row[0]: row[4] for row in _REGISTRY}


def distortion_registry(overrides: dict = None) -> list:
    """The 30 templates (level unset), with optional per-id parameter tables swapped in."""
    overrides = overrides or {}
    unknown = set(overrides) - set(_KERNELS)
    if unknown:
        raise RegistryError(sorted(unknown)[0])
    return [
        DistortionSpec(id=i, name=name, category=cat,
                       table=tuple(overrides.get(i, table)), note=note)
        for i, name, cat, table, _, note in _REGISTRY
    ]


def get_spec(dist_id: int, level: int = None, overrides: dict = None) -> DistortionSpec:
    try:
        dist_id = int(dist_id)
    except (TypeError, ValueError) as e:
        raise RegistryError(dist_id) from e
    if dist_id not in _KERNELS:
        raise RegistryError(dist_id)
    spec = distortion_registry(overrides)[dist_id - 1]
    return spec if level is None else spec.at_level(level)


def _kernel_rng(seed: int, dist_id: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) % 2 ** 64, int(dist_id)])


def apply_distortion(image, spec: DistortionSpec, seed: int) -> np.ndarray:
    img = as_image_buffer(image)
    if spec.id not in _KERNELS:
        raise RegistryError(spec.id)
    if spec.level is None or spec.level not in LEVELS:
        raise ValidationError(f"🚨 Distortion level must be 1..5, got {spec.level!r}")
    strength = spec.table[spec.level - 1]
    out = _KERNELS[spec.id](img, strength, _kernel_rng(seed, spec.id))
    out = as_image_buffer(np.ascontiguousarray(out))
    if out.shape != img.shape:
        raise RuntimeError(f"🚨 Distortion {spec.id} changed shape {img.shape} → {out.shape}")
    return out


# ──────────────────────────────────────────────────────────────────────────────
# PAIR MANIFEST
# ──────────────────────────────────────────────────────────────────────────────
def validate_tags(tags: dict) -> dict:
    clean = {}
    for key, allowed in TAG_VALUES.items():
        val = tags.get(key) if tags else None
        if val is None or (isinstance(val, float) and np.isnan(val)) or val == "":
            clean[key] = None
            continue
        val = str(val).strip().lower()
        if val not in allowed:
            raise ValidationError(f"🚨 Tag {key}={val!r} not in {allowed}")
        clean[key] = val
    return clean


def _tag_lookup(tags) -> dict:
    if tags is None:
        return {}
    if isinstance(tags, pd.DataFrame):
        return {str(r["ref_id"]): validate_tags(r) for r in tags.to_dict("records")}
    return {str(k): validate_tags(v) for k, v in tags.items()}


def _reference_key(ref_id: str) -> int:
    return zlib.crc32(ref_id.encode("utf-8"))


def plan_pairs(references: list, seed: int, tags=None, out_dir=None, overrides: dict = None) -> list:
    """
    One manifest row per (reference, distortion type), level drawn uniformly
    from 1..5 by a generator keyed on (seed, reference key, distortion id).
    """
    if not references:
        raise ValidationError("🚨 generate_pairs needs at least one reference image")
    registry = distortion_registry(overrides)
    tag_map = _tag_lookup(tags)
    dist_dir = Path(out_dir or ".") / "distorted"

    seen = set()
    rows = []
    for ref in references:
        ref_id = Path(ref).stem
        if ref_id in seen:
            raise ValidationError(f"🚨 Duplicate reference id {ref_id!r}; reference stems must be unique")
        seen.add(ref_id)
        ref_tags = tag_map.get(ref_id, validate_tags({}))
        for spec in registry:
            rng = np.random.default_rng([int(seed) % 2 ** 64, _reference_key(ref_id), spec.id])
            level = int(rng.integers(1, 6))
            row_seed = int(rng.integers(0, 2 ** 63))
            image_id = f"{ref_id}_d{spec.id:02d}"
            leveled = spec.at_level(level)
            rows.append({
                "image_id": image_id,
                "ref_id": ref_id,
                "ref": str(ref),
                "dist": str(dist_dir / f"{image_id}.png"),
                "id": spec.id,
                "name": spec.name,
                "category": spec.category,
                "level": level,
                "params": leveled.params,
                "seed": row_seed,
                "tags": dict(ref_tags),
                "error": None,
            })
    logger.info(f"Planned {len(rows):,} pairs from {len(references):,} references")
    return rows


def _render_reference(rows: list, overrides: dict) -> list:
    ref_path = rows[0]["ref"]
    try:
        image = load_image(ref_path)
    except (OSError, ValueError) as e:
        logger.warning(f"Unreadable reference {ref_path}: {e}")
        return [{**r, "error": f"unreadable reference: {e}"} for r in rows]
    done = []
    for row in rows:
        try:
            spec = get_spec(row["id"], row["level"], overrides)
            save_image(apply_distortion(image, spec, row["seed"]), row["dist"])
            done.append(row)
        except (OSError, ValueError, RuntimeError) as e:
            logger.warning(f"Distortion failed for {row['image_id']}: {e}")
            done.append({**row, "error": str(e)})
    return done


def generate_pairs(references: list, seed: int, out_dir, tags=None, overrides: dict = None,
                   workers: int = 4) -> list:
    """Plan the manifest and render every distorted image as PNG under out_dir/distorted."""
    rows = plan_pairs(references, seed, tags=tags, out_dir=out_dir, overrides=overrides)
    per_ref = [rows[i:i + len(_REGISTRY)] for i in range(0, len(rows), len(_REGISTRY))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rendered = list(pool.map(lambda chunk: _render_reference(chunk, overrides), per_ref))
    rows = [row for chunk in rendered for row in chunk]
    errors = sum(r["error"] is not None for r in rows)
    logger.info(f"Rendered {len(rows) - errors:,} distorted images ({errors:,} errors)")
    return rows


# ──────────────────────────────────────────────────────────────────────────────
# LEVEL CHECK
# ──────────────────────────────────────────────────────────────────────────────
def level_psnr_table(images: list, seed: int, overrides: dict = None) -> pd.DataFrame:
    """Mean PSNR against the reference for every (distortion, level) over a calibration set."""
    recs = []
    for spec in distortion_registry(overrides):
        for level in LEVELS:
            vals = [psnr(img, apply_distortion(img, spec.at_level(level), seed)) for img in images]
            recs.append({"id": spec.id, "name": spec.name, "category": spec.category,
                         "level": level, "psnr": float(np.mean(vals))})
    return pd.DataFrame(recs)


def monotonicity_violations(table: pd.DataFrame,
                            categories=("Blur", "Noise", "Compression"), tol: float = 1e-9) -> list:
    bad = []
    for dist_id, grp in table[table["category"].isin(categories)].groupby("id"):
        vals = grp.sort_values("level")["psnr"].to_numpy()
        if np.any(np.diff(vals) > tol):
            bad.append(int(dist_id))
    if bad:
        logger.warning(f"PSNR rises with level for distortion ids {bad}")
    return bad
