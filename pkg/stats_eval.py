# File: stats_eval.py

import logging
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional

import numpy as np
import pandas as pd
from scipy import stats
from scipy.optimize import curve_fit, OptimizeWarning
from skimage.metrics import structural_similarity

from errors import ValidationError, AlignmentError
from features import luma
from imaging import as_image_buffer

logger = logging.getLogger(__name__)

PSNR_CAP_DB = 100.0
SSIM_MIN_SIDE = 11


class JNDLabel(str, Enum):
    MILD = "Mild"
    MEDIUM = "Medium"
    SEVERE = "Severe"


@dataclass(frozen=True)
class CorrelationReport:
    srcc: float
    krcc: float
    plcc: float
    n: int
    plcc_logistic: Optional[float] = None


# ─── Input checks ─────────────────────────────────────────────────────────────
def _pair(x, y) -> tuple:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError(f"🚨 Sequences must be 1-D of equal length, got {x.shape} and {y.shape}")
    if len(x) < 3:
        raise ValidationError(f"🚨 Correlation needs at least 3 samples, got {len(x)}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("🚨 Sequences hold non-finite values")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ValidationError("🚨 Correlation undefined for a constant sequence")
    return x, y


# ─── Correlation indicators ───────────────────────────────────────────────────
def srcc(x, y) -> float:
    x, y = _pair(x, y)
    return float(stats.spearmanr(x, y)[0])


def krcc(x, y) -> float:
    """Kendall tau-b."""
    x, y = _pair(x, y)
    return float(stats.kendalltau(x, y, variant="b")[0])


def _logistic4(x, b1, b2, b3, b4):
    return (b1 - b2) / (1.0 + np.exp(-(x - b3) / np.abs(b4))) + b2


def plcc(x, y, logistic_fit: bool = False) -> float:
    """Pearson; with logistic_fit, x is first mapped onto y by a 4-parameter logistic."""
    x, y = _pair(x, y)
    if not logistic_fit:
        return float(stats.pearsonr(x, y)[0])
    p0 = [y.max(), y.min(), float(np.mean(x)), float(np.std(x)) or 1.0]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", OptimizeWarning)
            params, _ = curve_fit(_logistic4, x, y, p0=p0, maxfev=10000)
        fitted = _logistic4(x, *params)
        if not np.all(np.isfinite(fitted)) or np.ptp(fitted) == 0:
            raise RuntimeError("degenerate logistic mapping")
        return float(stats.pearsonr(fitted, y)[0])
    except (RuntimeError, OptimizeWarning, ValueError) as e:
        logger.warning(f"Logistic fit failed ({e}); falling back to raw PLCC")
        return float(stats.pearsonr(x, y)[0])


def correlation_report(x, y, logistic_fit: bool = False) -> CorrelationReport:
    x, y = _pair(x, y)
    return CorrelationReport(
        srcc=srcc(x, y),
        krcc=krcc(x, y),
        plcc=plcc(x, y),
        n=len(x),
        plcc_logistic=plcc(x, y, logistic_fit=True) if logistic_fit else None,
    )


# ─── Subject agreement ────────────────────────────────────────────────────────
def subject_correlation_matrix(scores) -> tuple:
    """
    Pairwise SRCC between subjects (models). Accepts a mapping of subject →
    Series indexed by sample id, or a DataFrame with one column per subject.
    Returns (matrix DataFrame, mean off-diagonal SRCC).
    """
    if isinstance(scores, pd.DataFrame):
        series = {c: scores[c] for c in scores.columns}
    elif isinstance(scores, Mapping):
        series = {k: pd.Series(v) for k, v in scores.items()}
    else:
        raise ValidationError("🚨 Subject scores must be a mapping or DataFrame")
    if len(series) < 2:
        raise ValidationError(f"🚨 Need at least 2 subjects, got {len(series)}")

    all_ids = set()
    for s in series.values():
        all_ids |= set(s.dropna().index)
    missing = set()
    for s in series.values():
        missing |= all_ids - set(s.dropna().index)
    if missing:
        raise AlignmentError("Subjects are not aligned on sample ids; missing", missing)

    names = list(series)
    ids = sorted(all_ids, key=str)
    mat = pd.DataFrame(np.eye(len(names)), index=names, columns=names)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            val = srcc(series[a].loc[ids].to_numpy(), series[b].loc[ids].to_numpy())
            mat.loc[a, b] = mat.loc[b, a] = val
    off = mat.to_numpy()[~np.eye(len(names), dtype=bool)]
    return mat, float(off.mean())


# ─── JND ──────────────────────────────────────────────────────────────────────
def tertile_sizes(n: int) -> tuple:
    base, rem = divmod(n, 3)
    return base + (rem > 0), base + (rem > 1), base


def jnd_partition(scores) -> list:
    """Higher score = milder. Remainder goes to the front tertiles; ties keep input order."""
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 1 or len(scores) < 3:
        raise ValidationError(f"🚨 JND partition needs at least 3 scores, got {scores.shape}")
    order = np.argsort(-scores, kind="stable")
    n_mild, n_medium, _ = tertile_sizes(len(scores))
    labels = [JNDLabel.SEVERE] * len(scores)
    for rank, idx in enumerate(order):
        if rank < n_mild:
            labels[idx] = JNDLabel.MILD
        elif rank < n_mild + n_medium:
            labels[idx] = JNDLabel.MEDIUM
    return labels


# ─── Zero-shot baselines ──────────────────────────────────────────────────────
def _same_shape(ref, dist) -> tuple:
    ref = as_image_buffer(ref)
    dist = as_image_buffer(dist)
    if ref.shape != dist.shape:
        raise ValidationError(f"🚨 Image dimensions differ: {ref.shape} vs {dist.shape}")
    return ref, dist


def psnr(ref, dist) -> float:
    ref, dist = _same_shape(ref, dist)
    mse = np.mean((ref.astype(np.float64) - dist.astype(np.float64)) ** 2)
    if mse == 0:
        return PSNR_CAP_DB
    return float(min(PSNR_CAP_DB, 10.0 * np.log10(255.0 ** 2 / mse)))


def ssim(ref, dist) -> float:
    """Mean SSIM on BT.601 luma, 11×11 Gaussian window (σ = 1.5)."""
    ref, dist = _same_shape(ref, dist)
    if min(ref.shape[:2]) < SSIM_MIN_SIDE:
        raise ValidationError(f"🚨 SSIM needs both sides ≥ {SSIM_MIN_SIDE} px, got {ref.shape[:2]}")
    return float(structural_similarity(
        luma(ref), luma(dist),
        data_range=255.0,
        gaussian_weights=True,
        sigma=1.5,
        use_sample_covariance=False,
        K1=0.01,
        K2=0.03,
    ))
