# File: tests/test_stats_eval.py

import itertools

import numpy as np
import pandas as pd
import pytest

from errors import AlignmentError, ValidationError
from stats_eval import (
    JNDLabel, correlation_report, jnd_partition, krcc, plcc, psnr, srcc, ssim,
    subject_correlation_matrix, tertile_sizes,
)


# ─── Oracles ──────────────────────────────────────────────────────────────────
def _avg_ranks(x):
    x = list(x)
    ranks = []
    for v in x:
        below = sum(1 for u in x if u < v)
        equal = sum(1 for u in x if u == v)
        ranks.append(below + (equal + 1) / 2.0)
    return np.array(ranks)


def _pearson(a, b):
    a = np.asarray(a, float) - np.mean(a)
    b = np.asarray(b, float) - np.mean(b)
    return float((a * b).sum() / np.sqrt((a * a).sum() * (b * b).sum()))


def _tau_b(x, y):
    conc = disc = tie_x = tie_y = 0
    for i, j in itertools.combinations(range(len(x)), 2):
        dx, dy = np.sign(x[i] - x[j]), np.sign(y[i] - y[j])
        if dx == 0 and dy == 0:
            continue
        if dx == 0:
            tie_x += 1
        elif dy == 0:
            tie_y += 1
        elif dx == dy:
            conc += 1
        else:
            disc += 1
    return (conc - disc) / np.sqrt((conc + disc + tie_x) * (conc + disc + tie_y))


Y_FIXED = [1, 3, 2, 3, 1, 2]


def _sequences():
    for n in range(3, 7):
        y = Y_FIXED[:n]
        for x in itertools.product((1, 2, 3), repeat=n):
            if len(set(x)) > 1:
                yield list(x), y


def _luma(img):
    return img.astype(np.float64) @ np.array([0.299, 0.587, 0.114])


def _ssim_oracle(ref, dist, radius=5, sigma=1.5):
    """Mean SSIM over fully-covered 11×11 Gaussian windows on BT.601 luma."""
    x, y = _luma(ref), _luma(dist)
    g = np.exp(-np.arange(-radius, radius + 1) ** 2 / (2.0 * sigma ** 2))
    w = np.outer(g, g) / g.sum() ** 2
    k = 2 * radius + 1
    h, wd = x.shape[0] - k + 1, x.shape[1] - k + 1

    def blur(a):
        out = np.zeros((h, wd))
        for i in range(k):
            for j in range(k):
                out += w[i, j] * a[i:i + h, j:j + wd]
        return out

    mx, my = blur(x), blur(y)
    vx, vy, cxy = blur(x * x) - mx * mx, blur(y * y) - my * my, blur(x * y) - mx * my
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    s = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
    return float(s.mean())


# ─── Correlations ─────────────────────────────────────────────────────────────
def test_srcc_matches_rank_oracle_on_all_small_sequences():
    for x, y in _sequences():
        assert abs(srcc(x, y) - _pearson(_avg_ranks(x), _avg_ranks(y))) <= 1e-12


def test_krcc_matches_concordance_oracle_on_all_small_sequences():
    for x, y in _sequences():
        assert abs(krcc(x, y) - _tau_b(x, y)) <= 1e-12


def test_trivial_correlations():
    x = [1, 2, 3, 4]
    assert srcc(x, x) == pytest.approx(1.0)
    assert srcc(x, x[::-1]) == pytest.approx(-1.0)
    assert krcc(x, x) == pytest.approx(1.0)
    assert krcc([1, 2, 3], [1, 3, 2]) == pytest.approx(1 / 3)
    assert plcc([1, 2, 3, 4], [5, 7, 9, 11]) == pytest.approx(1.0)
    assert plcc([1, 2, 3, 4], [-1, -2, -3, -4]) == pytest.approx(-1.0)


def test_rank_correlations_invariant_under_monotone_transform():
    rng = np.random.default_rng(4)
    x, y = rng.normal(size=40), rng.normal(size=40)
    assert srcc(np.exp(x), y) == pytest.approx(srcc(x, y), abs=1e-12)
    assert krcc(x ** 3, y) == pytest.approx(krcc(x, y), abs=1e-12)


def test_correlations_are_symmetric():
    rng = np.random.default_rng(5)
    x, y = rng.normal(size=25), rng.normal(size=25)
    assert srcc(x, y) == pytest.approx(srcc(y, x))
    assert krcc(x, y) == pytest.approx(krcc(y, x))
    assert plcc(x, y) == pytest.approx(plcc(y, x))


@pytest.mark.parametrize("x, y", [
    ([1, 2, 3], [1, 2]),
    ([1, 2], [1, 2]),
    ([1, 1, 1], [1, 2, 3]),
    ([1, np.nan, 3], [1, 2, 3]),
])
def test_invalid_sequences_raise(x, y):
    with pytest.raises(ValidationError):
        srcc(x, y)


def test_logistic_plcc_not_worse_on_saturating_data():
    x = np.linspace(-4, 4, 60)
    y = 1.0 / (1.0 + np.exp(-2.0 * x))
    assert plcc(x, y, logistic_fit=True) >= plcc(x, y)
    rep = correlation_report(x, y, logistic_fit=True)
    assert rep.plcc_logistic == pytest.approx(plcc(x, y, logistic_fit=True))
    assert rep.n == 60


# ─── Subject agreement ────────────────────────────────────────────────────────
def test_subject_matrix_identical_and_reversed():
    s = pd.Series([1.0, 2.0, 3.0, 4.0], index=list("abcd"))
    _, mean = subject_correlation_matrix({"m1": s, "m2": s})
    assert mean == pytest.approx(1.0)
    _, mean = subject_correlation_matrix({"m1": s, "m2": -s})
    assert mean == pytest.approx(-1.0)


def test_subject_matrix_matches_pairwise_srcc():
    rng = np.random.default_rng(8)
    table = pd.DataFrame(rng.normal(size=(12, 3)), columns=["a", "b", "c"])
    matrix, mean = subject_correlation_matrix(table)
    pairs = [srcc(table[p], table[q]) for p, q in (("a", "b"), ("a", "c"), ("b", "c"))]
    assert mean == pytest.approx(np.mean(pairs), abs=1e-12)
    assert matrix.loc["a", "c"] == pytest.approx(pairs[1])
    assert np.allclose(matrix.to_numpy(), matrix.to_numpy().T)
    assert np.allclose(np.diag(matrix), 1.0)


def test_subject_matrix_reports_missing_ids():
    a = pd.Series([1.0, 2.0, 3.0], index=["x", "y", "z"])
    b = pd.Series([1.0, 2.0, 3.0], index=["x", "y", "w"])
    with pytest.raises(AlignmentError) as err:
        subject_correlation_matrix({"a": a, "b": b})
    assert err.value.missing_ids == ["w", "z"]


def test_subject_matrix_needs_two_subjects():
    with pytest.raises(ValidationError):
        subject_correlation_matrix({"a": pd.Series([1.0, 2.0, 3.0])})


# ─── JND ──────────────────────────────────────────────────────────────────────
def test_jnd_three_scores():
    assert jnd_partition([9, 5, 1]) == [JNDLabel.MILD, JNDLabel.MEDIUM, JNDLabel.SEVERE]


@pytest.mark.parametrize("n, sizes", [(9, (3, 3, 3)), (10, (4, 3, 3)), (11, (4, 4, 3)), (3, (1, 1, 1))])
def test_jnd_tertile_sizes(n, sizes):
    assert tertile_sizes(n) == sizes
    labels = jnd_partition(np.arange(n, dtype=float))
    counts = tuple(labels.count(lab) for lab in JNDLabel)
    assert counts == sizes


def test_jnd_invariant_under_monotone_transform():
    rng = np.random.default_rng(2)
    scores = rng.uniform(0, 5, 31)
    assert jnd_partition(scores) == jnd_partition(np.exp(scores) * 3 + 1)


def test_jnd_ties_keep_input_order():
    labels = jnd_partition([1.0, 1.0, 1.0, 1.0])
    assert labels == [JNDLabel.MILD, JNDLabel.MILD, JNDLabel.MEDIUM, JNDLabel.SEVERE]


def test_jnd_needs_three_scores():
    with pytest.raises(ValidationError):
        jnd_partition([1.0, 2.0])


# ─── Baselines ────────────────────────────────────────────────────────────────
def test_psnr_black_white_and_identity(image):
    black = np.zeros((16, 16, 3), np.uint8)
    white = np.full((16, 16, 3), 255, np.uint8)
    assert psnr(black, white) == pytest.approx(0.0, abs=1e-12)
    assert psnr(image, image) == 100.0


def test_psnr_matches_pixel_oracle(image):
    rng = np.random.default_rng(1)
    noisy = np.clip(image.astype(int) + rng.integers(-20, 21, image.shape), 0, 255).astype(np.uint8)
    diff = image.astype(np.float64) - noisy.astype(np.float64)
    mse = (diff ** 2).sum() / diff.size
    assert psnr(image, noisy) == pytest.approx(10 * np.log10(255 ** 2 / mse), abs=1e-9)


def test_psnr_decreases_with_noise(image):
    rng = np.random.default_rng(0)
    field = rng.standard_normal(image.shape)
    values = [psnr(image, np.clip(np.rint(image + s * field), 0, 255).astype(np.uint8)) for s in (2, 5, 10, 20)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_ssim_identity_and_inversion(image):
    assert ssim(image, image) == pytest.approx(1.0)
    assert ssim(image, 255 - image) < 0


def test_ssim_matches_gaussian_window_oracle(image):
    rng = np.random.default_rng(4)
    noisy = np.clip(image.astype(int) + rng.integers(-30, 31, image.shape), 0, 255).astype(np.uint8)
    assert ssim(image, noisy) == pytest.approx(_ssim_oracle(image, noisy), abs=1e-4)
    shifted = np.roll(image, 3, axis=1)
    assert ssim(image, shifted) == pytest.approx(_ssim_oracle(image, shifted), abs=1e-4)


def test_ssim_rejects_small_or_mismatched():
    small = np.zeros((8, 20, 3), np.uint8)
    with pytest.raises(ValidationError):
        ssim(small, small)
    with pytest.raises(ValidationError):
        ssim(np.zeros((20, 20, 3), np.uint8), np.zeros((20, 21, 3), np.uint8))
