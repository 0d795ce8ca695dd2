# File: harness.py

import logging
from concurrent.futures import ThreadPoolExecutor
from itertools import combinations

import numpy as np
import pandas as pd
from sklearn.model_selection import train_test_split

from data_preparation import FAMILIES, FAMILY_DIMS, attach_jnd
from errors import ValidationError
from imaging import load_image
from stats_eval import JNDLabel, correlation_report, psnr, ssim

logger = logging.getLogger(__name__)

METRIC_GROUPS = ("Zero", "FR", "NR")
INDICATORS = ("SRCC", "KRCC", "PLCC")
LOGISTIC_INDICATOR = "PLCC-logistic"
MIN_SLICE = 3


# ──────────────────────────────────────────────────────────────────────────────
# SPLIT
# ──────────────────────────────────────────────────────────────────────────────
def split_train_val(manifest: pd.DataFrame, ratio: float = 0.8, seed: int = 0,
                    level: str = "reference") -> tuple:
    """
    Partition manifest rows into (train, val). At reference level every
    distortion of a reference lands on the same side; train holds
    round(ratio · n_refs) references.
    """
    if manifest is None or manifest.empty:
        raise ValidationError("🚨 Cannot split an empty manifest")
    if not 0.0 <= ratio <= 1.0:
        raise ValidationError(f"🚨 Split ratio must lie in [0, 1], got {ratio}")
    if level not in ("reference", "pair"):
        raise ValidationError(f"🚨 Split level must be 'reference' or 'pair', got {level!r}")

    key = "ref_id" if level == "reference" else "image_id"
    keys = sorted(manifest[key].astype(str).unique())
    n_train = int(np.floor(ratio * len(keys) + 0.5))
    if n_train == len(keys):
        train_keys, val_keys = keys, []
    elif n_train == 0:
        train_keys, val_keys = [], keys
    else:
        train_keys, val_keys = train_test_split(keys, train_size=n_train, random_state=int(seed) % 2 ** 32,
                                                shuffle=True)

    # leakage check on every split
    overlap = set(train_keys) & set(val_keys)
    if overlap:
        raise RuntimeError(f"🚨 Split leaked {len(overlap):,} {key} values across train and val")

    side = manifest[key].astype(str).isin(set(train_keys))
    train, val = manifest[side.to_numpy()], manifest[~side.to_numpy()]
    logger.debug(f"Split {len(keys):,} {key} values: {len(train):,} train / {len(val):,} val rows")
    return train.reset_index(drop=True), val.reset_index(drop=True)


def split_table(manifest: pd.DataFrame, ratio: float = 0.8, seed: int = 0, level: str = "reference") -> pd.DataFrame:
    train, val = split_train_val(manifest, ratio, seed, level)
    out = pd.concat([train.assign(side="train"), val.assign(side="val")])
    logger.info(f"Split {len(out):,} rows: {len(train):,} train / {len(val):,} val")
    return out[["image_id", "ref_id", "side"]].sort_values("image_id").reset_index(drop=True)


# ──────────────────────────────────────────────────────────────────────────────
# METRIC INGESTION
# ──────────────────────────────────────────────────────────────────────────────
def _normalize_group(raw) -> str:
    val = str(raw).strip()
    for g in METRIC_GROUPS:
        if val.lower() == g.lower():
            return g
    raise ValidationError(f"🚨 Metric group {raw!r} not in {METRIC_GROUPS}")


def collect_metrics(frames: list) -> pd.DataFrame:
    """Stack per-metric score tables {sample_id, value, metric, group}."""
    frames = [f for f in frames if f is not None and not f.empty]
    if not frames:
        return pd.DataFrame(columns=["sample_id", "value", "metric", "group"])
    df = pd.concat(frames, ignore_index=True)
    df["sample_id"] = df["sample_id"].astype(str)
    df["group"] = df["group"].map(_normalize_group)
    dupes = df.duplicated(["metric", "sample_id"])
    if dupes.any():
        raise ValidationError(f"🚨 {int(dupes.sum()):,} duplicate (metric, sample_id) rows in metric scores")
    return df[["sample_id", "value", "metric", "group"]]


def _baseline_for_reference(rows: list) -> list:
    ref = load_image(rows[0]["ref"])
    out = []
    for row in rows:
        dist = load_image(row["dist"])
        out.append({"sample_id": row["image_id"], "PSNR": psnr(ref, dist), "SSIM": ssim(ref, dist)})
    return out


def baseline_scores(manifest: pd.DataFrame, workers: int = 4) -> pd.DataFrame:
    """Zero-shot PSNR/SSIM of every rendered pair in the manifest."""
    df = manifest
    if "error" in df.columns:
        df = df[df["error"].isna() | (df["error"].astype(str) == "")]
    per_ref = [grp.to_dict("records") for _, grp in df.groupby("ref_id", sort=True)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(_baseline_for_reference, per_ref))
    wide = pd.DataFrame([r for chunk in results for r in chunk], columns=["sample_id", "PSNR", "SSIM"])
    long = wide.melt(id_vars="sample_id", var_name="metric", value_name="value")
    long["group"] = "Zero"
    logger.info(f"Computed PSNR/SSIM baselines for {len(wide):,} images")
    return long[["sample_id", "value", "metric", "group"]]


# ──────────────────────────────────────────────────────────────────────────────
# SLICES
# ──────────────────────────────────────────────────────────────────────────────
def slice_names(family: str) -> list:
    dims = [d.title() for d in FAMILY_DIMS[family]]
    return (["Overall", *dims, *[lab.value for lab in JNDLabel], "First", "Third", "Real", "Simulation"]
            + [f"Dis-level-{k}" for k in range(1, 6)])


def evaluation_slices(labels: pd.DataFrame, family: str) -> dict:
    """Slice name → (row mask, label column). JND labels must already be attached."""
    total = labels[family]
    slices = {"Overall": (total.notna(), family)}
    for dim in FAMILY_DIMS[family]:
        col = f"{family}_{dim}"
        slices[dim.title()] = (labels[col].notna(), col)
    for lab in JNDLabel:
        slices[lab.value] = (labels["jnd"] == lab.value, family)
    slices["First"] = (labels["perspective"] == "first", family)
    slices["Third"] = (labels["perspective"] == "third", family)
    slices["Real"] = (labels["sim2real"] == "real", family)
    slices["Simulation"] = (labels["sim2real"] == "simulation", family)
    for k in range(1, 6):
        slices[f"Dis-level-{k}"] = (labels["level"].astype(int) == k, family)
    return slices


# ──────────────────────────────────────────────────────────────────────────────
# REPEAT PROTOCOL
# ──────────────────────────────────────────────────────────────────────────────
def _evaluate_run(val: pd.DataFrame, metrics: pd.DataFrame, family: str, logistic_fit: bool,
                  skipped: set) -> list:
    recs = []
    for (group, metric), scores in metrics.groupby(["group", "metric"], sort=False):
        joined = val.merge(scores[["sample_id", "value"]], left_on="image_id", right_on="sample_id", how="inner")
        for name, (mask, label_col) in evaluation_slices(joined, family).items():
            part = joined[mask.fillna(False).to_numpy(dtype=bool)].dropna(subset=["value", label_col])
            if len(part) < MIN_SLICE:
                skipped.add((metric, name, f"{len(part)} samples"))
                continue
            try:
                rep = correlation_report(part["value"].to_numpy(), part[label_col].to_numpy(), logistic_fit)
            except ValidationError as e:
                skipped.add((metric, name, str(e)))
                continue
            values = {"SRCC": rep.srcc, "KRCC": rep.krcc, "PLCC": rep.plcc}
            if logistic_fit:
                values[LOGISTIC_INDICATOR] = rep.plcc_logistic
            for indicator, value in values.items():
                recs.append({"group": group, "metric": metric, "slice": name,
                             "indicator": indicator, "value": value, "n": rep.n})
    return recs


def repeat_protocol(metric_scores: pd.DataFrame, labels: pd.DataFrame, splits: int = 10, seed: int = 0,
                    family: str = "decision", ratio: float = 0.8, level: str = "reference",
                    logistic_fit: bool = False) -> tuple:
    """
    Evaluate every metric against the family labels on the validation side of
    `splits` resampled splits (seed, seed+1, ...). Returns (summary, runs):
    summary holds mean and std per (group, metric, slice, indicator), runs
    holds every per-repetition value.
    """
    # 1) ENSURE inputs
    if family not in FAMILIES:
        raise ValidationError(f"🚨 Unknown score family {family!r}")
    if family not in labels.columns or labels[family].notna().sum() == 0:
        raise ValidationError(f"🚨 No {family} labels to evaluate against")
    if metric_scores is None or metric_scores.empty:
        raise ValidationError("🚨 No metric scores to evaluate")
    if splits < 1:
        raise ValidationError(f"🚨 Repetitions must be ≥ 1, got {splits}")

    # 2) JND on the full labelled set; unlabelled images leave the protocol
    labelled = attach_jnd(labels[labels[family].notna()], family)
    orphans = set(metric_scores["sample_id"].astype(str)) - set(labelled["image_id"])
    if orphans:
        logger.warning(f"{len(orphans):,} metric samples have no {family} label, e.g. {sorted(orphans)[0]!r}")

    # 3) RUN repetitions
    runs, skipped = [], set()
    for r in range(splits):
        run_seed = int(seed) + r
        _, val = split_train_val(labelled, ratio, run_seed, level)
        recs = _evaluate_run(val, metric_scores, family, logistic_fit, skipped)
        runs.extend({"repeat": r, "seed": run_seed, **rec} for rec in recs)
        logger.info(f"Evaluation run {r + 1}/{splits} (seed {run_seed}): {len(val):,} val images, "
                    f"{len(recs):,} indicator values")
    for metric, name, why in sorted(skipped):
        logger.warning(f"Slice {name!r} skipped for {metric}: {why}")

    runs = pd.DataFrame(runs, columns=["repeat", "seed", "group", "metric", "slice", "indicator", "value", "n"])
    return summarize_runs(runs, family), runs


def summarize_runs(runs: pd.DataFrame, family: str) -> pd.DataFrame:
    cols = ["group", "metric", "slice", "indicator", "mean", "std", "n", "repeats"]
    if runs.empty:
        return pd.DataFrame(columns=cols)
    keys = ["group", "metric", "slice", "indicator"]
    out = (
        runs.groupby(keys, sort=False)
        .agg(mean=("value", "mean"), std=("value", lambda v: float(np.std(v, ddof=0))),
             n=("n", "mean"), repeats=("value", "size"))
        .reset_index()
    )
    out["n"] = out["n"].round().astype(int)
    order_slice = {s: i for i, s in enumerate(slice_names(family))}
    order_ind = {s: i for i, s in enumerate((*INDICATORS, LOGISTIC_INDICATOR))}
    order_group = {g: i for i, g in enumerate(METRIC_GROUPS)}
    out = out.sort_values(
        ["group", "metric", "slice", "indicator"],
        key=lambda s: s.map({"group": order_group, "slice": order_slice,
                             "indicator": order_ind}.get(s.name, {})) if s.name != "metric" else s,
        kind="stable",
    )
    return out[cols].reset_index(drop=True)


# ──────────────────────────────────────────────────────────────────────────────
# STAGE CONSISTENCY
# ──────────────────────────────────────────────────────────────────────────────
def stage_consistency(labels: pd.DataFrame, logistic_fit: bool = False) -> pd.DataFrame:
    """Correlation between every pair of available family labels over shared images."""
    present = [f for f in FAMILIES if f in labels.columns and labels[f].notna().any()]
    recs = []
    for a, b in combinations(present, 2):
        shared = labels.dropna(subset=[a, b])
        try:
            rep = correlation_report(shared[a].to_numpy(), shared[b].to_numpy(), logistic_fit)
        except ValidationError as e:
            logger.warning(f"Stage consistency {a}↔{b} skipped: {e}")
            continue
        recs.append({"stage_a": a, "stage_b": b, "srcc": rep.srcc, "krcc": rep.krcc,
                     "plcc": rep.plcc, "n": rep.n})
    return pd.DataFrame(recs, columns=["stage_a", "stage_b", "srcc", "krcc", "plcc", "n"])
