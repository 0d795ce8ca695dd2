# File: data_preparation.py

import logging
import pandas as pd

from database import TAG_COLUMNS
from errors import ValidationError
from stats_eval import jnd_partition

logger = logging.getLogger(__name__)

FAMILIES = ("cognition", "decision", "execution")
FAMILY_DIMS = {
    "cognition": ["precision", "recall", "semantic"],
    "decision": ["position", "rotation", "state"],
    "execution": [],
}
MANIFEST_KEYS = ["image_id", "ref_id", "id", "name", "category", "level", *TAG_COLUMNS]


def _check_family(family: str):
    if family not in FAMILIES:
        raise ValidationError(f"🚨 Unknown score family {family!r}; expected one of {FAMILIES}")


def aggregate_subjects(scores: pd.DataFrame, family: str) -> pd.DataFrame:
    """
    Image-level labels of one family: the total is the mean over subject models
    of each model's image total; dimensions are the mean over tasks, then models.
    """
    _check_family(family)
    if scores.empty:
        return pd.DataFrame(columns=["image_id", family, *[f"{family}_{d}" for d in FAMILY_DIMS[family]], "models"])
    scores = scores.assign(image_id=scores["image_id"].astype(str))

    if family == "execution":
        per_model = scores.groupby(["image_id", "model_id"], as_index=False)["score"].mean()
        per_model = per_model.rename(columns={"score": "total"})
    else:
        dims = FAMILY_DIMS[family]
        per_model = (
            scores.groupby(["image_id", "model_id"], as_index=False)
            .agg(total=("image_score", "first"), **{d: (d, "mean") for d in dims})
        )

    incomplete = per_model["total"].isna().sum()
    if incomplete:
        logger.warning(f"{family}: {incomplete:,} image/model totals are undefined; averaged over remaining models")

    agg = {family: ("total", "mean"), "models": ("model_id", "nunique")}
    agg.update({f"{family}_{d}": (d, "mean") for d in FAMILY_DIMS[family]})
    labels = per_model.groupby("image_id", as_index=False).agg(**agg)
    logger.info(f"Aggregated {family} labels: {len(labels):,} images over "
                f"{per_model['model_id'].nunique():,} models")
    return labels


def subject_scores(scores: pd.DataFrame, family: str) -> pd.DataFrame:
    """Images × models table of per-model image totals."""
    _check_family(family)
    value = "score" if family == "execution" else "image_score"
    per_model = scores.groupby(["image_id", "model_id"])[value].mean()
    return per_model.unstack("model_id").sort_index()


def build_labels(manifest: pd.DataFrame, family_scores: dict) -> pd.DataFrame:
    """
    One row per manifest image with distortion attributes, tags, and the
    aggregated labels of every family present in family_scores.
    """
    # 1) ENSURE manifest
    if manifest is None or manifest.empty:
        raise ValidationError("🚨 Manifest is empty. Cannot build labels.")
    df = manifest[MANIFEST_KEYS].copy()
    df["image_id"] = df["image_id"].astype(str)
    if "error" in manifest.columns:
        failed = manifest["error"].notna() & (manifest["error"].astype(str) != "")
        if failed.any():
            logger.warning(f"{int(failed.sum()):,} manifest rows failed generation; excluded from labels")
            df = df[~failed.to_numpy()]

    # 2) MERGE each family's labels
    for family, scores in family_scores.items():
        if scores is None or scores.empty:
            logger.warning(f"Score table '{family}' is missing or empty; skipping merge.")
            continue
        labels = aggregate_subjects(scores, family)
        orphans = set(labels["image_id"]) - set(df["image_id"])
        if orphans:
            logger.warning(f"{family}: {len(orphans):,} labelled images not in the manifest, "
                           f"e.g. {sorted(orphans)[0]!r}")
        df = df.merge(labels.drop(columns=["models"]), on="image_id", how="left")
        logger.info(f"After merging '{family}': {df[family].notna().sum():,} labelled images")

    return df.reset_index(drop=True)


def attach_jnd(labels: pd.DataFrame, family: str) -> pd.DataFrame:
    """Mild/Medium/Severe tertiles of the family label over every labelled image."""
    _check_family(family)
    if family not in labels.columns:
        raise ValidationError(f"🚨 No {family} labels available for JND partitioning")
    df = labels.copy()
    mask = df[family].notna()
    df["jnd"] = None
    df.loc[mask, "jnd"] = [lab.value for lab in jnd_partition(df.loc[mask, family].to_numpy())]
    return df


def jnd_table(labels: pd.DataFrame, family: str) -> pd.DataFrame:
    df = attach_jnd(labels, family)
    df = df[df["jnd"].notna()]
    return df[["image_id", family, "jnd"]].rename(columns={family: "score", "jnd": "label"})


def summarize_by_distortion(labels: pd.DataFrame, family: str) -> pd.DataFrame:
    """Mean and std of a family label per (distortion id, level)."""
    _check_family(family)
    df = labels.dropna(subset=[family])
    out = (
        df.groupby(["id", "name", "category", "level"], as_index=False)
        .agg(mean=(family, "mean"), std=(family, "std"), n=(family, "size"))
        .sort_values(["id", "level"])
    )
    out["std"] = out["std"].fillna(0.0)
    return out.reset_index(drop=True)


def summarize_by_tag(labels: pd.DataFrame, family: str) -> pd.DataFrame:
    """Mean and std of a family label per tag value; untagged images are left out."""
    _check_family(family)
    df = labels.dropna(subset=[family])
    long = df.melt(id_vars=["image_id", family], value_vars=TAG_COLUMNS,
                   var_name="tag", value_name="value").dropna(subset=["value"])
    if long.empty:
        return pd.DataFrame(columns=["tag", "value", "mean", "std", "n"])
    out = (
        long.groupby(["tag", "value"], as_index=False)
        .agg(mean=(family, "mean"), std=(family, "std"), n=(family, "size"))
    )
    out["std"] = out["std"].fillna(0.0)
    order = {t: i for i, t in enumerate(TAG_COLUMNS)}
    out = out.sort_values(["tag", "value"], key=lambda s: s.map(order) if s.name == "tag" else s)
    return out.reset_index(drop=True)


def attach_features(features: pd.DataFrame, labels: pd.DataFrame) -> pd.DataFrame:
    """Low-level features joined onto labels; features of unlabelled images stay with null labels."""
    keep = [c for c in labels.columns if c not in features.columns or c == "image_id"]
    df = features.merge(labels[keep], on="image_id", how="left")
    df[["luminance", "contrast", "chrominance", "blur", "spatial_information"]] = (
        df[["luminance", "contrast", "chrominance", "blur", "spatial_information"]]
        .apply(pd.to_numeric, errors="coerce")
    )
    logger.info(f"Prepared feature data: {len(df):,} rows")
    return df
