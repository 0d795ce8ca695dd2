# File: database.py

from dotenv import load_dotenv, dotenv_values
from pathlib import Path
from dataclasses import dataclass, field
import os
import json
import logging
from functools import lru_cache

import numpy as np
import pandas as pd

from errors import ValidationError

# ─── Load .env ────────────────────────────────────────────────────────────────
env_path = Path(__file__).parent / ".env"
if env_path.exists():
    load_dotenv(env_path)

# ─── Logging setup ────────────────────────────────────────────────────────────
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()
logging.basicConfig(
    level=LOG_LEVEL,
    format="%(asctime)s %(levelname)s [%(name)s] %(message)s"
)
logger = logging.getLogger(__name__)

# UR5 link constants (m)
DEFAULT_DH = {"DH_D1": 0.089159, "DH_A2": 0.425, "DH_A3": 0.39225,
              "DH_D4": 0.10915, "DH_D5": 0.09465, "DH_D6": 0.0823}
DEFAULT_HOME_JOINTS = (0.0, -np.pi / 2, np.pi / 2, -np.pi / 2, -np.pi / 2, 0.0)

TAG_COLUMNS = ["sim2real", "perspective", "main_object", "background"]
MANIFEST_COLUMNS = ["image_id", "ref_id", "ref", "dist", "id", "name", "category",
                    "level", "params", "seed", *TAG_COLUMNS, "error"]


# ─── Settings ─────────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class Settings:
    log_level: str = "INFO"
    seed: int = 0
    workers: int = 4
    dh: dict = field(default_factory=lambda: dict(DEFAULT_DH))
    dh_negate_a: bool = False
    home_joints: tuple = DEFAULT_HOME_JOINTS
    decision_normalization: str = "global"
    decision_rotation_mode: str = "rotvec"
    decision_dmax_mm: float = 1700.0
    plcc_logistic: bool = False
    split_ratio: float = 0.8
    split_repeats: int = 10
    split_level: str = "reference"
    distortion_params: dict = field(default_factory=dict)


def _as_bool(key: str, raw: str) -> bool:
    val = raw.strip().lower()
    if val in ("1", "true", "yes", "on"):
        return True
    if val in ("0", "false", "no", "off", ""):
        return False
    raise ValidationError(f"🚨 Config key {key} expects a boolean, got {raw!r}")


def _as_number(key: str, raw: str, kind=float):
    try:
        return kind(raw)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"🚨 Config key {key} expects {kind.__name__}, got {raw!r}") from e


def _as_floats(key: str, raw: str, count: int) -> tuple:
    parts = [p for p in raw.replace(";", ",").split(",") if p.strip()]
    if len(parts) != count:
        raise ValidationError(f"🚨 Config key {key} expects {count} comma-separated numbers, got {raw!r}")
    vals = tuple(_as_number(key, p.strip()) for p in parts)
    if not all(np.isfinite(vals)):
        raise ValidationError(f"🚨 Config key {key} holds non-finite values: {raw!r}")
    return vals


def _as_choice(key: str, raw: str, choices: tuple) -> str:
    val = raw.strip().lower()
    if val not in choices:
        raise ValidationError(f"🚨 Config key {key} must be one of {choices}, got {raw!r}")
    return val


@lru_cache(maxsize=8)
def get_settings(config_path: str = None) -> Settings:
    """
    Resolve settings: --config file > process environment > defaults.
    """
    values = dict(os.environ)
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise FileNotFoundError(f"🚨 Config file not found: {path}")
        values.update({k: v for k, v in dotenv_values(path).items() if v is not None})
        logger.info(f"Loaded config from {path}")

    def get(key, default=None):
        return values.get(key, default)

    dh = dict(DEFAULT_DH)
    for key in DEFAULT_DH:
        if get(key) is not None:
            dh[key] = _as_number(key, get(key))
            if not abs(dh[key]) < 2.0:
                raise ValidationError(f"🚨 Config key {key} outside physical range |x| < 2 m")

    overrides = {}
    for key, raw in values.items():
        if key.startswith("DISTORTION_PARAMS_"):
            dist_id = _as_number(key, key.rsplit("_", 1)[-1], int)
            overrides[dist_id] = _as_floats(key, raw, 5)

    settings = Settings(
        log_level=get("LOG_LEVEL", "INFO").upper(),
        seed=_as_number("EIQA_SEED", get("EIQA_SEED", "0"), int),
        workers=max(1, _as_number("EIQA_WORKERS", get("EIQA_WORKERS", "4"), int)),
        dh=dh,
        dh_negate_a=_as_bool("DH_NEGATE_A", get("DH_NEGATE_A", "false")),
        home_joints=(_as_floats("HOME_JOINTS", get("HOME_JOINTS"), 6)
                     if get("HOME_JOINTS") else DEFAULT_HOME_JOINTS),
        decision_normalization=_as_choice("DECISION_NORMALIZATION",
                                          get("DECISION_NORMALIZATION", "global"),
                                          ("global", "subset", "fixed")),
        decision_rotation_mode=_as_choice("DECISION_ROTATION_MODE",
                                          get("DECISION_ROTATION_MODE", "rotvec"),
                                          ("rotvec", "axis")),
        decision_dmax_mm=_as_number("DECISION_DMAX_MM", get("DECISION_DMAX_MM", "1700")),
        plcc_logistic=_as_bool("PLCC_LOGISTIC", get("PLCC_LOGISTIC", "false")),
        split_ratio=_as_number("SPLIT_RATIO", get("SPLIT_RATIO", "0.8")),
        split_repeats=_as_number("SPLIT_REPEATS", get("SPLIT_REPEATS", "10"), int),
        split_level=_as_choice("SPLIT_LEVEL", get("SPLIT_LEVEL", "reference"),
                               ("reference", "pair")),
        distortion_params=overrides,
    )
    if settings.decision_dmax_mm <= 0:
        raise ValidationError("🚨 Config key DECISION_DMAX_MM must be positive")
    if not 0.0 <= settings.split_ratio <= 1.0:
        raise ValidationError("🚨 Config key SPLIT_RATIO must lie in [0, 1]")
    logging.getLogger().setLevel(settings.log_level)
    return settings


# ─── Readers ──────────────────────────────────────────────────────────────────
def _read_jsonl(path: Path) -> list:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise ValidationError(f"🚨 {path}:{lineno} is not valid JSON: {e.msg}") from e
    return rows


def read_manifest(path) -> pd.DataFrame:
    path = Path(path)
    rows = _read_jsonl(path)
    if not rows:
        return pd.DataFrame(columns=MANIFEST_COLUMNS)
    df = pd.json_normalize(rows)
    df = df.rename(columns={f"tags.{c}": c for c in TAG_COLUMNS})
    for col in MANIFEST_COLUMNS:
        if col not in df.columns:
            df[col] = None
    df["id"] = df["id"].astype(int)
    df["level"] = df["level"].astype(int)
    logger.info(f"Loaded manifest {path.name}: {len(df):,} rows")
    return df[MANIFEST_COLUMNS]


def write_manifest(rows: list, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    logger.info(f"Wrote manifest {path}: {len(rows):,} rows")
    return path


def read_records(path) -> pd.DataFrame:
    """JSON-lines or CSV records, picked by suffix."""
    path = Path(path)
    if path.suffix.lower() in (".jsonl", ".json", ".ndjson"):
        df = pd.DataFrame(_read_jsonl(path))
    else:
        df = pd.read_csv(path)
    logger.debug(f"Read '{path.name}': {len(df)} rows")
    return df


def read_tags(path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype=str).fillna("")
    missing = {"ref_id", *TAG_COLUMNS} - set(df.columns)
    if missing:
        raise ValidationError(f"🚨 Tags file {path} lacks columns {sorted(missing)}")
    return df


def read_metric_scores(path) -> pd.DataFrame:
    """External per-image metric scores: {sample_id, value[, group]}."""
    path = Path(path)
    df = pd.read_csv(path, dtype={"sample_id": str})
    if not {"sample_id", "value"} <= set(df.columns):
        raise ValidationError(f"🚨 Metric file {path} needs 'sample_id' and 'value' columns")
    df["value"] = pd.to_numeric(df["value"], errors="coerce")
    bad = df["value"].isna().sum()
    if bad:
        logger.warning(f"Metric file {path.name}: {bad} non-numeric values dropped")
        df = df.dropna(subset=["value"])
    df["metric"] = path.stem
    if "group" not in df.columns:
        df["group"] = "NR"
    return df


def write_table(df: pd.DataFrame, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, lineterminator="\n", float_format="%.10g")
    logger.info(f"Wrote {path.name}: {len(df):,} rows")
    return path


# ─── Results fetcher ──────────────────────────────────────────────────────────
RESULT_FILES = {
    "manifest": "manifest.jsonl",
    "features": "features.csv",
    "cognition": "cognition_scores.csv",
    "decision": "decision_scores.csv",
    "execution": "execution_scores.csv",
    "report_cognition": "report_cognition.csv",
    "report_decision": "report_decision.csv",
    "report_execution": "report_execution.csv",
    "stage_consistency": "stage_consistency.csv",
    "subject_summary": "subject_srcc_summary.csv",
    "jnd_cognition": "jnd_cognition.csv",
    "jnd_decision": "jnd_decision.csv",
    "jnd_execution": "jnd_execution.csv",
}


def fetch_results(out_dir) -> dict:
    """Every known results table under out_dir; absent ones come back empty."""
    out_dir = Path(out_dir)
    raw = {name: pd.DataFrame() for name in RESULT_FILES}
    for name, fname in RESULT_FILES.items():
        path = out_dir / fname
        if not path.exists():
            continue
        try:
            raw[name] = read_manifest(path) if name == "manifest" else pd.read_csv(path)
            logger.debug(f"Fetched '{name}': {len(raw[name])} rows")
        except (OSError, ValueError) as e:
            logger.error(f"Error fetching '{name}': {e}")
    for path in sorted(out_dir.glob("subject_srcc_*.csv")):
        name = path.stem
        if name != "subject_srcc_summary":
            raw[name] = pd.read_csv(path, index_col=0)
    return raw
