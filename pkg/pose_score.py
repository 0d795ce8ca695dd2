# File: pose_score.py

import json
import logging
import re
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
import pandas as pd
from scipy.spatial.transform import Rotation

from errors import PoseParseError, ValidationError
from text_score import TASKS_PER_IMAGE, attach_image_score

logger = logging.getLogger(__name__)

ROT_EPS = 1e-9
DEFAULT_DMAX_MM = 1700.0
APPROACH_AXIS = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class Pose7:
    position: tuple
    rotation: tuple
    state: float


@dataclass(frozen=True)
class DecisionDims:
    position: float
    rotation: float
    state: float

    def __post_init__(self):
        vals = (self.position, self.rotation, self.state)
        if not np.all(np.isfinite(vals)) or min(vals) < 0.0 or max(vals) > 1.0:
            raise ValidationError(f"🚨 Decision dims must lie in [0, 1], got {vals}")

    def mean(self) -> float:
        return (self.position + self.rotation + self.state) / 3.0


class RawMeasures(NamedTuple):
    pos_dist: float
    rot_sim: float
    state_diff: float


# ─── Parsing ──────────────────────────────────────────────────────────────────
_SPLIT_RE = re.compile(r"[\s,;]+")


def split_fields(raw) -> list:
    """Field list from a JSON array, a delimited string, or a sequence."""
    if isinstance(raw, str):
        text = raw.strip()
        if text.startswith("["):
            try:
                return list(json.loads(text))
            except json.JSONDecodeError:
                text = text.strip("[]")
        return [f for f in _SPLIT_RE.split(text) if f]
    if raw is None or np.isscalar(raw):
        return []
    return list(raw)


def parse_pose(raw_fields) -> Pose7:
    """First 7 fields → Pose7; anything beyond (depth etc.) is dropped; state clamped to [0, 1]."""
    fields = split_fields(raw_fields)
    if len(fields) < 7:
        raise PoseParseError(f"expected at least 7 fields, got {len(fields)}", field_index=len(fields))
    vals = []
    for i, f in enumerate(fields[:7]):
        try:
            v = float(f)
        except (TypeError, ValueError) as e:
            raise PoseParseError(f"non-numeric value {f!r}", field_index=i) from e
        if not np.isfinite(v):
            raise PoseParseError(f"non-finite value {f!r}", field_index=i)
        vals.append(v)
    return Pose7(position=tuple(vals[0:3]), rotation=tuple(vals[3:6]),
                 state=float(np.clip(vals[6], 0.0, 1.0)))


def _positions(trajectory) -> np.ndarray:
    pts = [p.position if isinstance(p, Pose7) else p for p in trajectory]
    return np.asarray(pts, dtype=float).reshape(len(pts), -1)


def path_length(trajectory) -> float:
    pts = _positions(trajectory)
    if len(pts) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def select_dominant_arm(arm_a, arm_b) -> int:
    """0 for arm_a, 1 for arm_b; the longer summed path wins, ties go to arm_a."""
    if len(arm_a) == 0 or len(arm_b) == 0:
        raise ValidationError("🚨 Both arm trajectories must be non-empty")
    return 1 if path_length(arm_b) > path_length(arm_a) else 0


# ─── Raw measures ─────────────────────────────────────────────────────────────
def _check_pose(p: Pose7):
    vals = (*p.position, *p.rotation, p.state)
    if len(vals) != 7 or not np.all(np.isfinite(vals)):
        raise ValidationError(f"🚨 Pose must hold 7 finite values, got {vals}")


def rotation_similarity(rot_a, rot_b, mode: str = "rotvec") -> float:
    a = np.asarray(rot_a, dtype=float)
    b = np.asarray(rot_b, dtype=float)
    if mode == "axis":
        a = Rotation.from_rotvec(a).apply(APPROACH_AXIS)
        b = Rotation.from_rotvec(b).apply(APPROACH_AXIS)
    elif mode != "rotvec":
        raise ValidationError(f"🚨 Unknown rotation mode {mode!r}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < ROT_EPS and nb < ROT_EPS:
        return 1.0
    if na < ROT_EPS or nb < ROT_EPS:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def raw_decision_measures(ref: Pose7, dist: Pose7, rotation_mode: str = "rotvec") -> RawMeasures:
    _check_pose(ref)
    _check_pose(dist)
    return RawMeasures(
        pos_dist=float(np.linalg.norm(np.subtract(ref.position, dist.position))),
        rot_sim=rotation_similarity(ref.rotation, dist.rotation, rotation_mode),
        state_diff=abs(ref.state - dist.state),
    )


# ─── Normalization ────────────────────────────────────────────────────────────
def _minmax(values: pd.Series, higher_is_better: bool) -> pd.Series:
    lo, hi = values.min(), values.max()
    if not hi > lo:
        return pd.Series(1.0, index=values.index)
    scaled = (values - lo) / (hi - lo) if higher_is_better else (hi - values) / (hi - lo)
    return scaled.clip(0.0, 1.0)


def _batch_minmax(df: pd.DataFrame) -> pd.DataFrame:
    return pd.DataFrame({
        "position": _minmax(df["pos_dist"], higher_is_better=False),
        "rotation": _minmax(df["rot_sim"], higher_is_better=True),
        "state": _minmax(df["state_diff"], higher_is_better=False),
    }, index=df.index)


def normalize_decision_batch(raw, mode: str = "global", group_col: str = "id",
                             dmax_mm: float = DEFAULT_DMAX_MM):
    """
    Raw measures → DecisionDims with 1 = most faithful.

    global: min-max per dimension over the whole batch (constant → 1.0).
    subset: the same, within each value of group_col (distortion id).
    fixed:  streaming bounds; position against dmax_mm, rotation (s+1)/2, state 1−diff.
    Accepts a DataFrame (returns one) or a sequence of RawMeasures (returns DecisionDims).
    """
    as_list = not isinstance(raw, pd.DataFrame)
    df = pd.DataFrame(list(raw), columns=list(RawMeasures._fields)) if as_list else raw
    if df.empty:
        return [] if as_list else pd.DataFrame(columns=["position", "rotation", "state"])

    if mode == "global":
        dims = _batch_minmax(df)
    elif mode == "subset":
        if group_col not in df.columns:
            raise ValidationError(f"🚨 Subset normalization needs column {group_col!r}")
        dims = pd.concat([_batch_minmax(g) for _, g in df.groupby(group_col, sort=True)]).loc[df.index]
    elif mode == "fixed":
        dims = pd.DataFrame({
            "position": (1.0 - df["pos_dist"] / dmax_mm).clip(0.0, 1.0),
            "rotation": ((df["rot_sim"] + 1.0) / 2.0).clip(0.0, 1.0),
            "state": (1.0 - df["state_diff"]).clip(0.0, 1.0),
        }, index=df.index)
    else:
        raise ValidationError(f"🚨 Unknown normalization mode {mode!r}")

    if as_list:
        return [DecisionDims(*row) for row in dims[["position", "rotation", "state"]].itertuples(index=False)]
    return dims


def decision_image_score(per_task_dims: Sequence[DecisionDims]) -> float:
    if len(per_task_dims) != TASKS_PER_IMAGE:
        raise ValidationError(f"🚨 Decision image score needs exactly 5 tasks, got {len(per_task_dims)}")
    dims = [d if isinstance(d, DecisionDims) else DecisionDims(*d) for d in per_task_dims]
    return float(sum(d.mean() for d in dims))


def _task_means_total(task_means) -> float:
    means = np.asarray(task_means, dtype=float)
    if means.shape != (TASKS_PER_IMAGE,):
        raise ValidationError(f"🚨 Decision image score needs exactly 5 tasks, got {means.shape}")
    return float(means.sum())


# ─── Batch scoring ────────────────────────────────────────────────────────────
def _final_poses(rows: pd.DataFrame) -> pd.DataFrame:
    """Reduce multi-step outputs to the final step per (image, model, task, arm)."""
    keys = ["image_id", "model_id", "task_index", "arm_id"]
    rows = rows.sort_values(keys + ["step"], kind="stable")
    traj = rows.groupby(keys, sort=True)["pose"].agg(list).rename("trajectory")
    final = rows.groupby(keys, sort=True)["pose"].last().rename("pose")
    return pd.concat([final, traj], axis=1).reset_index()


def _dominant(ref_arms: pd.DataFrame) -> str:
    arms = sorted(ref_arms["arm_id"].tolist())
    if len(arms) == 1:
        return arms[0]
    if len(arms) > 2:
        logger.warning(f"More than two arms ({arms}); comparing the first two")
    by_arm = ref_arms.set_index("arm_id")["trajectory"]
    return arms[select_dominant_arm(by_arm[arms[0]], by_arm[arms[1]])]


def score_pose_outputs(outputs: pd.DataFrame, manifest: pd.DataFrame, mode: str = "global",
                       rotation_mode: str = "rotvec", dmax_mm: float = DEFAULT_DMAX_MM) -> pd.DataFrame:
    """Decision scores for every distorted output paired with the same model's reference output."""
    # 1) ENSURE columns
    needed = {"image_id", "model_id", "task_index", "fields"}
    if not needed <= set(outputs.columns):
        raise ValidationError(f"🚨 Pose outputs need columns {sorted(needed)}, got {outputs.columns.tolist()}")
    df = outputs.copy()
    for col in ("image_id", "model_id"):
        df[col] = df[col].astype(str)
    df["task_index"] = df["task_index"].astype(int)
    df["arm_id"] = df["arm_id"].fillna("0").astype(str) if "arm_id" in df.columns else "0"
    df["step"] = pd.to_numeric(df["step"], errors="coerce").fillna(0) if "step" in df.columns else 0

    # 2) PARSE poses, recording row-level errors
    poses, errors = [], 0
    for idx, raw in df["fields"].items():
        try:
            poses.append(parse_pose(raw))
        except PoseParseError as e:
            errors += 1
            logger.warning(f"Pose row {idx} ({df.at[idx, 'image_id']}): {e}")
            poses.append(None)
    df["pose"] = poses
    df = df[df["pose"].notna()]
    logger.info(f"Parsed {len(df):,} pose rows ({errors:,} errors)")

    # 3) FINAL step per arm, then dominant arm from the reference trajectory
    finals = _final_poses(df)
    ref_ids = set(manifest["ref_id"].astype(str))
    dist_map = manifest.set_index("image_id")["ref_id"].astype(str).to_dict()
    id_map = manifest.set_index("image_id")["id"].to_dict()
    refs = finals[finals["image_id"].isin(ref_ids)]
    dists = finals[finals["image_id"].isin(dist_map)].copy()
    orphans = finals[~finals["image_id"].isin(ref_ids | set(dist_map))]
    if not orphans.empty:
        logger.warning(f"{len(orphans):,} pose rows reference unknown images, e.g. {orphans['image_id'].iloc[0]!r}")

    arm_choice = {key: _dominant(grp) for key, grp in refs.groupby(["image_id", "model_id", "task_index"])}
    ref_pose = {(r.image_id, r.model_id, r.task_index, r.arm_id): r.pose for r in refs.itertuples(index=False)}

    # 4) RAW measures per distorted task
    recs = []
    dists["ref_id"] = dists["image_id"].map(dist_map)
    for key, grp in dists.groupby(["image_id", "model_id", "task_index"], sort=True):
        image_id, model_id, task_index = key
        ref_id = dist_map[image_id]
        arm = arm_choice.get((ref_id, model_id, task_index))
        if arm is None:
            logger.warning(f"No reference pose for {ref_id}/{model_id}/task {task_index}; skipped")
            continue
        match = grp[grp["arm_id"] == arm]
        if match.empty:
            if len(grp) > 1:
                logger.warning(f"Arm {arm!r} missing for {image_id}/{model_id}/task {task_index}; skipped")
                continue
            match = grp
        raw = raw_decision_measures(ref_pose[(ref_id, model_id, task_index, arm)],
                                    match.iloc[0]["pose"], rotation_mode)
        recs.append({"image_id": image_id, "model_id": model_id, "task_index": task_index,
                     "id": id_map.get(image_id), **raw._asdict()})
    raw_df = pd.DataFrame(recs, columns=["image_id", "model_id", "task_index", "id",
                                         "pos_dist", "rot_sim", "state_diff"])

    # 5) NORMALIZE and total
    dims = normalize_decision_batch(raw_df, mode=mode, dmax_mm=dmax_mm)
    scores = pd.concat([raw_df, dims], axis=1)
    scores["task_score"] = scores[["position", "rotation", "state"]].mean(axis=1)
    scores = attach_image_score(scores.drop(columns=["id"]), _task_means_total)
    return scores[["image_id", "model_id", "task_index", "position", "rotation", "state",
                   "task_score", "image_score", "pos_dist", "rot_sim", "state_diff"]]
