# File: tests/conftest.py

import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from scipy import ndimage

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from imaging import save_image  # noqa: E402

SENTENCES = [
    "pick up the red block and place it in the bowl",
    "move the cup to the left side of the table",
    "push the drawer until it closes",
    "pour the water from the bottle into the glass",
    "twist the cap of the jar counterclockwise",
]
FILLERS = ["maybe", "object", "near", "thing", "area", "there"]


def textured_image(seed: int, size: int = 64) -> np.ndarray:
    """Smooth gradients plus band-limited texture; deterministic per seed."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    base = np.stack([xx, yy, 0.5 * (xx + yy)], axis=-1) * 160 + 40
    texture = ndimage.gaussian_filter(rng.normal(0, 1, (size, size, 3)), sigma=(1.5, 1.5, 0)) * 90
    return np.clip(np.rint(base + texture), 0, 255).astype(np.uint8)


@pytest.fixture
def image():
    return textured_image(7)


@pytest.fixture
def images():
    return [textured_image(s) for s in (1, 2, 3)]


def write_references(directory: Path, count: int, size: int = 64) -> list:
    directory.mkdir(parents=True, exist_ok=True)
    return [save_image(textured_image(100 + i, size), directory / f"ref{i:03d}.png") for i in range(count)]


@pytest.fixture
def reference_dir(tmp_path):
    refs = tmp_path / "refs"
    write_references(refs, 4)
    return refs


def write_tags(path: Path, ref_ids: list) -> Path:
    rows = []
    for i, ref_id in enumerate(ref_ids):
        rows.append({
            "ref_id": ref_id,
            "sim2real": ("real", "simulation")[i % 2],
            "perspective": ("first", "third")[(i // 2) % 2],
            "main_object": ("tool", "container", "food", "deformable", "articulated")[i % 5],
            "background": ("tabletop", "kitchen", "laboratory", "household", "simulated")[i % 5],
        })
    pd.DataFrame(rows).to_csv(path, index=False)
    return path


# ─── Synthetic model outputs ──────────────────────────────────────────────────
def degrade_text(text: str, level: int, rng: np.random.Generator) -> str:
    words = text.split()
    for _ in range(level):
        words[int(rng.integers(len(words)))] = FILLERS[int(rng.integers(len(FILLERS)))]
    return " ".join(words)


def text_outputs(manifest: pd.DataFrame, models=("vlm_a", "vlm_b")) -> list:
    rows = []
    for m, model in enumerate(models):
        for ref_id in sorted(manifest["ref_id"].unique()):
            for t, sentence in enumerate(SENTENCES):
                rows.append({"image_id": ref_id, "model_id": model, "task_index": t, "text": sentence})
        for r in manifest.sort_values("image_id").itertuples(index=False):
            rng = np.random.default_rng([m, r.id, r.level, len(r.ref_id)])
            for t, sentence in enumerate(SENTENCES):
                rows.append({"image_id": r.image_id, "model_id": model, "task_index": t,
                             "text": degrade_text(sentence, r.level + m, rng)})
    return rows


def _pose_fields(pos, rot, state) -> str:
    return ",".join(f"{v:.6f}" for v in (*pos, *rot, state))


def pose_outputs(manifest: pd.DataFrame, models=("vla_a", "vla_b")) -> list:
    rows = []
    for m, model in enumerate(models):
        for ref_id in sorted(manifest["ref_id"].unique()):
            for t in range(5):
                rows.append({"image_id": ref_id, "model_id": model, "task_index": t,
                             "fields": _pose_fields((400 + 10 * t, -50, 200), (0.1, 0.2 + 0.1 * t, 0.3), 1.0)})
        for r in manifest.sort_values("image_id").itertuples(index=False):
            rng = np.random.default_rng([m, r.id, r.level])
            for t in range(5):
                jitter = r.level * (5 + 3 * m)
                pos = (400 + 10 * t + rng.normal(0, jitter), -50 + rng.normal(0, jitter), 200)
                rot = (0.1 + rng.normal(0, 0.02 * r.level), 0.2 + 0.1 * t, 0.3)
                state = 1.0 if rng.random() > 0.1 * r.level else 0.0
                rows.append({"image_id": r.image_id, "model_id": model, "task_index": t,
                             "fields": _pose_fields(pos, rot, state)})
    return rows


def execution_outcomes(manifest: pd.DataFrame) -> pd.DataFrame:
    rows = []
    for r in manifest.sort_values("image_id").itertuples(index=False):
        if r.level <= 2:
            rows.append({"image_id": r.image_id, "kind": "Success", "ref_final_xyz": "", "dist_final_xyz": ""})
        elif r.level == 5 and r.id % 3 == 0:
            rows.append({"image_id": r.image_id, "kind": "EmergencyStop", "ref_final_xyz": "", "dist_final_xyz": ""})
        else:
            off = 0.01 * r.level + 0.001 * r.id
            rows.append({"image_id": r.image_id, "kind": "Failure",
                         "ref_final_xyz": "0.4;0.1;0.2", "dist_final_xyz": f"{0.4 + off:.4f};0.1;0.2"})
    return pd.DataFrame(rows)


def write_jsonl(rows: list, path: Path) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return path


@pytest.fixture
def small_manifest():
    """Two references × three distortions, no rendering."""
    rows = []
    for ref_id, tags in (("refA", ("real", "first")), ("refB", ("simulation", "third"))):
        for dist_id, level in ((1, 1), (13, 3), (18, 5)):
            rows.append({"image_id": f"{ref_id}_d{dist_id:02d}", "ref_id": ref_id, "ref": "", "dist": "",
                         "id": dist_id, "name": f"d{dist_id}", "category": "Blur", "level": level,
                         "params": [], "seed": 0, "sim2real": tags[0], "perspective": tags[1],
                         "main_object": None, "background": None, "error": None})
    return pd.DataFrame(rows)
