# File: cli.py

import argparse
import logging
import sys
from pathlib import Path

import pandas as pd

from database import (
    get_settings, read_manifest, read_metric_scores, read_records, read_tags,
    write_manifest, write_table,
)
from data_preparation import (
    FAMILIES, build_labels, jnd_table, subject_scores, summarize_by_distortion, summarize_by_tag,
)
from distortions import generate_pairs, level_psnr_table, monotonicity_violations, plan_pairs
from errors import ValidationError
from features import low_level_features
from harness import baseline_scores, collect_metrics, repeat_protocol, split_table, stage_consistency, summarize_runs
from imaging import load_image
from kinematics import DHTable, score_execution_outcomes
from pose_score import score_pose_outputs
from report import emit_report
from stats_eval import subject_correlation_matrix
from text_score import parse_task, score_text_outputs, validate_image_tasks

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")
SCORE_FILES = {f: f"{f}_scores.csv" for f in FAMILIES}
LEVEL_CHECK_IMAGES = 3


# ─── Shared loaders ───────────────────────────────────────────────────────────
def _manifest_path(args) -> Path:
    return Path(args.manifest) if args.manifest else Path(args.out) / "manifest.jsonl"


def _load_manifest(args) -> pd.DataFrame:
    path = _manifest_path(args)
    if not path.exists():
        raise FileNotFoundError(f"🚨 Manifest not found: {path}. Run 'corrupt' first.")
    return read_manifest(path)


def _load_scores(out_dir: Path) -> dict:
    scores = {}
    for family, fname in SCORE_FILES.items():
        path = out_dir / fname
        if path.exists():
            scores[family] = pd.read_csv(path, dtype={"image_id": str, "model_id": str})
        else:
            logger.debug(f"No {fname} in {out_dir}")
    return scores


def _load_labels(args) -> pd.DataFrame:
    return build_labels(_load_manifest(args), _load_scores(Path(args.out)))


def _reference_images(directory) -> list:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"🚨 Reference directory not found: {directory}")
    refs = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not refs:
        raise ValidationError(f"🚨 No reference images under {directory}")
    return refs


# ─── Commands ─────────────────────────────────────────────────────────────────
def cmd_corrupt(args, settings):
    out = Path(args.out)
    refs = _reference_images(args.references)
    tags = read_tags(args.tags) if args.tags else None
    overrides = settings.distortion_params
    if args.dry_run:
        rows = plan_pairs(refs, args.seed, tags=tags, out_dir=out, overrides=overrides)
    else:
        rows = generate_pairs(refs, args.seed, out, tags=tags, overrides=overrides, workers=settings.workers)
    write_manifest(rows, _manifest_path(args))

    if args.check_levels:
        images = [load_image(p) for p in refs[:LEVEL_CHECK_IMAGES]]
        table = level_psnr_table(images, args.seed, overrides)
        write_table(table, out / "level_psnr.csv")
        monotonicity_violations(table)


def cmd_features(args, settings):
    manifest = _load_manifest(args)
    ok = manifest[manifest["error"].isna()]
    recs = []
    for row in ok.itertuples(index=False):
        feats = low_level_features(load_image(row.dist))
        recs.append({"image_id": row.image_id, "ref_id": row.ref_id, "id": row.id,
                     "category": row.category, "level": row.level, **feats.as_dict()})
    logger.info(f"Extracted low-level features for {len(recs):,} images")
    write_table(pd.DataFrame(recs), Path(args.out) / "features.csv")


def _check_tasks(path):
    tasks = read_records(path)
    missing = {"ref_id", "verb", "instruction", "difficulty"} - set(tasks.columns)
    if missing:
        raise ValidationError(f"🚨 Task file {path} lacks columns {sorted(missing)}")
    for ref_id, grp in tasks.groupby("ref_id", sort=True):
        validate_image_tasks([parse_task(r.verb, r.instruction, r.difficulty) for r in grp.itertuples()])
    logger.info(f"Validated task sets for {tasks['ref_id'].nunique():,} references")


def cmd_score_cognition(args, settings):
    if args.tasks:
        _check_tasks(args.tasks)
    scores = score_text_outputs(read_records(args.outputs), _load_manifest(args))
    write_table(scores, Path(args.out) / SCORE_FILES["cognition"])


def cmd_score_decision(args, settings):
    scores = score_pose_outputs(
        read_records(args.outputs), _load_manifest(args),
        mode=settings.decision_normalization,
        rotation_mode=settings.decision_rotation_mode,
        dmax_mm=settings.decision_dmax_mm,
    )
    write_table(scores, Path(args.out) / SCORE_FILES["decision"])


def cmd_score_execution(args, settings):
    outcomes = pd.read_csv(args.outcomes, dtype={"image_id": str, "ref_final_xyz": str, "dist_final_xyz": str})
    trajectories = read_records(args.trajectories) if args.trajectories else None
    table = DHTable.from_settings(settings)
    table.check_ur_layout()
    scores = score_execution_outcomes(outcomes, trajectories, table, settings.home_joints)
    write_table(scores, Path(args.out) / SCORE_FILES["execution"])


def cmd_correlate(args, settings):
    out = Path(args.out)
    manifest = _load_manifest(args)
    scores = _load_scores(out)
    if not scores:
        raise FileNotFoundError(f"🚨 No score tables in {out}. Run a score-* command first.")

    # 1) SUBJECT agreement per family
    summary = []
    for family, df in scores.items():
        table = subject_scores(df, family)
        if table.shape[1] < 2:
            logger.warning(f"{family}: only {table.shape[1]} subject model(s); no agreement matrix")
            continue
        matrix, mean_srcc = subject_correlation_matrix(table)
        write_table(matrix.rename_axis("model_id").reset_index(), out / f"subject_srcc_{family}.csv")
        summary.append({"family": family, "models": table.shape[1], "images": len(table), "mean_srcc": mean_srcc})
        logger.info(f"{family}: mean subject SRCC {mean_srcc:.4f} over {table.shape[1]} models")
    write_table(pd.DataFrame(summary, columns=["family", "models", "images", "mean_srcc"]),
                out / "subject_srcc_summary.csv")

    # 2) STAGE consistency and distributions
    labels = build_labels(manifest, scores)
    write_table(stage_consistency(labels, settings.plcc_logistic), out / "stage_consistency.csv")
    for family in scores:
        write_table(summarize_by_distortion(labels, family), out / f"distribution_{family}.csv")
        write_table(summarize_by_tag(labels, family), out / f"distribution_tags_{family}.csv")


def cmd_jnd(args, settings):
    write_table(jnd_table(_load_labels(args), args.family), Path(args.out) / f"jnd_{args.family}.csv")


def cmd_split(args, settings):
    ratio = settings.split_ratio if args.ratio is None else args.ratio
    level = args.level or settings.split_level
    write_table(split_table(_load_manifest(args), ratio, args.seed, level), Path(args.out) / "split.csv")


def cmd_evaluate(args, settings):
    manifest = _load_manifest(args)
    labels = build_labels(manifest, _load_scores(Path(args.out)))
    frames = [read_metric_scores(p) for p in args.metric or []]
    if not args.no_baselines:
        frames.insert(0, baseline_scores(manifest, workers=settings.workers))
    metrics = collect_metrics(frames)
    repeats = settings.split_repeats if args.repeats is None else args.repeats
    _, runs = repeat_protocol(metrics, labels, splits=repeats, seed=args.seed, family=args.family,
                              ratio=settings.split_ratio, level=settings.split_level,
                              logistic_fit=settings.plcc_logistic)
    write_table(runs, Path(args.out) / f"evaluation_{args.family}.csv")


def cmd_report(args, settings):
    out = Path(args.out)
    path = out / f"evaluation_{args.family}.csv"
    if not path.exists():
        raise FileNotFoundError(f"🚨 {path} not found. Run 'evaluate --family {args.family}' first.")
    runs = pd.read_csv(path, dtype={"metric": str, "group": str, "slice": str, "indicator": str})
    emit_report(summarize_runs(runs, args.family), args.family).write(out, args.family)


COMMANDS = {
    "corrupt": cmd_corrupt,
    "features": cmd_features,
    "score-cognition": cmd_score_cognition,
    "score-decision": cmd_score_decision,
    "score-execution": cmd_score_execution,
    "correlate": cmd_correlate,
    "jnd": cmd_jnd,
    "split": cmd_split,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


# ─── Parser ───────────────────────────────────────────────────────────────────
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cli.py", description="Embodied image quality benchmark pipeline")
    parser.add_argument("--seed", type=int, default=None, help="Seed for every randomized step (default: EIQA_SEED)")
    parser.add_argument("--manifest", default=None, help="Manifest path (default: <out>/manifest.jsonl)")
    parser.add_argument("--out", default="out", help="Output directory")
    parser.add_argument("--config", default=None, help="Key-value config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("corrupt", help="Generate distorted images and the pair manifest")
    p.add_argument("--references", required=True)
    p.add_argument("--tags", default=None)
    p.add_argument("--dry-run", action="store_true")
    p.add_argument("--check-levels", action="store_true")

    sub.add_parser("features", help="Low-level features of every distorted image")

    p = sub.add_parser("score-cognition", help="Score VLM text outputs")
    p.add_argument("--outputs", required=True)
    p.add_argument("--tasks", default=None)

    p = sub.add_parser("score-decision", help="Score VLA pose outputs")
    p.add_argument("--outputs", required=True)

    p = sub.add_parser("score-execution", help="Score robot execution outcomes")
    p.add_argument("--outcomes", required=True)
    p.add_argument("--trajectories", default=None)

    sub.add_parser("correlate", help="Subject agreement, stage consistency and distributions")

    p = sub.add_parser("jnd", help="Mild/Medium/Severe partition of a family")
    p.add_argument("--family", choices=FAMILIES, default="decision")

    p = sub.add_parser("split", help="Reference-level train/val split")
    p.add_argument("--ratio", type=float, default=None)
    p.add_argument("--level", choices=("reference", "pair"), default=None)

    p = sub.add_parser("evaluate", help="Repeated split evaluation of quality metrics")
    p.add_argument("--family", choices=FAMILIES, default="decision")
    p.add_argument("--metric", nargs="*", default=[])
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--no-baselines", action="store_true")

    p = sub.add_parser("report", help="Markdown and CSV benchmark tables")
    p.add_argument("--family", choices=FAMILIES, default="decision")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = get_settings(args.config)
        if args.seed is None:
            args.seed = settings.seed
        COMMANDS[args.command](args, settings)
    except ValidationError as e:
        logger.error(str(e))
        return 1
    except OSError as e:
        logger.error(f"🚨 I/O error: {e}")
        return 2
    except Exception as e:
        logger.exception(f"Unexpected failure in '{args.command}'")
        raise RuntimeError(f"🚨 Command '{args.command}' failed: {e}") from e
    return 0


if __name__ == "__main__":
    sys.exit(main())
