# File: report.py

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from errors import ValidationError
from harness import INDICATORS, LOGISTIC_INDICATOR, METRIC_GROUPS

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["group", "metric", "slice", "indicator", "mean", "std", "n", "repeats", "flag"]
DECIMALS = 4


@dataclass(frozen=True)
class ReportDocument:
    markdown: str
    csv: str
    table: pd.DataFrame

    def write(self, out_dir, family: str) -> tuple:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        md_path = out_dir / f"report_{family}.md"
        csv_path = out_dir / f"report_{family}.csv"
        md_path.write_text(self.markdown, encoding="utf-8", newline="\n")
        csv_path.write_text(self.csv, encoding="utf-8", newline="\n")
        logger.info(f"Wrote {md_path.name} and {csv_path.name}: {len(self.table):,} rows")
        return md_path, csv_path


# ─── Flags ────────────────────────────────────────────────────────────────────
def _flag_column(col: pd.DataFrame) -> pd.Series:
    """Best / second-best across all metrics; FR and NR values under the best Zero value."""
    rounded = col["mean"].round(DECIMALS)
    distinct = sorted(rounded.dropna().unique(), reverse=True)
    zero = rounded[col["group"] == "Zero"].dropna()
    baseline = zero.max() if not zero.empty else None

    flags = []
    for group, val in zip(col["group"], rounded):
        parts = []
        if distinct and val == distinct[0]:
            parts.append("best")
        elif len(distinct) > 1 and val == distinct[1]:
            parts.append("second")
        if baseline is not None and group != "Zero" and val < baseline:
            parts.append("below_baseline")
        flags.append(";".join(parts))
    return pd.Series(flags, index=col.index)


def flag_table(summary: pd.DataFrame) -> pd.DataFrame:
    df = summary.copy()
    df["flag"] = ""
    for _, col in df.groupby(["slice", "indicator"], sort=False):
        df.loc[col.index, "flag"] = _flag_column(col)
    return df


# ─── Markdown ─────────────────────────────────────────────────────────────────
def _cell(mean: float, flag: str) -> str:
    if mean is None or (isinstance(mean, float) and np.isnan(mean)):
        return "-"
    text = f"{mean:.{DECIMALS}f}"
    if "best" in flag.split(";"):
        text = f"**{text}**"
    elif "second" in flag.split(";"):
        text = f"<u>{text}</u>"
    if "below_baseline" in flag:
        text += "↓"
    return text


def _markdown(df: pd.DataFrame, title: str) -> str:
    slices = list(dict.fromkeys(df["slice"]))
    indicators = [i for i in (*INDICATORS, LOGISTIC_INDICATOR) if i in set(df["indicator"])]
    columns = [(s, i) for s in slices for i in indicators]

    lines = [f"# {title}", ""]
    lines.append("| Group | Metric | " + " | ".join(f"{s} {i}↑" for s, i in columns) + " |")
    lines.append("|" + "---|" * (len(columns) + 2))
    cells = {(r.metric, r.slice, r.indicator): (r.mean, r.flag) for r in df.itertuples(index=False)}
    for (group, metric), _ in df.groupby(["group", "metric"], sort=False):
        row = [_cell(*cells.get((metric, s, i), (None, ""))) for s, i in columns]
        lines.append(f"| {group} | {metric} | " + " | ".join(row) + " |")
    repeats = int(df["repeats"].max()) if len(df) else 0
    lines += ["", f"Mean over {repeats} repetitions. **best**, <u>second</u>, ↓ below the best Zero-group baseline.", ""]
    return "\n".join(lines)


# ─── Report ───────────────────────────────────────────────────────────────────
def emit_report(reports, family: str = None) -> ReportDocument:
    """
    Render evaluation summaries {group, metric, slice, indicator, mean, std, n, repeats}
    as a wide Markdown table and a long-form CSV. Identical inputs give identical bytes.
    """
    frames = [reports] if isinstance(reports, pd.DataFrame) else list(reports)
    if not frames or all(f.empty for f in frames):
        raise ValidationError("🚨 emit_report needs at least one evaluation summary")
    df = pd.concat([f for f in frames if not f.empty], ignore_index=True)
    missing = set(REPORT_COLUMNS[:-1]) - set(df.columns)
    if missing:
        raise ValidationError(f"🚨 Evaluation summary lacks columns {sorted(missing)}")

    # group order Zero, FR, NR; otherwise input order
    df["group"] = pd.Categorical(df["group"], categories=METRIC_GROUPS, ordered=True)
    df = df.sort_values("group", kind="stable").reset_index(drop=True)
    df["group"] = df["group"].astype(str)

    df = flag_table(df)[REPORT_COLUMNS]
    title = f"{family.title()} evaluation" if family else "Evaluation"
    markdown = _markdown(df, title)
    csv = df.to_csv(index=False, lineterminator="\n", float_format=f"%.{DECIMALS + 2}f")
    return ReportDocument(markdown=markdown, csv=csv, table=df)
