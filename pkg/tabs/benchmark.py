# File: tabs/benchmark.py

import streamlit as st
import pandas as pd

from data_preparation import FAMILIES

def _styled(report: pd.DataFrame):
    wide = report.pivot_table(index=["group", "metric"], columns=["slice", "indicator"],
                              values="mean", sort=False)
    flags = report.pivot_table(index=["group", "metric"], columns=["slice", "indicator"],
                               values="flag", aggfunc="first", sort=False).reindex_like(wide)

    def style(_):
        return flags.fillna("").map(
            lambda f: "font-weight: bold" if "best" in str(f).split(";")
            else "text-decoration: underline" if "second" in str(f).split(";") else ""
        )
    return wide.style.format("{:.4f}").apply(style, axis=None)

def render(raw: dict):
    st.subheader("🏁 Quality Metric Benchmark")
    done = [f for f in FAMILIES if not raw.get(f"report_{f}", pd.DataFrame()).empty]
    if not done:
        st.info("No reports yet. Run `python cli.py evaluate` then `python cli.py report`.")
        return
    family = st.selectbox("Labels", done, key="b0_family")
    report = raw[f"report_{family}"].copy()
    report["flag"] = report["flag"].fillna("")

    st.dataframe(_styled(report), use_container_width=True)
    st.caption("Mean over repetitions; **bold** best, underlined second best per column.")

    below = report[report["flag"].str.contains("below_baseline")]
    if not below.empty:
        with st.expander(f"{below['metric'].nunique()} metric(s) fall below the PSNR/SSIM baseline somewhere"):
            st.dataframe(below[["group", "metric", "slice", "indicator", "mean"]], use_container_width=True)
