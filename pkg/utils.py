# File: utils.py

import pandas as pd
import plotly.express as px
import streamlit as st

from data_preparation import FAMILIES, summarize_by_distortion

pd.set_option("styler.render.max_elements", 500_000)

# ──────────────────────────────────────────────────────────────────────────────
# FAMILY PICKER
# ──────────────────────────────────────────────────────────────────────────────
def available_families(df: pd.DataFrame) -> list:
    return [f for f in FAMILIES if f in df.columns and df[f].notna().any()]

def family_picker(df: pd.DataFrame, key: str):
    """Selectbox over the score families present; None (with a notice) if there are none."""
    families = available_families(df)
    if not families:
        st.info("No score tables yet. Run a `score-*` command.")
        return None
    return st.selectbox("Score family", families, key=key)

# ──────────────────────────────────────────────────────────────────────────────
# HEATMAPS
# ──────────────────────────────────────────────────────────────────────────────
@st.cache_data
def distortion_level_pivot(df: pd.DataFrame, family: str) -> pd.DataFrame:
    # 1) Mean label per (distortion, level)
    summary = summarize_by_distortion(df, family)
    # 2) Keep registry order on the rows
    summary["Distortion"] = summary["id"].map("{:02d}".format) + " " + summary["name"]
    return summary.pivot(index="Distortion", columns="level", values="mean").sort_index()

def display_heatmap(pivot: pd.DataFrame, title: str, key: str, fmt: str = ".2f", **kwargs) -> None:
    fig = px.imshow(
        pivot,
        text_auto=fmt,
        aspect="auto",
        title=title,
        **kwargs,
    )
    st.plotly_chart(fig, use_container_width=True, key=key)

# ──────────────────────────────────────────────────────────────────────────────
# JND SHARES
# ──────────────────────────────────────────────────────────────────────────────
@st.cache_data
def jnd_shares(df: pd.DataFrame, family: str) -> pd.DataFrame:
    col = f"jnd_{family}"
    tmp = df.dropna(subset=[col])
    shares = (
        tmp.groupby(["name", col]).size()
        .groupby(level=0).transform(lambda s: s / s.sum())
        .rename("share")
        .reset_index()
        .rename(columns={col: "JND"})
    )
    return shares
