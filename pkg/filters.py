# File: filters.py

import pandas as pd
import streamlit as st

@st.cache_data(show_spinner=False)
def get_unique(df: pd.DataFrame, col: str) -> list:
    """Return sorted unique non-null values for a given column."""
    if col in df.columns:
        return sorted(df[col].dropna().unique().tolist())
    return []

def _multiselect(df: pd.DataFrame, col: str, label: str, key: str) -> pd.Series:
    options = get_unique(df, col)
    chosen = st.sidebar.multiselect(label, ["All"] + options, default=["All"], key=key)
    if "All" in chosen:
        return pd.Series(True, index=df.index)
    return df[col].isin(chosen)

def apply_filters(df: pd.DataFrame) -> pd.DataFrame:
    st.sidebar.header("🔎 Filters")

    # Content tags
    mask = _multiselect(df, "sim2real", "Sim2Real", "filt_sim2real")
    mask &= _multiselect(df, "perspective", "Perspective", "filt_perspective")

    # Distortion category & level
    mask &= _multiselect(df, "category", "Distortion category", "filt_category")
    mask &= _multiselect(df, "level", "Distortion level", "filt_level")

    return df.loc[mask].copy()
