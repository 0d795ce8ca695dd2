# File: tabs/distribution.py

import streamlit as st
import pandas as pd
import plotly.express as px

from database import TAG_COLUMNS
from utils import distortion_level_pivot, display_heatmap, family_picker

def render(df: pd.DataFrame):
    st.subheader("🌡️ Score Distribution")
    family = family_picker(df, key="d2_family")
    if family is None:
        return

    # Distortion × level heatmap
    pivot = distortion_level_pivot(df, family)
    display_heatmap(pivot, f"Mean {family} score by distortion and level", key="d2_heat",
                    labels={"x": "Level", "y": "Distortion", "color": family})

    st.markdown("---")

    # Per-tag box plots
    tagged = [t for t in TAG_COLUMNS if df[t].notna().any()]
    if not tagged:
        st.info("No content tags in the manifest. Pass `--tags` to `corrupt`.")
        return
    for tag in tagged:
        with st.expander(f"By {tag}", expanded=tag == tagged[0]):
            fig = px.box(df.dropna(subset=[tag, family]), x=tag, y=family, points="outliers",
                         title=f"{family.title()} score by {tag}")
            st.plotly_chart(fig, use_container_width=True, key=f"d2_box_{tag}")
