# File: tabs/low_level.py

import streamlit as st
import pandas as pd
import plotly.express as px

from data_preparation import attach_features
from utils import available_families

FEATURES = ["luminance", "contrast", "chrominance", "blur", "spatial_information"]

def render(raw: dict, df: pd.DataFrame):
    st.subheader("🔬 Low-level Features")
    feats = raw.get("features", pd.DataFrame())
    if feats.empty:
        st.info("No features yet. Run `python cli.py features`.")
        return
    data = attach_features(feats, df)
    data = data[data["image_id"].isin(df["image_id"])]

    feature = st.selectbox("Feature", FEATURES, key="f4_feature")
    fig = px.box(data, x="category", y=feature, color="category", title=f"{feature} by distortion category")
    st.plotly_chart(fig, use_container_width=True, key="f4_box")

    families = available_families(data)
    if families:
        family = st.selectbox("Against score", families, key="f4_family")
        fig_s = px.scatter(data, x=feature, y=family, color="category", opacity=0.6,
                           title=f"{feature} vs {family} score")
        st.plotly_chart(fig_s, use_container_width=True, key="f4_scatter")
