# File: tabs/sensitivity.py

import streamlit as st
import pandas as pd
import plotly.express as px

from stats_eval import JNDLabel
from utils import family_picker, jnd_shares

def render(df: pd.DataFrame):
    st.subheader("🎚️ JND Sensitivity")
    family = family_picker(df, key="s3_family")
    if family is None:
        return

    shares = jnd_shares(df, family)
    fig = px.bar(
        shares, x="share", y="name", color="JND", orientation="h",
        category_orders={"JND": [lab.value for lab in JNDLabel]},
        title=f"Share of Mild / Medium / Severe {family} samples per distortion",
    )
    fig.update_layout(xaxis=dict(tickformat=".0%"), height=800, template="plotly_white")
    st.plotly_chart(fig, use_container_width=True, key="s3_bar")
