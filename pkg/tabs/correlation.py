# File: tabs/correlation.py

import numpy as np
import pandas as pd
import streamlit as st

from data_preparation import FAMILIES
from utils import display_heatmap

def render(raw: dict, labels: pd.DataFrame):
    st.subheader("🧭 Subject Agreement")

    shown = 0
    cols = st.columns(len(FAMILIES))
    for col, family in zip(cols, FAMILIES):
        matrix = raw.get(f"subject_srcc_{family}")
        if matrix is None or matrix.empty:
            continue
        off = matrix.to_numpy()[~np.eye(len(matrix), dtype=bool)]
        with col:
            display_heatmap(matrix, f"{family.title()} SRCC (mean {off.mean():.2f})",
                            key=f"c1_{family}", zmin=-1, zmax=1, color_continuous_scale="Blues")
        shown += 1
    if not shown:
        st.info("Subject matrices need at least two models per family. Run `python cli.py correlate`.")

    st.markdown("---")
    st.subheader("🔗 Stage Consistency")
    stage = raw.get("stage_consistency", pd.DataFrame())
    if stage.empty:
        st.info("Needs labels from at least two of Cognition, Decision and Execution.")
    else:
        st.dataframe(stage.style.format({"srcc": "{:.3f}", "krcc": "{:.3f}", "plcc": "{:.3f}"}),
                     use_container_width=True)
