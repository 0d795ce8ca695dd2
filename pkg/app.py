# File: app.py

import os

import streamlit as st
from database import fetch_results
from data_preparation import FAMILIES, attach_jnd, build_labels
from filters import apply_filters
from dashboard_ui import dashboard

st.set_page_config(page_title="Embodied IQA Benchmark", layout="wide")

@st.cache_data
def load_data(out_dir: str):
    raw = fetch_results(out_dir)
    if raw["manifest"].empty:
        return raw, raw["manifest"]
    scores = {f: raw[f] for f in FAMILIES if not raw[f].empty}
    labels = build_labels(raw["manifest"], scores)
    for family in scores:
        labels[f"jnd_{family}"] = attach_jnd(labels, family)["jnd"]
    return raw, labels

def main():
    st.title("🤖 Embodied Image Quality Benchmark")

    # Sidebar results directory
    out_dir = st.sidebar.text_input("Results directory", value=os.getenv("EIQA_RESULTS_DIR", "out"))

    # Load and prepare
    raw, labels = load_data(out_dir)
    if labels.empty:
        st.warning(f"⚠️ No manifest found in '{out_dir}'. Run `python cli.py corrupt` first.")
        return
    df = apply_filters(labels)

    if df.empty:
        st.warning("⚠️ No images match the selected filters.")
        return

    # Render the dashboard
    dashboard(raw, labels, df)

if __name__ == "__main__":
    main()
