# File: dashboard_ui.py

import streamlit as st

import tabs.benchmark as tab0, tabs.correlation as tab1, tabs.distribution as tab2
import tabs.sensitivity as tab3, tabs.low_level as tab4

def dashboard(raw, labels, df):
    tabs=st.tabs(["Benchmark","Correlation","Distribution","Sensitivity","Features"])
    with tabs[0]: tab0.render(raw)
    with tabs[1]: tab1.render(raw, labels)
    with tabs[2]: tab2.render(df)
    with tabs[3]: tab3.render(df)
    with tabs[4]: tab4.render(raw, df)
